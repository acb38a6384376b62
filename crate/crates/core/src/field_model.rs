//! The explicit Gaussian random vector field on the sphere.
//!
//! A field instance is
//!
//! ```text
//! f_k(x) = sum_j J1[k,j] x_j + sum_{n,m} J2[k,n,m] x_n x_m
//! J1[k,j]   = V1[k,j] + alpha1 * V1[j,k]
//! J2[k,n,m] = V2[k,n,m] + alpha2 * (V2[n,k,m] + V2[n,m,k])
//! ```
//!
//! with i.i.d. centred Gaussians `V1 ~ J1^2/N`, `V2 ~ J2^2/N^2` and a magnetic
//! field `h ~ sigma^2`. The instance keeps the standard-normal "unit" draws and
//! applies the scales when it builds the coefficient tensors, so the same seed
//! at different scales reuses identical draws.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::NormalStream;

const STREAM_V1: u64 = 1;
const STREAM_V2: u64 = 2;
const STREAM_H: u64 = 3;

/// The six scalars defining the random ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n: usize,
    pub j1: f64,
    pub j2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub sigma: f64,
    /// Permits `j1 = j2 = 0` (a pure magnetic-field flow).
    #[serde(default)]
    pub field_free: bool,
}

impl ModelParams {
    pub fn new(n: usize, j1: f64, j2: f64, alpha1: f64, alpha2: f64, sigma: f64) -> Result<Self> {
        let p = Self {
            n,
            j1,
            j2,
            alpha1,
            alpha2,
            sigma,
            field_free: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// A field-free model: `f = 0`, only the magnetic field acts.
    pub fn field_free(n: usize, sigma: f64) -> Result<Self> {
        let p = Self {
            n,
            j1: 0.0,
            j2: 0.0,
            alpha1: 0.0,
            alpha2: 0.0,
            sigma,
            field_free: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("n", format!("must be at least 2 (got {})", self.n)));
        }
        for (name, v) in [("j1", self.j1), ("j2", self.j2), ("sigma", self.sigma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and nonnegative (got {v})")));
            }
        }
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite (got {v})")));
            }
        }
        if self.j1 == 0.0 && self.j2 == 0.0 && !self.field_free {
            return Err(Error::param(
                "j1",
                "j1 = j2 = 0 gives a degenerate field; set `field_free` to allow it",
            ));
        }
        Ok(())
    }

    /// Multiply `(j1, j2, sigma)` by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            j1: self.j1 * c,
            j2: self.j2 * c,
            sigma: self.sigma * c,
            ..*self
        }
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { sigma, ..*self }
    }

    /// True when the field is a gradient (`alpha1 = alpha2 = 1`).
    pub fn is_gradient(&self) -> bool {
        self.alpha1 == 1.0 && self.alpha2 == 1.0
    }

    pub fn covariance_pair(&self) -> CovariancePair {
        covariance_pair(self)
    }
}

/// `Phi1(u) = c0 + c1 u + c2 u^2` and `Phi2(u) = d0 + d1 u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariancePair {
    pub phi1: [f64; 3],
    pub phi2: [f64; 2],
}

impl CovariancePair {
    pub fn phi1(&self, u: f64) -> f64 {
        self.phi1[0] + u * (self.phi1[1] + u * self.phi1[2])
    }
    pub fn phi1_prime(&self, u: f64) -> f64 {
        self.phi1[1] + 2.0 * self.phi1[2] * u
    }
    pub fn phi1_second(&self, _u: f64) -> f64 {
        2.0 * self.phi1[2]
    }
    pub fn phi2(&self, u: f64) -> f64 {
        self.phi2[0] + self.phi2[1] * u
    }
    pub fn phi2_prime(&self, _u: f64) -> f64 {
        self.phi2[1]
    }
    pub fn phi2_second(&self, _u: f64) -> f64 {
        0.0
    }

    /// `Phi1(1) > 0`, `Phi1'(1) >= Phi1(1)`, `-Phi1(1) <= Phi2(1) <= Phi1'(1)`.
    pub fn check_admissible(&self) -> Result<()> {
        let (p1, dp1, p2) = (self.phi1(1.0), self.phi1_prime(1.0), self.phi2(1.0));
        let slack = 1e-12 * dp1.abs().max(p1.abs()).max(1.0);
        if !(p1 > 0.0) {
            return Err(Error::param("phi1", format!("Phi1(1) must be positive (got {p1})")));
        }
        if dp1 < p1 - slack {
            return Err(Error::param("phi1", format!("need Phi1'(1) >= Phi1(1) (got {dp1} < {p1})")));
        }
        if p2 < -p1 - slack || p2 > dp1 + slack {
            return Err(Error::param(
                "phi2",
                format!("need -Phi1(1) <= Phi2(1) <= Phi1'(1) (got {p2})"),
            ));
        }
        Ok(())
    }

    /// Multiply both covariance functions by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            phi1: self.phi1.map(|v| v * c),
            phi2: self.phi2.map(|v| v * c),
        }
    }
}

/// Covariances of the explicit polynomial field.
pub fn covariance_pair(params: &ModelParams) -> CovariancePair {
    let (j1s, j2s) = (params.j1 * params.j1, params.j2 * params.j2);
    let (a1, a2) = (params.alpha1, params.alpha2);
    CovariancePair {
        phi1: [0.0, (1.0 + a1 * a1) * j1s, (1.0 + 2.0 * a2 * a2) * j2s],
        phi2: [2.0 * a1 * j1s, 2.0 * a2 * (2.0 + a2) * j2s],
    }
}

/// Analytic covariances of the field and its Jacobian at a single point.
#[derive(Debug, Clone)]
pub struct JacobianCovariance {
    cov: CovariancePair,
    x: DVector<f64>,
    n: f64,
    u: f64,
}

/// Build the covariance evaluator at `x`; `u = |x|^2 / N`.
pub fn jacobian_covariance(cov: &CovariancePair, x: &DVector<f64>) -> JacobianCovariance {
    let n = x.len() as f64;
    JacobianCovariance {
        cov: *cov,
        u: x.norm_squared() / n,
        x: x.clone(),
        n,
    }
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b { 1.0 } else { 0.0 }
}

impl JacobianCovariance {
    /// `<f_k f_p>`.
    pub fn field_field(&self, k: usize, p: usize) -> f64 {
        let x = &self.x;
        delta(k, p) * self.cov.phi1(self.u) + x[p] * x[k] / self.n * self.cov.phi2(self.u)
    }

    /// `<f_k df_p/dx_l>`.
    pub fn field_jacobian(&self, k: usize, p: usize, l: usize) -> f64 {
        let (x, n, u, c) = (&self.x, self.n, self.u, &self.cov);
        delta(k, l) * x[p] / n * c.phi2(u)
            + delta(k, p) * x[l] / n * c.phi1_prime(u)
            + x[p] * x[l] * x[k] / (n * n) * c.phi2_prime(u)
    }

    /// `<df_k/dx_n df_p/dx_l>`.
    pub fn jacobian_jacobian(&self, k: usize, n_idx: usize, p: usize, l: usize) -> f64 {
        let (x, n, u, c) = (&self.x, self.n, self.u, &self.cov);
        let nn = n * n;
        delta(p, n_idx) * delta(k, l) * c.phi2(u) / n
            + delta(k, p) * delta(l, n_idx) * c.phi1_prime(u) / n
            + delta(k, p) * x[l] * x[n_idx] / nn * c.phi1_second(u)
            + (delta(k, l) * x[p] * x[n_idx]
                + delta(p, n_idx) * x[l] * x[k]
                + delta(l, n_idx) * x[p] * x[k])
                / nn
                * c.phi2_prime(u)
            + x[p] * x[l] * x[k] * x[n_idx] / (nn * n) * c.phi2_second(u)
    }
}

/// Standard-normal draws behind one instance.
#[derive(Debug, Clone, PartialEq)]
struct UnitDraws {
    v1: Vec<f64>,
    v2: Vec<f64>,
    h: Vec<f64>,
}

impl UnitDraws {
    fn sample(n: usize, seed: u64, with_v1: bool, with_v2: bool) -> Self {
        let mut v1 = vec![0.0; if with_v1 { n * n } else { 0 }];
        let mut v2 = vec![0.0; if with_v2 { n * n * n } else { 0 }];
        let mut h = vec![0.0; n];
        NormalStream::new(seed, STREAM_V1).fill(&mut v1);
        NormalStream::new(seed, STREAM_V2).fill(&mut v2);
        NormalStream::new(seed, STREAM_H).fill(&mut h);
        Self { v1, v2, h }
    }
}

/// One sampled realization. Immutable once built.
#[derive(Debug, Clone)]
pub struct FieldInstance {
    params: ModelParams,
    seed: u64,
    draws: UnitDraws,
    /// `J1`, row-major.
    coupling1: DMatrix<f64>,
    /// `J2[k,n,m]` at flat index `(k*N + n)*N + m`; empty when `j2 = 0`.
    coupling2: Vec<f64>,
    h: DVector<f64>,
}

impl FieldInstance {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    /// The linear coupling `J1 = V1 + alpha1 V1^T`.
    pub fn linear_coupling(&self) -> &DMatrix<f64> {
        &self.coupling1
    }

    /// Scaled `V1` entries, row-major.
    pub fn v1(&self) -> Vec<f64> {
        let s = self.params.j1 / (self.params.n as f64).sqrt();
        let n = self.params.n;
        if self.draws.v1.is_empty() {
            vec![0.0; n * n]
        } else {
            self.draws.v1.iter().map(|v| v * s).collect()
        }
    }

    /// Scaled `V2` entries at flat index `(k*N + n)*N + m`.
    pub fn v2(&self) -> Vec<f64> {
        let n = self.params.n;
        let s = self.params.j2 / n as f64;
        if self.draws.v2.is_empty() {
            vec![0.0; n * n * n]
        } else {
            self.draws.v2.iter().map(|v| v * s).collect()
        }
    }

    fn from_draws(params: ModelParams, seed: u64, draws: UnitDraws) -> Self {
        let n = params.n;
        let nf = n as f64;
        let s1 = params.j1 / nf.sqrt();
        let coupling1 = if draws.v1.is_empty() {
            DMatrix::zeros(n, n)
        } else {
            DMatrix::from_fn(n, n, |k, j| {
                s1 * draws.v1[k * n + j] + params.alpha1 * s1 * draws.v1[j * n + k]
            })
        };
        let coupling2 = if draws.v2.is_empty() {
            Vec::new()
        } else {
            let s2 = params.j2 / nf;
            let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
            let mut c2 = vec![0.0; n * n * n];
            for k in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let v = draws.v2[idx(k, a, b)]
                            + params.alpha2 * (draws.v2[idx(a, k, b)] + draws.v2[idx(a, b, k)]);
                        c2[idx(k, a, b)] = s2 * v;
                    }
                }
            }
            c2
        };
        let h = DVector::from_iterator(n, draws.h.iter().map(|v| v * params.sigma));
        Self {
            params,
            seed,
            draws,
            coupling1,
            coupling2,
            h,
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.params.n {
            return Err(Error::DimensionMismatch {
                expected: self.params.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `f(x)`.
    pub fn eval_field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(self.field_unchecked(x))
    }

    pub(crate) fn field_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.params.n;
        let mut f = &self.coupling1 * x;
        if !self.coupling2.is_empty() {
            for k in 0..n {
                let block = &self.coupling2[k * n * n..(k + 1) * n * n];
                let mut acc = 0.0;
                for a in 0..n {
                    let row = &block[a * n..(a + 1) * n];
                    let inner: f64 = row.iter().zip(x.iter()).map(|(c, xm)| c * xm).sum();
                    acc += x[a] * inner;
                }
                f[k] += acc;
            }
        }
        f
    }

    /// `K[k,l] = df_k/dx_l`.
    pub fn eval_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        Ok(self.jacobian_unchecked(x))
    }

    pub(crate) fn jacobian_unchecked(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.params.n;
        let mut k_mat = self.coupling1.clone();
        if !self.coupling2.is_empty() {
            let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
            for k in 0..n {
                for l in 0..n {
                    let mut acc = 0.0;
                    for m in 0..n {
                        acc += (self.coupling2[idx(k, l, m)] + self.coupling2[idx(k, m, l)]) * x[m];
                    }
                    k_mat[(k, l)] += acc;
                }
            }
        }
        k_mat
    }

    /// Right-hand side of the constrained flow, `-lambda x + h + f(x)`, for a
    /// given multiplier.
    pub(crate) fn flow_with_lambda(&self, x: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let mut v = self.field_unchecked(x) + &self.h;
        v.axpy(-lambda, x, 1.0);
        v
    }

    /// Serialize to the binary container: magic, header length, JSON header,
    /// then the unit draws as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = ContainerHeader {
            format: CONTAINER_FORMAT.to_string(),
            params: self.params,
            seed: self.seed,
            shapes: ContainerShapes {
                v1: shape_of(self.draws.v1.len(), &[self.n(), self.n()]),
                v2: shape_of(self.draws.v2.len(), &[self.n(), self.n(), self.n()]),
                h: vec![self.n()],
            },
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let io = |e| Error::io("<field container>", e);
        w.write_all(CONTAINER_MAGIC).map_err(io)?;
        w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&json).map_err(io)?;
        for v in self.draws.v1.iter().chain(&self.draws.v2).chain(&self.draws.h) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let io = |e| Error::io("<field container>", e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CONTAINER_MAGIC {
            return Err(Error::Format("not a field container (bad magic)".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(io)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 20 {
            return Err(Error::Format(format!("implausible header length {len}")));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(io)?;
        let header: ContainerHeader =
            serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
        if header.format != CONTAINER_FORMAT {
            return Err(Error::Format(format!("unsupported format `{}`", header.format)));
        }
        header.params.validate()?;
        let n = header.params.n;
        let count = |shape: &[usize]| shape.iter().product::<usize>();
        let expect = |shape: &[usize], full: &[usize]| shape.is_empty() || shape == full;
        if !expect(&header.shapes.v1, &[n, n])
            || !expect(&header.shapes.v2, &[n, n, n])
            || header.shapes.h != [n]
        {
            return Err(Error::Format("array shapes do not match N".into()));
        }
        let mut read_vec = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut buf).map_err(io)?;
                out.push(f64::from_le_bytes(buf));
            }
            Ok(out)
        };
        let v1 = if header.shapes.v1.is_empty() { Vec::new() } else { read_vec(count(&header.shapes.v1))? };
        let v2 = if header.shapes.v2.is_empty() { Vec::new() } else { read_vec(count(&header.shapes.v2))? };
        let h = read_vec(n)?;
        Ok(Self::from_draws(header.params, header.seed, UnitDraws { v1, v2, h }))
    }
}

const CONTAINER_MAGIC: &[u8; 8] = b"SPHFLD\0\x01";
const CONTAINER_FORMAT: &str = "sphere-field-v1";

fn shape_of(len: usize, full: &[usize]) -> Vec<usize> {
    if len == 0 { Vec::new() } else { full.to_vec() }
}

#[derive(Debug, Serialize, Deserialize)]
struct ContainerHeader {
    format: String,
    params: ModelParams,
    seed: u64,
    shapes: ContainerShapes,
}

/// An empty shape marks an array that is identically zero and not stored.
#[derive(Debug, Serialize, Deserialize)]
struct ContainerShapes {
    v1: Vec<usize>,
    v2: Vec<usize>,
    h: Vec<usize>,
}

/// Sample one instance; deterministic in `(params, seed)`.
///
/// Arrays whose scale is zero are skipped, so `j2 = 0` never allocates the
/// `N^3` tensor.
pub fn sample_field(params: &ModelParams, seed: u64) -> Result<FieldInstance> {
    params.validate()?;
    let draws = UnitDraws::sample(params.n, seed, params.j1 != 0.0, params.j2 != 0.0);
    Ok(FieldInstance::from_draws(*params, seed, draws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RunningStats;

    fn params(n: usize, j1: f64, j2: f64, a1: f64, a2: f64, s: f64) -> ModelParams {
        ModelParams::new(n, j1, j2, a1, a2, s).unwrap()
    }

    fn random_point(n: usize, seed: u64) -> DVector<f64> {
        let mut v = vec![0.0; n];
        NormalStream::new(seed, 99).fill(&mut v);
        let x = DVector::from_vec(v);
        x.scale((n as f64).sqrt() / x.norm())
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(1, 1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(3, -1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(3, 1.0, 0.0, 0.0, 0.0, -0.1).is_err());
        assert!(ModelParams::new(3, 0.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(ModelParams::field_free(3, 1.0).is_ok());
        assert!(ModelParams::new(3, 1.0, 0.0, f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_scales_vanish() {
        let inst = sample_field(&params(4, 1.0, 0.0, 1.0, 0.0, 0.0), 7).unwrap();
        assert!(inst.v2().iter().all(|&v| v == 0.0));
        assert!(inst.h().iter().all(|&v| v == 0.0));
        assert!(inst.v1().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = params(4, 1.0, 1.0, 0.3, 0.2, 0.5);
        let a = sample_field(&p, 7).unwrap();
        let b = sample_field(&p, 7).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.coupling2, b.coupling2);
        let c = sample_field(&p, 8).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn field_vanishes_at_origin_and_reduces_to_matrix_product() {
        let inst = sample_field(&params(5, 1.0, 1.0, 0.4, -0.3, 1.0), 3).unwrap();
        let f0 = inst.eval_field(&DVector::zeros(5)).unwrap();
        assert!(f0.iter().all(|&v| v == 0.0));

        let lin = sample_field(&params(5, 1.3, 0.0, 0.0, 0.0, 0.0), 3).unwrap();
        let x = random_point(5, 1);
        let v1 = DMatrix::from_row_slice(5, 5, &lin.v1());
        assert_eq!(lin.eval_field(&x).unwrap(), &v1 * &x);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let inst = sample_field(&params(4, 1.0, 1.0, 0.0, 0.0, 0.0), 1).unwrap();
        assert!(matches!(
            inst.eval_field(&DVector::zeros(3)),
            Err(Error::DimensionMismatch { expected: 4, got: 3 })
        ));
        assert!(inst.eval_jacobian(&DVector::zeros(5)).is_err());
    }

    #[test]
    fn linear_jacobian_is_constant() {
        let inst = sample_field(&params(4, 1.0, 0.0, 0.7, 0.0, 0.0), 11).unwrap();
        for s in 0..3 {
            let k = inst.eval_jacobian(&random_point(4, s)).unwrap();
            assert_eq!(&k, inst.linear_coupling());
        }
    }

    #[test]
    fn gradient_jacobian_is_symmetric() {
        let inst = sample_field(&params(6, 1.0, 1.5, 1.0, 1.0, 0.2), 5).unwrap();
        for s in 0..5 {
            let k = inst.eval_jacobian(&random_point(6, s)).unwrap();
            let asym = (&k - k.transpose()).amax();
            assert!(asym <= 1e-14 * k.amax(), "asymmetry {asym}");
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let inst = sample_field(&params(5, 1.0, 1.0, 0.3, 0.6, 0.0), 21).unwrap();
        let x = random_point(5, 4);
        let k = inst.eval_jacobian(&x).unwrap();
        let step = 1e-4;
        for l in 0..5 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[l] += step;
            xm[l] -= step;
            let col = (inst.eval_field(&xp).unwrap() - inst.eval_field(&xm).unwrap()) / (2.0 * step);
            for kk in 0..5 {
                assert!((col[kk] - k[(kk, l)]).abs() <= 1e-6, "K[{kk},{l}]");
            }
        }
    }

    #[test]
    fn covariance_pair_substitutions() {
        let c = params(3, 1.0, 1.0, 1.0, 1.0, 0.0).covariance_pair();
        assert_eq!(c.phi1, [0.0, 2.0, 3.0]);
        assert_eq!(c.phi2, [2.0, 6.0]);
        let c = params(3, 1.0, 0.0, 0.0, 0.0, 0.0).covariance_pair();
        assert_eq!(c.phi1, [0.0, 1.0, 0.0]);
        assert_eq!(c.phi2, [0.0, 0.0]);
    }

    #[test]
    fn covariance_inequalities_hold_for_explicit_family() {
        let mut seed = 1u64;
        for _ in 0..200 {
            let mut u = [0.0; 4];
            NormalStream::new(seed, 0).fill(&mut u);
            seed += 1;
            let p = params(3, u[0].abs(), u[1].abs() + 0.01, u[2] * 2.0, u[3] * 2.0, 0.0);
            let c = p.covariance_pair();
            let lhs = c.phi1_prime(1.0) - c.phi2(1.0);
            let rhs = (1.0 - p.alpha1).powi(2) * p.j1 * p.j1 + 2.0 * (1.0 - p.alpha2).powi(2) * p.j2 * p.j2;
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
            assert!(lhs >= -1e-12);
            c.check_admissible().unwrap();
        }
    }

    #[test]
    fn structured_covariance_values() {
        let c = params(4, 1.0, 1.0, 0.3, 0.2, 0.0).covariance_pair();
        let n = 6;
        let mut x = DVector::zeros(n);
        x[0] = (n as f64).sqrt();
        let jc = jacobian_covariance(&c, &x);
        let expect = (c.phi2(1.0) + c.phi1_prime(1.0)) / n as f64;
        assert!((jc.jacobian_jacobian(1, 1, 1, 1) - expect).abs() < 1e-15);
        // {k, l} and {p, n} disjoint, all off the x-axis.
        assert_eq!(jc.jacobian_jacobian(1, 2, 3, 4), 0.0);
    }

    #[test]
    fn scaling_reuses_unit_draws() {
        let p = params(5, 0.8, 1.1, 0.3, -0.4, 0.6);
        let c = 2.5;
        let a = sample_field(&p, 17).unwrap();
        let b = sample_field(&p.scaled(c), 17).unwrap();
        assert_eq!(a.draws, b.draws);
        let x = random_point(5, 2);
        let (fa, fb) = (a.eval_field(&x).unwrap(), b.eval_field(&x).unwrap());
        assert!((fb - fa.scale(c)).amax() <= 1e-13 * fa.amax() * c);
        assert!((b.h() - a.h().scale(c)).amax() <= 1e-15 * c * a.h().amax());
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        for p in [params(4, 1.0, 1.0, 0.3, 0.2, 0.7), params(3, 1.0, 0.0, -1.0, 0.0, 0.0)] {
            let inst = sample_field(&p, 99).unwrap();
            let mut buf = Vec::new();
            inst.write_to(&mut buf).unwrap();
            let back = FieldInstance::read_from(buf.as_slice()).unwrap();
            assert_eq!(back.params(), inst.params());
            assert_eq!(back.seed(), 99);
            let x = random_point(p.n, 5);
            let (fa, fb) = (inst.eval_field(&x).unwrap(), back.eval_field(&x).unwrap());
            for (a, b) in fa.iter().zip(fb.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert!(FieldInstance::read_from(&b"garbage........"[..]).is_err());
    }

    #[test]
    fn linear_coupling_variance() {
        // Var(V1_ij) = J1^2 / N = 4 / 8.
        let p = params(8, 2.0, 0.0, 0.0, 0.0, 0.0);
        let mut stats = RunningStats::new();
        for seed in 0..10_000u64 {
            let inst = sample_field(&p, seed).unwrap();
            stats.push(inst.v1()[8 * 2 + 5].powi(2));
        }
        assert!(stats.estimate().agrees_with(0.5, 3.0), "{:?}", stats.estimate());
    }
}
