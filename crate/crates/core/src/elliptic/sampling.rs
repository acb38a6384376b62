use nalgebra::{DMatrix, Dyn, Schur};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::trial_rng;

/// Size and correlation of the elliptic ensemble, `<X_ij X_ji> = tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticParams {
    pub n: usize,
    pub tau: f64,
}

impl EllipticParams {
    pub fn new(n: usize, tau: f64) -> Result<Self> {
        let p = Self { n, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::param("n", "matrix size must be positive"));
        }
        if !(self.tau > -1.0 && self.tau <= 1.0) {
            return Err(Error::param("tau", format!("must lie in (-1, 1] (got {})", self.tau)));
        }
        Ok(())
    }

    /// The closed-form density needs an even size and `|tau| < 1`.
    pub fn check_exact_domain(&self) -> Result<()> {
        self.validate()?;
        if self.n % 2 == 1 {
            return Err(Error::Domain(format!(
                "closed-form density needs even N (got {}); use the Monte Carlo route",
                self.n
            )));
        }
        if self.tau.abs() >= 1.0 {
            return Err(Error::Domain(format!(
                "closed-form density needs |tau| < 1 (got {}); use the Monte Carlo route",
                self.tau
            )));
        }
        Ok(())
    }
}

/// `X = sqrt((1+tau)/2) S + sqrt((1-tau)/2) A` with `S` symmetric
/// (off-diagonal variance 1, diagonal variance 2) and `A` antisymmetric.
pub fn sample_elliptic_with<R: Rng + ?Sized>(p: &EllipticParams, rng: &mut R) -> DMatrix<f64> {
    let n = p.n;
    let sym = ((1.0 + p.tau) / 2.0).sqrt();
    let anti = ((1.0 - p.tau).max(0.0) / 2.0).sqrt();
    let diag = (1.0 + p.tau).sqrt();
    let mut x = DMatrix::zeros(n, n);
    for i in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        x[(i, i)] = diag * g;
        for j in i + 1..n {
            let s: f64 = rng.sample(StandardNormal);
            let a: f64 = rng.sample(StandardNormal);
            x[(i, j)] = sym * s + anti * a;
            x[(j, i)] = sym * s - anti * a;
        }
    }
    x
}

/// One draw keyed by `seed`.
pub fn sample_elliptic(p: &EllipticParams, seed: u64) -> Result<DMatrix<f64>> {
    p.validate()?;
    Ok(sample_elliptic_with(p, &mut trial_rng(seed, 0)))
}

/// Real Schur decomposition with a bounded QR sweep count.
///
/// The shifted QR iteration occasionally stalls on a particular matrix. Each
/// retry runs on an exact similarity of `x` (transpose, index reversal), so the
/// eigenvalues are unchanged.
pub(crate) fn real_schur(x: &DMatrix<f64>) -> Result<Schur<f64, Dyn>> {
    let n = x.nrows();
    let max_niter = 100 * n.max(1);
    let reversed = DMatrix::from_fn(n, n, |i, j| x[(n - 1 - i, n - 1 - j)]);
    let candidates = [x.clone(), x.transpose(), reversed.clone(), reversed.transpose()];
    for m in candidates {
        if let Some(s) = Schur::try_new(m, f64::EPSILON, max_niter) {
            return Ok(s);
        }
    }
    Err(Error::Numerical(format!(
        "real Schur decomposition did not converge (n = {n}, max |entry| = {:e}, frobenius = {:e})",
        x.amax(),
        x.norm()
    )))
}

/// Real eigenvalues, read off the 1x1 blocks of the real Schur form, sorted
/// ascending.
///
/// A 2x2 block that the decomposition left coupled is split by its
/// discriminant.
pub fn real_eigenvalues(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = x.nrows();
    if n != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.ncols(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = real_schur(x)?;
    let (_, t) = schur.unpack();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let half_tr = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc >= 0.0 {
                let r = disc.sqrt();
                out.push(half_tr - r);
                out.push(half_tr + r);
            }
            i += 2;
        } else {
            out.push(t[(i, i)]);
            i += 1;
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(out)
}
