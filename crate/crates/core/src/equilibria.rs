//! Brute-force enumeration of equilibria by multi-start Newton iteration.
//!
//! The unknowns are `(x, lambda)` and the system is
//!
//! ```text
//! -lambda x + h + f(x) = 0,    x.x - N = 0
//! ```
//!
//! with the bordered Jacobian `[[K - lambda I, -x], [2 x^T, 0]]`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::field_model::{sample_field, FieldInstance, ModelParams};
use crate::kac_rice::{derived_params, mean_total_exact};
use crate::rng::{derive_seed, trial_rng};
use crate::stats::{MeanEstimate, RunningStats};

/// Salt separating the start-point streams from the field draws.
const START_SALT: u64 = 0x5354_4152_5453_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Number of starts; `None` picks `200 x` the predicted mean count.
    #[serde(default)]
    pub n_starts: Option<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Defaults to `1e-6 sqrt(N)`.
    #[serde(default)]
    pub dedup_radius: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: usize,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    /// Seed of the start points; combined with the instance seed.
    #[serde(default)]
    pub start_seed: u64,
}

fn default_tolerance() -> f64 {
    1e-10
}
fn default_max_iterations() -> usize {
    100
}
fn default_max_halvings() -> usize {
    50
}
fn default_max_n() -> usize {
    10
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            n_starts: None,
            tolerance: default_tolerance(),
            dedup_radius: None,
            max_iterations: default_max_iterations(),
            max_halvings: default_max_halvings(),
            max_n: default_max_n(),
            start_seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn with_starts(n_starts: usize) -> Self {
        Self {
            n_starts: Some(n_starts),
            ..Self::default()
        }
    }

    pub fn dedup_radius_for(&self, n: usize) -> f64 {
        self.dedup_radius.unwrap_or(1e-6 * (n as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::param("tolerance", "must be positive and finite"));
        }
        if let Some(r) = self.dedup_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::param("dedup_radius", "must be positive and finite"));
            }
        }
        if self.n_starts == Some(0) {
            return Err(Error::param("n_starts", "must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// Start budget: 200 times the predicted mean count (capped at `10^4`), or
/// `200 x 2N` when no exact prediction exists for the parameters.
pub fn default_start_count(params: &ModelParams) -> usize {
    let fallback = 200 * 2 * params.n;
    let predicted = derived_params(&params.covariance_pair(), params.sigma)
        .and_then(|dp| mean_total_exact(&dp, params.n))
        .map(|p| p.value);
    match predicted {
        Ok(v) if v.is_finite() => ((200.0 * v).ceil() as usize).clamp(1, 10_000),
        _ => fallback.min(10_000),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

/// One solved equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub x: Vec<f64>,
    pub lambda: f64,
    /// Max-norm of the equilibrium equations at `(x, lambda)`.
    pub residual: f64,
    pub tangent_spectrum: Vec<ComplexValue>,
    pub basin_hits: usize,
}

impl EquilibriumPoint {
    pub fn x_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }
}

/// All equilibria found for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub n_found: usize,
    pub points: Vec<EquilibriumPoint>,
    pub n_starts: usize,
    pub dedup_radius: f64,
    /// No new root was found during the last quarter of the starts.
    pub saturated: bool,
    pub seed: u64,
}

impl CountReport {
    /// Index of the point within `radius` of `x`, if any.
    pub fn locate(&self, x: &DVector<f64>, radius: f64) -> Option<usize> {
        self.points
            .iter()
            .position(|p| (p.x_vector() - x).norm() <= radius)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn count_in(&self, alpha: f64, beta: f64) -> usize {
        self.points
            .iter()
            .filter(|p| p.lambda >= alpha && p.lambda < beta)
            .count()
    }
}

/// Max-norm of `[-lambda x + h + f(x), x.x - N]`.
pub fn equation_residual(inst: &FieldInstance, x: &DVector<f64>, lambda: f64) -> f64 {
    let v = inst.flow_with_lambda(x, lambda);
    let c = x.norm_squared() - inst.n() as f64;
    v.amax().max(c.abs())
}

fn residual_vector(inst: &FieldInstance, x: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = inst.n();
    let v = inst.flow_with_lambda(x, lambda);
    let mut r = DVector::zeros(n + 1);
    r.rows_mut(0, n).copy_from(&v);
    r[n] = x.norm_squared() - n as f64;
    r
}

fn bordered_jacobian(inst: &FieldInstance, x: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
    let n = inst.n();
    let k = inst.jacobian_unchecked(x);
    let mut j = DMatrix::zeros(n + 1, n + 1);
    for r in 0..n {
        for c in 0..n {
            j[(r, c)] = k[(r, c)];
        }
        j[(r, r)] -= lambda;
        j[(r, n)] = -x[r];
        j[(n, r)] = 2.0 * x[r];
    }
    j
}

/// Damped Newton from `(x0, lambda0)`. Returns the root and its residual, or
/// `None` if the iteration fails.
fn newton(inst: &FieldInstance, x0: DVector<f64>, lambda0: f64, opts: &SolverOptions) -> Option<(DVector<f64>, f64, f64)> {
    let n = inst.n();
    let mut x = x0;
    let mut lambda = lambda0;
    let mut r = residual_vector(inst, &x, lambda);
    let mut rn = r.amax();
    // The line search uses the Euclidean norm as merit function.
    let mut merit = r.norm();
    for _ in 0..opts.max_iterations {
        let j = bordered_jacobian(inst, &x, lambda);
        let step = j.lu().solve(&(-&r))?;
        if step.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if rn <= opts.tolerance {
            // One polishing step once the tolerance is met.
            let xt = &x + step.rows(0, n);
            let lt = lambda + step[n];
            let rtn = residual_vector(inst, &xt, lt).amax();
            return Some(if rtn <= rn { (xt, lt, rtn) } else { (x, lambda, rn) });
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let xt = &x + step.rows(0, n) * t;
            let lt = lambda + step[n] * t;
            let rt = residual_vector(inst, &xt, lt);
            let mt = rt.norm();
            if mt < merit {
                accepted = Some((xt, lt, rt, mt));
                break;
            }
            t *= 0.5;
        }
        (x, lambda, r, merit) = accepted?;
        rn = r.amax();
    }
    (rn <= opts.tolerance).then_some((x, lambda, rn))
}

/// Newton refinement of an approximate equilibrium near `x`.
pub fn refine(inst: &FieldInstance, x: &DVector<f64>, opts: &SolverOptions) -> Option<(DVector<f64>, f64)> {
    newton(inst, x.clone(), multiplier_at(inst, x), opts).map(|(x, l, _)| (x, l))
}

/// A uniformly random point on the sphere `|x|^2 = N`.
fn start_point(n: usize, seed: u64, index: u64) -> DVector<f64> {
    let mut rng = trial_rng(seed, index);
    let g = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let norm: f64 = g.norm();
    g * ((n as f64).sqrt() / norm)
}

/// `x.(h + f(x)) / N`.
pub(crate) fn multiplier_at(inst: &FieldInstance, x: &DVector<f64>) -> f64 {
    x.dot(&(inst.field_unchecked(x) + inst.h())) / inst.n() as f64
}

/// Orthonormal basis of the tangent space at `x` (columns), from a
/// Householder reflection mapping `e_1` onto `x / |x|`.
fn tangent_basis(x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let u = x / x.norm();
    // v = u - s e_1 with s chosen against cancellation.
    let s = if u[0] >= 0.0 { -1.0 } else { 1.0 };
    let mut v = u.clone();
    v[0] -= s;
    let vv = v.norm_squared();
    let mut h = DMatrix::identity(n, n);
    if vv > 0.0 {
        h -= (&v * v.transpose()) * (2.0 / vv);
    }
    h.columns(1, n - 1).into_owned()
}

/// Eigenvalues of the linearized flow restricted to the tangent space at an
/// equilibrium, sorted by real then imaginary part.
pub fn tangent_spectrum(inst: &FieldInstance, pt: &EquilibriumPoint) -> Result<Vec<ComplexValue>> {
    let x = pt.x_vector();
    if x.len() != inst.n() {
        return Err(Error::DimensionMismatch {
            expected: inst.n(),
            got: x.len(),
        });
    }
    tangent_spectrum_at(inst, &x, pt.lambda)
}

fn tangent_spectrum_at(inst: &FieldInstance, x: &DVector<f64>, lambda: f64) -> Result<Vec<ComplexValue>> {
    let n = inst.n();
    let mut k = inst.jacobian_unchecked(x);
    for i in 0..n {
        k[(i, i)] -= lambda;
    }
    let u = tangent_basis(x);
    let m = u.transpose() * k * &u;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("tangent operator has non-finite entries".into()));
    }
    let ev = crate::elliptic::real_schur(&m)?.complex_eigenvalues();
    let mut out: Vec<ComplexValue> = ev.iter().map(|c| ComplexValue { re: c.re, im: c.im }).collect();
    if out.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::Numerical("tangent eigenvalue computation failed".into()));
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

/// Multi-start Newton search for all equilibria of one instance.
pub fn find_equilibria(inst: &FieldInstance, opts: &SolverOptions) -> Result<CountReport> {
    opts.validate()?;
    let n = inst.n();
    if n > opts.max_n {
        return Err(Error::param(
            "n",
            format!("N = {n} exceeds the configured solver maximum {}", opts.max_n),
        ));
    }
    let n_starts = opts.n_starts.unwrap_or_else(|| default_start_count(inst.params()));
    let radius = opts.dedup_radius_for(n);
    let start_seed = derive_seed(inst.seed() ^ START_SALT, opts.start_seed);
    let roots: Vec<Option<(DVector<f64>, f64, f64)>> = (0..n_starts as u64)
        .into_par_iter()
        .map(|i| {
            let x0 = start_point(n, start_seed, i);
            let l0 = multiplier_at(inst, &x0);
            newton(inst, x0, l0, opts)
        })
        .collect();

    // (x, lambda, residual, hits, first start index)
    let mut found: Vec<(DVector<f64>, f64, f64, usize, usize)> = Vec::new();
    for (i, root) in roots.into_iter().enumerate() {
        let Some((x, lambda, res)) = root else { continue };
        match found.iter_mut().find(|f| (&f.0 - &x).norm() <= radius) {
            Some(f) => f.3 += 1,
            None => found.push((x, lambda, res, 1, i)),
        }
    }
    let last_new = found.iter().map(|f| f.4).max();
    let saturated = match last_new {
        Some(i) => (i as f64) < 0.75 * n_starts as f64,
        None => true,
    };
    found.sort_by(|a, b| {
        a.1.total_cmp(&b.1).then_with(|| {
            a.0.iter()
                .zip(b.0.iter())
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let points = found
        .into_iter()
        .map(|(x, lambda, residual, hits, _)| {
            Ok(EquilibriumPoint {
                tangent_spectrum: tangent_spectrum_at(inst, &x, lambda)?,
                x: x.iter().copied().collect(),
                lambda,
                residual,
                basin_hits: hits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CountReport {
        n_found: points.len(),
        points,
        n_starts,
        dedup_radius: radius,
        saturated,
        seed: inst.seed(),
    })
}

/// Per-instance summary of a Monte Carlo count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub instance: usize,
    pub n_found: usize,
    pub saturated: bool,
    pub seed: u64,
}

/// Mean equilibrium count over independent instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCountReport {
    pub params: ModelParams,
    pub seed: u64,
    pub count: MeanEstimate,
    /// Multiplier bin edges (physical units) and mean count per bin.
    pub lambda_edges: Vec<f64>,
    pub lambda_histogram: Vec<MeanEstimate>,
    pub n_unsaturated: usize,
    /// True when unsaturated instances were left out of the averages.
    pub strict: bool,
    pub instances: Vec<InstanceSummary>,
}

/// Average `find_equilibria` counts over `n_instances` fields; instance `i`
/// uses seed `derive_seed(seed, i)`. With `strict`, unsaturated instances are
/// excluded from the averages (they are always listed).
pub fn mc_mean_count(
    params: &ModelParams,
    n_instances: usize,
    opts: &SolverOptions,
    seed: u64,
    lambda_edges: &[f64],
    strict: bool,
) -> Result<McCountReport> {
    params.validate()?;
    if n_instances == 0 {
        return Err(Error::param("n_instances", "must be at least 1"));
    }
    if lambda_edges.len() == 1 || lambda_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("lambda_edges", "need at least two strictly ascending edges"));
    }
    let mut opts = *opts;
    if opts.n_starts.is_none() {
        opts.n_starts = Some(default_start_count(params));
    }
    let bins = lambda_edges.len().saturating_sub(1);
    let reports: Vec<Result<(InstanceSummary, Vec<usize>)>> = (0..n_instances)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            let inst = sample_field(params, s)?;
            let rep = find_equilibria(&inst, &opts)?;
            let hist = (0..bins)
                .map(|b| rep.count_in(lambda_edges[b], lambda_edges[b + 1]))
                .collect();
            Ok((
                InstanceSummary {
                    instance: i,
                    n_found: rep.n_found,
                    saturated: rep.saturated,
                    seed: s,
                },
                hist,
            ))
        })
        .collect();
    let mut count = RunningStats::new();
    let mut hist = vec![RunningStats::new(); bins];
    let mut instances = Vec::with_capacity(n_instances);
    let mut n_unsaturated = 0;
    for r in reports {
        let (summary, h) = r?;
        if !summary.saturated {
            n_unsaturated += 1;
        }
        if summary.saturated || !strict {
            count.push(summary.n_found as f64);
            for (acc, &c) in hist.iter_mut().zip(&h) {
                acc.push(c as f64);
            }
        }
        instances.push(summary);
    }
    Ok(McCountReport {
        params: *params,
        seed,
        count: count.estimate(),
        lambda_edges: lambda_edges.to_vec(),
        lambda_histogram: hist.iter().map(RunningStats::estimate).collect(),
        n_unsaturated,
        strict,
        instances,
    })
}

/// CSV summary with columns `instance,n_found,saturated,seed`.
pub fn write_instance_csv<W: Write>(rows: &[InstanceSummary], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    wr.write_record(["instance", "n_found", "saturated", "seed"]).map_err(fmt)?;
    for r in rows {
        wr.write_record([
            r.instance.to_string(),
            r.n_found.to_string(),
            r.saturated.to_string(),
            r.seed.to_string(),
        ])
        .map_err(fmt)?;
    }
    wr.flush().map_err(|e| Error::Format(e.to_string()))
}

/// CSV of the points of one report: `lambda,residual,basin_hits,x0..x{N-1}`.
pub fn write_points_csv<W: Write>(rep: &CountReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let n = rep.points.first().map_or(0, |p| p.x.len());
    let mut header = vec!["lambda".to_string(), "residual".into(), "basin_hits".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    wr.write_record(&header).map_err(fmt)?;
    for p in &rep.points {
        let mut row = vec![fmt_f64(p.lambda), fmt_f64(p.residual), p.basin_hits.to_string()];
        row.extend(p.x.iter().map(|v| fmt_f64(*v)));
        wr.write_record(&row).map_err(fmt)?;
    }
    wr.flush().map_err(|e| Error::Format(e.to_string()))
}
