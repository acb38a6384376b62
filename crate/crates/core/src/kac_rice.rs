//! Mean number of equilibria: exact finite-N evaluation and asymptotic regimes.
//!
//! With `tau = Phi2(1)/Phi1'(1)` and `b^2 = (sigma^2 + Phi1(1))/Phi1'(1)`,
//!
//! ```text
//! E N = 2 sqrt(N (1+tau) / (b^2+tau)) b^{1-N} int exp(-N B lambda^2 / 4) rho_N(lambda sqrt(N)) dlambda
//! ```
//!
//! where `rho_N` is the density of real eigenvalues of the elliptic ensemble.
//! The same count restricted to multipliers in `[alpha, beta]` follows from the
//! Kac-Rice integral over `lambda` with the mean `|det|` of a shifted
//! `(N-1) x (N-1)` elliptic matrix, which is itself proportional to `rho_N`.
//! All integrands are assembled in log space.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::elliptic::{
    ln_rho_real_edge, rho_real_outside, sample_elliptic_with, EllipticParams, RealDensity,
};
use crate::error::{Error, Result};
use crate::field_model::CovariancePair;
use crate::quadrature::{self, QuadOptions};
use crate::rng::trial_rng;
use crate::stats::RunningStats;

/// Threshold for the excluded values `tau = -1` and `b^2 + tau = 0`.
const EXCEPTIONAL_EPS: f64 = 1e-12;
/// Log-integrands further than this below their maximum are dropped.
const LOG_CUTOFF: f64 = 60.0;

/// Random-matrix-side parameters of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub tau: f64,
    pub b2: f64,
    #[serde(rename = "B")]
    pub big_b: f64,
    pub sigma_c: f64,
    /// `sqrt(Phi1'(1))`: physical multipliers are this times scaled ones.
    pub lambda_scale: f64,
}

/// Derived parameters from the covariance values at `u = 1` and the field
/// variance `sigma^2`.
pub fn derived_params_from_values(phi1: f64, phi1_prime: f64, phi2: f64, sigma2: f64) -> Result<DerivedParams> {
    if !(phi1 > 0.0 && phi1.is_finite()) {
        return Err(Error::param("phi1", format!("Phi1(1) must be positive (got {phi1})")));
    }
    let slack = 1e-12 * phi1_prime.abs().max(phi1).max(1.0);
    if !(phi1_prime >= phi1 - slack) {
        return Err(Error::param("phi1_prime", format!("need Phi1'(1) >= Phi1(1) (got {phi1_prime} < {phi1})")));
    }
    if !(phi2 >= -phi1 - slack && phi2 <= phi1_prime + slack) {
        return Err(Error::param("phi2", format!("need -Phi1(1) <= Phi2(1) <= Phi1'(1) (got {phi2})")));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::param("sigma", format!("variance must be finite and nonnegative (got {sigma2})")));
    }
    let tau = (phi2 / phi1_prime).min(1.0);
    if tau <= -1.0 + EXCEPTIONAL_EPS {
        return Err(Error::ExceptionalAntisymmetric { tau });
    }
    let b2 = (sigma2 + phi1) / phi1_prime;
    let s = b2 + tau;
    if s.abs() <= EXCEPTIONAL_EPS {
        return Err(Error::ExceptionalBUndefined { value: s });
    }
    if s < 0.0 {
        return Err(Error::Domain(format!("b^2 + tau = {s} must be positive")));
    }
    let big_b = 2.0 / (1.0 + tau) * (1.0 - b2) / s;
    Ok(DerivedParams {
        tau,
        b2,
        big_b,
        sigma_c: (phi1_prime - phi1).max(0.0).sqrt(),
        lambda_scale: phi1_prime.sqrt(),
    })
}

/// Derived parameters of a covariance pair with field standard deviation `sigma`.
pub fn derived_params(cov: &CovariancePair, sigma: f64) -> Result<DerivedParams> {
    cov.check_admissible()?;
    if !(sigma >= 0.0) {
        return Err(Error::param("sigma", format!("must be nonnegative (got {sigma})")));
    }
    derived_params_from_values(cov.phi1(1.0), cov.phi1_prime(1.0), cov.phi2(1.0), sigma * sigma)
}

impl DerivedParams {
    pub fn b(&self) -> f64 {
        self.b2.sqrt()
    }

    fn check_exact(&self, n: usize) -> Result<()> {
        if n % 2 == 1 {
            return Err(Error::OddDimension(n));
        }
        EllipticParams::new(n, self.tau)?.check_exact_domain()
    }
}

/// Which formula produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Exact,
    FixedAsymptotic,
    GammaCrossover,
    KappaCrossover,
    WeakNongradient,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Exact => "exact",
            Regime::FixedAsymptotic => "fixed-asymptotic",
            Regime::GammaCrossover => "gamma-crossover",
            Regime::KappaCrossover => "kappa-crossover",
            Regime::WeakNongradient => "weak-nongradient",
        }
    }
}

/// A mean equilibrium count. `log_value` stays finite when `value` overflows;
/// it is `-inf` (serialized as `null`) only for an empty interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountPrediction {
    pub value: f64,
    #[serde(with = "log_value_serde")]
    pub log_value: f64,
    pub regime: Regime,
    #[serde(rename = "N")]
    pub n: usize,
    pub interval: Option<(f64, f64)>,
}

mod log_value_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

impl CountPrediction {
    fn from_log(log_value: f64, regime: Regime, n: usize, interval: Option<(f64, f64)>) -> Self {
        Self {
            value: log_value.exp(),
            log_value,
            regime,
            n,
            interval,
        }
    }
}

/// `ln int_a^b exp(g(lambda)) dlambda` for a log-integrand `g` that is
/// unimodal on each side of zero and decays at least like a Gaussian.
///
/// Infinite bounds are truncated where `g` has fallen `LOG_CUTOFF` below the
/// maximum found by a scan; the scan step also provides the quadrature
/// breakpoints.
fn log_integral<G: Fn(f64) -> f64 + Sync>(g: G, a: f64, b: f64, step: f64, rel_tol: f64) -> Result<f64> {
    if !(a < b) {
        return Ok(f64::NEG_INFINITY);
    }
    // Scan outward from zero (or from the finite end nearest zero) to bracket
    // the mass and locate the maximum.
    let start = 0.0f64.clamp(a, b);
    let mut nodes = vec![start];
    let max_steps = 2_000_000usize;
    let scan = |dir: f64, limit: f64, nodes: &mut Vec<f64>| -> Result<()> {
        let mut best = g(start);
        let mut i = 1usize;
        loop {
            let x = start + dir * step * i as f64;
            if (dir > 0.0 && x >= limit) || (dir < 0.0 && x <= limit) {
                if limit.is_finite() {
                    nodes.push(limit);
                }
                return Ok(());
            }
            let v = g(x);
            nodes.push(x);
            if v.is_nan() {
                return Err(Error::Numerical(format!("log-integrand is NaN at {x}")));
            }
            best = best.max(v);
            if v < best - LOG_CUTOFF && v < g(x - dir * step) {
                return Ok(());
            }
            i += 1;
            if i > max_steps {
                return Err(Error::Numerical("log-integrand does not decay".into()));
            }
        }
    };
    scan(1.0, b, &mut nodes)?;
    scan(-1.0, a, &mut nodes)?;
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    nodes.dedup();
    let values: Vec<f64> = nodes.iter().map(|&x| g(x)).collect();
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Numerical("log-integrand has no finite maximum".into()));
    }
    let (lo, hi) = (nodes[0], *nodes.last().unwrap());
    // Panels of the scan are integrated independently and summed in order, so
    // the result does not depend on scheduling.
    let opts = QuadOptions::with_tolerances(0.0, rel_tol);
    let parts: Vec<Result<f64>> = nodes
        .par_windows(2)
        .map(|w| {
            let r = quadrature::integrate(|x| (g(x) - m).exp(), w[0], w[1], &[], &opts)?;
            Ok(r.value)
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    debug_assert!(lo <= hi);
    Ok(m + total.ln())
}

fn scan_step(n: usize, dp: &DerivedParams) -> f64 {
    0.25 * (dp.b2 + dp.tau).sqrt().min(1.0) / (n as f64).sqrt()
}

/// Default relative tolerance of the exact predictions.
pub const EXACT_REL_TOL: f64 = 1e-12;

/// Mean total number of equilibria for even `N`, by direct quadrature of the
/// Theorem-level formula.
pub fn mean_total_exact(dp: &DerivedParams, n: usize) -> Result<CountPrediction> {
    dp.check_exact(n)?;
    let density = RealDensity::new(n, dp.tau)?;
    mean_total_exact_with(dp, &density)
}

/// As [`mean_total_exact`], reusing a density evaluator for the same `(N, tau)`.
pub fn mean_total_exact_with(dp: &DerivedParams, density: &RealDensity) -> Result<CountPrediction> {
    let n = density.params().n;
    if density.params().tau != dp.tau {
        return Err(Error::param("density", "evaluator was built for a different tau"));
    }
    dp.check_exact(n)?;
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let g = |l: f64| -nf * dp.big_b * l * l / 4.0 + density.ln_rho(l * sqrt_n);
    // Even integrand: twice the half line.
    let half = log_integral(g, 0.0, f64::INFINITY, scan_step(n, dp), EXACT_REL_TOL)?;
    let ln_pref = 2f64.ln() + 0.5 * (nf * (1.0 + dp.tau) / (dp.b2 + dp.tau)).ln() + (1.0 - nf) * 0.5 * dp.b2.ln();
    Ok(CountPrediction::from_log(
        ln_pref + 2f64.ln() + half,
        Regime::Exact,
        n,
        None,
    ))
}

/// `ln` of the constant `2 sqrt(1+tau) (N-2)!!` relating the mean `|det|` of
/// the shifted `(N-1) x (N-1)` matrix to `rho_N`.
fn ln_det_identity_constant(n: usize, tau: f64) -> f64 {
    let nf = n as f64;
    2f64.ln() + 0.5 * (1.0 + tau).ln() + (nf / 2.0 - 1.0) * 2f64.ln() + ln_gamma(nf / 2.0)
}

/// `ln E|det(X_{N-1} - lambda sqrt(N))|` through the real-eigenvalue density.
pub fn ln_mean_abs_det(density: &RealDensity, lam: f64) -> f64 {
    let p = density.params();
    let nf = p.n as f64;
    ln_det_identity_constant(p.n, p.tau) + nf * lam * lam / (2.0 * (1.0 + p.tau)) + density.ln_rho(lam * nf.sqrt())
}

/// Mean number of equilibria whose multiplier lies in `[alpha, beta]`
/// (physical units; infinite bounds allowed), from the Kac-Rice integral over
/// the multiplier with the mean `|det|` replaced by the density identity.
pub fn mean_in_interval(dp: &DerivedParams, n: usize, alpha: f64, beta: f64) -> Result<CountPrediction> {
    dp.check_exact(n)?;
    let density = RealDensity::new(n, dp.tau)?;
    mean_in_interval_with(dp, &density, alpha, beta)
}

/// As [`mean_in_interval`], reusing a density evaluator.
pub fn mean_in_interval_with(dp: &DerivedParams, density: &RealDensity, alpha: f64, beta: f64) -> Result<CountPrediction> {
    let n = density.params().n;
    if density.params().tau != dp.tau {
        return Err(Error::param("density", "evaluator was built for a different tau"));
    }
    dp.check_exact(n)?;
    if alpha.is_nan() || beta.is_nan() || alpha > beta {
        return Err(Error::param("interval", format!("need alpha <= beta (got [{alpha}, {beta}])")));
    }
    let interval = Some((alpha, beta));
    if alpha == beta {
        return Ok(CountPrediction {
            value: 0.0,
            log_value: f64::NEG_INFINITY,
            regime: Regime::Exact,
            n,
            interval,
        });
    }
    let nf = n as f64;
    let s = dp.b2 + dp.tau;
    let (a, b) = (alpha / dp.lambda_scale, beta / dp.lambda_scale);
    let g = |l: f64| -nf * l * l / (2.0 * s) + ln_mean_abs_det(density, l);
    let ln_int = log_integral(g, a, b, scan_step(n, dp), EXACT_REL_TOL)?;
    let ln_pref = 0.5 * nf.ln()
        - (nf / 2.0 - 1.0) * 2f64.ln()
        - ln_gamma(nf / 2.0)
        - 0.5 * s.ln()
        + (1.0 - nf) * 0.5 * dp.b2.ln();
    Ok(CountPrediction::from_log(ln_pref + ln_int, Regime::Exact, n, interval))
}

/// Monte Carlo check of the `|det|` identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetIdentityReport {
    pub n: usize,
    pub tau: f64,
    pub lambda: f64,
    pub trials: u64,
    pub seed: u64,
    /// `ln` of the density-side prediction.
    pub ln_predicted: f64,
    /// Mean of `|det| / predicted` over the draws and its standard error.
    pub ratio: f64,
    pub ratio_stderr: f64,
}

impl DetIdentityReport {
    pub fn z_score(&self) -> f64 {
        (self.ratio - 1.0) / self.ratio_stderr
    }
}

/// Sample `E|det(X - lambda sqrt(N) 1)|` over `(N-1) x (N-1)` elliptic draws
/// and compare with `2 sqrt(1+tau) (N-2)!! exp(N lambda^2 / (2(1+tau))) rho_N(lambda sqrt(N))`.
pub fn validate_det_identity(tau: f64, n: usize, lam: f64, trials: u64, seed: u64) -> Result<DetIdentityReport> {
    if n % 2 == 1 {
        return Err(Error::OddDimension(n));
    }
    if trials < 2 {
        return Err(Error::param("trials", "need at least two trials for a standard error"));
    }
    let density = RealDensity::new(n, tau)?;
    let ln_predicted = ln_mean_abs_det(&density, lam);
    let small = EllipticParams::new(n - 1, tau)?;
    let shift = lam * (n as f64).sqrt();
    const CHUNK: u64 = 1024;
    let chunks: Vec<Result<RunningStats>> = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s = RunningStats::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = trial_rng(seed, i);
                let mut x = sample_elliptic_with(&small, &mut rng);
                for k in 0..n - 1 {
                    x[(k, k)] -= shift;
                }
                let ln_det = x.lu().determinant().abs().ln();
                if ln_det.is_nan() {
                    return Err(Error::Numerical("non-finite determinant".into()));
                }
                s.push((ln_det - ln_predicted).exp());
            }
            Ok(s)
        })
        .collect();
    let mut total = RunningStats::new();
    for c in chunks {
        total.merge(&c?);
    }
    Ok(DetIdentityReport {
        n,
        tau,
        lambda: lam,
        trials,
        seed,
        ln_predicted,
        ratio: total.mean(),
        ratio_stderr: total.stderr(),
    })
}

/// Phase of the fixed-parameter large-N limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPhase {
    /// `b < 1`: exponentially many equilibria.
    Abundant,
    /// `b > 1`: two equilibria.
    Trivial,
}

/// Saddle-point data of the `b > 1` Laplace analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceData {
    pub lambda_star: f64,
    /// `L(lambda_star)`, equal to `ln b`.
    pub l_value: f64,
    /// `L''(lambda_star)`.
    pub l_second: f64,
}

/// Leading large-N behaviour at fixed `tau` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedAsymptotic {
    pub phase: FixedPhase,
    /// Exponential growth rate per unit `N` (`ln(1/b)` or 0).
    pub log_rate: f64,
    /// Multiplier of `exp(N log_rate)`.
    pub prefactor: Option<f64>,
    pub laplace: Option<LaplaceData>,
}

impl FixedAsymptotic {
    pub fn predict(&self, n: usize) -> CountPrediction {
        let ln_pref = self.prefactor.map_or(2f64.ln(), f64::ln);
        CountPrediction::from_log(ln_pref + n as f64 * self.log_rate, Regime::FixedAsymptotic, n, None)
    }
}

/// `L(lambda) = -B lambda^2 / 4 - Psi(lambda)` outside the bulk.
pub fn laplace_exponent(dp: &DerivedParams, lam: f64) -> Result<f64> {
    let out = rho_real_outside(dp.tau, lam)?;
    Ok(-dp.big_b * lam * lam / 4.0 - out.rate)
}

/// Fixed-`b` asymptotics; `b^2 = 1` is routed to the crossover formulas.
pub fn asympt_fixed(dp: &DerivedParams) -> Result<FixedAsymptotic> {
    let tau = dp.tau;
    if !(tau.abs() < 1.0) {
        return Err(Error::Domain(format!("fixed-b asymptotics need |tau| < 1 (got {tau})")));
    }
    if dp.b2 == 1.0 {
        return Err(Error::Domain("b^2 = 1 lies on the transition line; use the crossover regimes".into()));
    }
    let b = dp.b();
    if b < 1.0 {
        Ok(FixedAsymptotic {
            phase: FixedPhase::Abundant,
            log_rate: -b.ln(),
            prefactor: Some(2.0 * ((1.0 + tau) / (1.0 - tau)).sqrt() * b / (1.0 - dp.b2).sqrt()),
            laplace: None,
        })
    } else {
        let lambda_star = b + tau / b;
        Ok(FixedAsymptotic {
            phase: FixedPhase::Trivial,
            log_rate: 0.0,
            prefactor: Some(2.0),
            laplace: Some(LaplaceData {
                lambda_star,
                l_value: laplace_exponent(dp, lambda_star)?,
                l_second: -2.0 * dp.b2 / ((dp.b2 + tau) * (dp.b2 - tau)),
            }),
        })
    }
}

fn check_tau_open(tau: f64) -> Result<()> {
    if tau.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("crossover needs |tau| < 1 (got {tau})")))
    }
}

/// `lim E N / sqrt(N)` for `b^2 = 1 - gamma / N`.
pub fn crossover_gamma(tau: f64, gamma: f64) -> Result<f64> {
    check_tau_open(tau)?;
    if !gamma.is_finite() {
        return Err(Error::param("gamma", "must be finite"));
    }
    // e^{gamma/2} int_0^1 e^{-gamma l^2 / 2} = int_0^1 e^{gamma (1 - l^2) / 2}.
    let opts = QuadOptions::with_tolerances(0.0, 1e-13);
    let int = quadrature::integrate_value(|l| (gamma * (1.0 - l * l) / 2.0).exp(), 0.0, 1.0, &opts)?;
    Ok(4.0 / (2.0 * PI).sqrt() * ((1.0 + tau) / (1.0 - tau)).sqrt() * int)
}

/// `lim E N` for `b^2 = 1 + kappa / sqrt(N)`.
pub fn crossover_kappa(tau: f64, kappa: f64) -> Result<f64> {
    check_tau_open(tau)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", format!("must be positive and finite (got {kappa})")));
    }
    let k = kappa * ((1.0 - tau) / (1.0 + tau)).sqrt();
    // Log-integrand -k^2/4 + k zeta + ln rho_edge(zeta): linear growth for
    // zeta -> -inf, Gaussian decay for zeta -> +inf; peak near zeta = k/2.
    let g = |z: f64| -k * k / 4.0 + k * z + ln_rho_real_edge(z);
    let step = 0.25 * (1.0 / k).max(1.0);
    let ln_int = log_integral(g, f64::NEG_INFINITY, f64::INFINITY, step, 1e-12)?;
    Ok(4.0 * ln_int.exp())
}

/// Weakly non-gradient asymptotics for `tau = 1 - u^2/N`, `b^2 < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakNongradient {
    pub value: f64,
    pub log_value: f64,
    /// The same quantity written through `B = (1 - b^2)/(1 + b^2)`.
    pub value_via_b: f64,
    pub log_value_via_b: f64,
}

impl WeakNongradient {
    pub fn prediction(&self, n: usize) -> CountPrediction {
        CountPrediction::from_log(self.log_value, Regime::WeakNongradient, n, None)
    }

    pub fn forms_agree(&self, rel_tol: f64) -> bool {
        (self.log_value - self.log_value_via_b).abs() <= rel_tol * self.log_value.abs().max(1.0)
            && (self.value - self.value_via_b).abs() <= rel_tol * self.value.abs()
    }
}

pub fn weak_nongradient(u: f64, b2: f64, n: usize) -> Result<WeakNongradient> {
    if !(b2 > 0.0 && b2 < 1.0) {
        return Err(Error::Domain(format!("weak non-gradient regime needs 0 < b^2 < 1 (got {b2})")));
    }
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::param("u", format!("must be finite and nonnegative (got {u})")));
    }
    let nf = n as f64;
    let ln_seg = crate::elliptic::gaussian_segment(u, 1.0).ln();
    let log_value = 4f64.ln() - nf * 0.5 * b2.ln() + 0.5 * (2.0 * nf * b2 / (PI * (1.0 - b2))).ln() + ln_seg;
    let big_b = (1.0 - b2) / (1.0 + b2);
    let log_value_via_b = 4f64.ln()
        + nf / 2.0 * ((1.0 + big_b) / (1.0 - big_b)).ln()
        + 0.5 * (nf * (1.0 - big_b) / (PI * big_b)).ln()
        + ln_seg;
    Ok(WeakNongradient {
        value: log_value.exp(),
        log_value,
        value_via_b: log_value_via_b.exp(),
        log_value_via_b,
    })
}

/// One row of a prediction sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub tau: f64,
    pub b2: f64,
    pub sigma: f64,
    pub regime: Regime,
    pub value: f64,
    #[serde(with = "log_value_serde")]
    pub log_value: f64,
}

/// Exact predictions over the grid `ns x sigmas`, in input order
/// (`N` outermost).
pub fn predict_sweep(cov: &CovariancePair, sigmas: &[f64], ns: &[usize]) -> Result<Vec<PredictionRow>> {
    let tasks: Vec<(usize, f64)> = ns.iter().flat_map(|&n| sigmas.iter().map(move |&s| (n, s))).collect();
    tasks
        .par_iter()
        .map(|&(n, sigma)| {
            let dp = derived_params(cov, sigma)?;
            let p = mean_total_exact(&dp, n)?;
            Ok(PredictionRow {
                n,
                tau: dp.tau,
                b2: dp.b2,
                sigma,
                regime: p.regime,
                value: p.value,
                log_value: p.log_value,
            })
        })
        .collect()
}

/// Sweep CSV with columns `N,tau,b2,sigma,regime,value,log_value`.
pub fn write_sweep_csv<W: Write>(rows: &[PredictionRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    wr.write_record(["N", "tau", "b2", "sigma", "regime", "value", "log_value"])
        .map_err(fmt)?;
    for r in rows {
        wr.write_record([
            r.n.to_string(),
            crate::export::fmt_f64(r.tau),
            crate::export::fmt_f64(r.b2),
            crate::export::fmt_f64(r.sigma),
            r.regime.as_str().to_string(),
            crate::export::fmt_f64(r.value),
            crate::export::fmt_f64(r.log_value),
        ])
        .map_err(fmt)?;
    }
    wr.flush().map_err(|e| Error::Format(e.to_string()))
}
