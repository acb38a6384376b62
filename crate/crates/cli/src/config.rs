//! Experiment configuration: one JSON object whose `kind` selects the
//! experiment. Every optional field has a documented default, and the resolved
//! configuration (defaults filled in) is what gets hashed and recorded.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use sphere_equilibria::dynamics::RelaxOptions;
use sphere_equilibria::elliptic::EllipticParams;
use sphere_equilibria::equilibria::SolverOptions;
use sphere_equilibria::field_model::{CovariancePair, ModelParams};
use sphere_equilibria::kac_rice::derived_params;

use crate::error::{CliError, CliResult};

/// The four coupling parameters of the quadratic field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Couplings {
    pub j1: f64,
    pub j2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Couplings {
    pub fn params(&self, n: usize, sigma: f64) -> CliResult<ModelParams> {
        ModelParams::new(n, self.j1, self.j2, self.alpha1, self.alpha2, sigma)
            .map_err(|e| CliError::from_core_in("model", e))
    }

    pub fn covariance(&self) -> CliResult<CovariancePair> {
        Ok(self.params(2, 0.0)?.covariance_pair())
    }

    /// Rejects inadmissible and exceptional `(tau, b^2)` at each `sigma`.
    fn check_sigmas(&self, sigmas: &[f64]) -> CliResult<()> {
        let cov = self.covariance()?;
        for (i, &s) in sigmas.iter().enumerate() {
            derived_params(&cov, s).map_err(|e| CliError::from_core_in(&format!("sigmas[{i}]"), e))?;
        }
        Ok(())
    }
}

/// Exact mean counts over a grid of `N` and `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictSweep {
    #[serde(default)]
    pub seed: u64,
    pub model: Couplings,
    pub sigmas: Vec<f64>,
    pub ns: Vec<usize>,
}

/// Brute-force counts against the exact predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCount {
    #[serde(default)]
    pub seed: u64,
    pub model: Couplings,
    pub n: usize,
    pub sigmas: Vec<f64>,
    /// Default 500.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Interior multiplier cuts; the outer bins extend to infinity.
    /// Default: none (totals only).
    #[serde(default)]
    pub lambda_cuts: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
}

/// Histogram of real eigenvalues against the exact density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraValidate {
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    pub tau: f64,
    /// Default `10^5`.
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Default 40.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Histogram range `[-half_width, half_width]`; default
    /// `(1 + |tau|) sqrt(N) + 2`.
    #[serde(default)]
    pub half_width: Option<f64>,
}

/// Monte Carlo check of the mean `|det|` identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetIdentity {
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    pub tau: f64,
    /// Default `[0, 1]`.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Default `10^5`.
    #[serde(default = "default_trials")]
    pub trials: u64,
}

/// Relaxation runs from random starts on one field instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    #[serde(default)]
    pub seed: u64,
    pub model: Couplings,
    pub n: usize,
    pub sigma: f64,
    /// Default 100.
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_relax")]
    pub relax: RelaxOptions,
    /// Record every `stride`-th step of the first start. Default 10.
    #[serde(default = "default_stride")]
    pub trajectory_stride: usize,
    /// Length of the recorded trajectory; default 100.
    #[serde(default = "default_trajectory_time")]
    pub trajectory_time: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

/// Mean count across `sigma in [0, sigma_max_factor sigma_c]` at fixed `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCurve {
    #[serde(default)]
    pub seed: u64,
    pub model: Couplings,
    pub n: usize,
    /// Default 41.
    #[serde(default = "default_points")]
    pub points: usize,
    /// Default 2.
    #[serde(default = "default_sigma_max_factor")]
    pub sigma_max_factor: f64,
    /// Monte Carlo instances per point, used when `N <= mc_max_n`. Default 0.
    #[serde(default)]
    pub mc_instances: usize,
    /// Default 8.
    #[serde(default = "default_mc_max_n")]
    pub mc_max_n: usize,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn default_instances() -> usize {
    500
}
fn default_trials() -> u64 {
    100_000
}
fn default_bins() -> usize {
    40
}
fn default_lambdas() -> Vec<f64> {
    vec![0.0, 1.0]
}
fn default_starts() -> usize {
    100
}
fn default_relax() -> RelaxOptions {
    RelaxOptions::new(1000.0)
}
fn default_stride() -> usize {
    10
}
fn default_trajectory_time() -> f64 {
    100.0
}
fn default_points() -> usize {
    41
}
fn default_sigma_max_factor() -> f64 {
    2.0
}
fn default_mc_max_n() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    PredictSweep(PredictSweep),
    McCount(McCount),
    SpectraValidate(SpectraValidate),
    DetIdentity(DetIdentity),
    Dynamics(Dynamics),
    TransitionCurve(TransitionCurve),
}

const KINDS: [&str; 6] = [
    "predict-sweep",
    "mc-count",
    "spectra-validate",
    "det-identity",
    "dynamics",
    "transition-curve",
];

/// A parsed configuration and the keys that were not recognized.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub config: ExperimentConfig,
    pub unknown_keys: Vec<String>,
}

fn typed<T: DeserializeOwned>(v: Value, unknown: &mut Vec<String>) -> CliResult<T> {
    serde_ignored::deserialize(v, |path| unknown.push(path.to_string())).map_err(|e: serde_json::Error| {
        CliError::Config {
            field: None,
            message: e.to_string(),
        }
    })
}

/// Parse a configuration from JSON text. Unknown keys are an error when
/// `strict`, otherwise they are returned for reporting. The result is
/// validated.
pub fn parse_config_str(text: &str, strict: bool) -> CliResult<Parsed> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::Config {
        field: None,
        message: format!("invalid JSON: {e}"),
    })?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Config { field: None, message: "top level must be a JSON object".into() })?;
    let kind = match obj.remove("kind") {
        Some(Value::String(k)) => k,
        Some(_) => return Err(CliError::config("kind", "must be a string")),
        None => return Err(CliError::config("kind", format!("missing; expected one of {KINDS:?}"))),
    };
    let mut unknown = Vec::new();
    let config = match kind.as_str() {
        "predict-sweep" => ExperimentConfig::PredictSweep(typed(value, &mut unknown)?),
        "mc-count" => ExperimentConfig::McCount(typed(value, &mut unknown)?),
        "spectra-validate" => ExperimentConfig::SpectraValidate(typed(value, &mut unknown)?),
        "det-identity" => ExperimentConfig::DetIdentity(typed(value, &mut unknown)?),
        "dynamics" => ExperimentConfig::Dynamics(typed(value, &mut unknown)?),
        "transition-curve" => ExperimentConfig::TransitionCurve(typed(value, &mut unknown)?),
        other => return Err(CliError::config("kind", format!("unknown kind `{other}`; expected one of {KINDS:?}"))),
    };
    if strict && !unknown.is_empty() {
        return Err(CliError::config(unknown[0].clone(), format!("unknown key(s) {unknown:?}")));
    }
    config.validate()?;
    Ok(Parsed {
        config,
        unknown_keys: unknown,
    })
}

pub fn parse_config(path: &Path, strict: bool) -> CliResult<Parsed> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        field: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config_str(&text, strict)
}

fn check_nonneg(field: &str, v: f64) -> CliResult<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(CliError::config(field, format!("must be finite and nonnegative (got {v})")))
    }
}

fn check_sigma_list(sigmas: &[f64]) -> CliResult<()> {
    if sigmas.is_empty() {
        return Err(CliError::config("sigmas", "must not be empty"));
    }
    for (i, &s) in sigmas.iter().enumerate() {
        check_nonneg(&format!("sigmas[{i}]"), s)?;
    }
    Ok(())
}

fn check_even_n(field: &str, n: usize) -> CliResult<()> {
    if n >= 2 && n % 2 == 0 {
        Ok(())
    } else {
        Err(CliError::config(field, format!("exact predictions need an even N >= 2 (got {n})")))
    }
}

fn check_tau(n: usize, tau: f64) -> CliResult<()> {
    EllipticParams::new(n, tau)
        .and_then(|p| p.check_exact_domain())
        .map_err(|e| CliError::from_core_in("tau", e))
}

fn check_solver(s: &SolverOptions) -> CliResult<()> {
    s.validate().map_err(|e| CliError::from_core_in("solver", e))
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::PredictSweep(_) => KINDS[0],
            ExperimentConfig::McCount(_) => KINDS[1],
            ExperimentConfig::SpectraValidate(_) => KINDS[2],
            ExperimentConfig::DetIdentity(_) => KINDS[3],
            ExperimentConfig::Dynamics(_) => KINDS[4],
            ExperimentConfig::TransitionCurve(_) => KINDS[5],
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::PredictSweep(c) => c.seed,
            ExperimentConfig::McCount(c) => c.seed,
            ExperimentConfig::SpectraValidate(c) => c.seed,
            ExperimentConfig::DetIdentity(c) => c.seed,
            ExperimentConfig::Dynamics(c) => c.seed,
            ExperimentConfig::TransitionCurve(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::PredictSweep(c) => c.seed = seed,
            ExperimentConfig::McCount(c) => c.seed = seed,
            ExperimentConfig::SpectraValidate(c) => c.seed = seed,
            ExperimentConfig::DetIdentity(c) => c.seed = seed,
            ExperimentConfig::Dynamics(c) => c.seed = seed,
            ExperimentConfig::TransitionCurve(c) => c.seed = seed,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        match self {
            ExperimentConfig::PredictSweep(c) => {
                check_sigma_list(&c.sigmas)?;
                if c.ns.is_empty() {
                    return Err(CliError::config("ns", "must not be empty"));
                }
                for (i, &n) in c.ns.iter().enumerate() {
                    check_even_n(&format!("ns[{i}]"), n)?;
                }
                c.model.check_sigmas(&c.sigmas)
            }
            ExperimentConfig::McCount(c) => {
                check_sigma_list(&c.sigmas)?;
                c.model.params(c.n, 0.0)?;
                if c.instances == 0 {
                    return Err(CliError::config("instances", "must be at least 1"));
                }
                for (i, &v) in c.lambda_cuts.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(CliError::config(format!("lambda_cuts[{i}]"), "must be finite"));
                    }
                }
                if c.lambda_cuts.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(CliError::config("lambda_cuts", "must be strictly ascending"));
                }
                check_solver(&c.solver)?;
                c.model.check_sigmas(&c.sigmas)
            }
            ExperimentConfig::SpectraValidate(c) => {
                check_even_n("n", c.n)?;
                check_tau(c.n, c.tau)?;
                if c.trials < 2 {
                    return Err(CliError::config("trials", "must be at least 2"));
                }
                if c.bins == 0 {
                    return Err(CliError::config("bins", "must be at least 1"));
                }
                if let Some(w) = c.half_width {
                    if !(w > 0.0 && w.is_finite()) {
                        return Err(CliError::config("half_width", format!("must be positive (got {w})")));
                    }
                }
                Ok(())
            }
            ExperimentConfig::DetIdentity(c) => {
                check_even_n("n", c.n)?;
                check_tau(c.n, c.tau)?;
                if c.trials < 2 {
                    return Err(CliError::config("trials", "must be at least 2"));
                }
                if c.lambdas.is_empty() {
                    return Err(CliError::config("lambdas", "must not be empty"));
                }
                for (i, &l) in c.lambdas.iter().enumerate() {
                    if !l.is_finite() {
                        return Err(CliError::config(format!("lambdas[{i}]"), "must be finite"));
                    }
                }
                Ok(())
            }
            ExperimentConfig::Dynamics(c) => {
                check_nonneg("sigma", c.sigma)?;
                c.model.params(c.n, c.sigma)?;
                if c.starts == 0 {
                    return Err(CliError::config("starts", "must be at least 1"));
                }
                let r = &c.relax;
                if !(r.t_max > 0.0 && r.t_max.is_finite()) {
                    return Err(CliError::config("relax.t_max", "must be positive and finite"));
                }
                if !(r.speed_tolerance > 0.0) {
                    return Err(CliError::config("relax.speed_tolerance", "must be positive"));
                }
                if let Some(dt) = r.dt {
                    if !(dt > 0.0 && dt.is_finite()) {
                        return Err(CliError::config("relax.dt", "must be positive and finite"));
                    }
                }
                if c.trajectory_stride == 0 {
                    return Err(CliError::config("trajectory_stride", "must be at least 1"));
                }
                if !(c.trajectory_time > 0.0 && c.trajectory_time.is_finite()) {
                    return Err(CliError::config("trajectory_time", "must be positive and finite"));
                }
                check_solver(&c.solver)?;
                c.model.check_sigmas(&[c.sigma])
            }
            ExperimentConfig::TransitionCurve(c) => {
                check_even_n("n", c.n)?;
                if c.points < 2 {
                    return Err(CliError::config("points", "must be at least 2"));
                }
                if !(c.sigma_max_factor > 0.0 && c.sigma_max_factor.is_finite()) {
                    return Err(CliError::config("sigma_max_factor", "must be positive and finite"));
                }
                check_solver(&c.solver)?;
                let cov = c.model.covariance()?;
                let dp = derived_params(&cov, 0.0).map_err(|e| CliError::from_core_in("model", e))?;
                if dp.sigma_c == 0.0 {
                    return Err(CliError::config("model", "sigma_c = 0: the transition is degenerate"));
                }
                c.model.check_sigmas(&transition_sigmas(c, dp.sigma_c))
            }
        }
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// The sigma grid of a transition curve.
pub fn transition_sigmas(c: &TransitionCurve, sigma_c: f64) -> Vec<f64> {
    let top = c.sigma_max_factor * sigma_c;
    (0..c.points)
        .map(|i| top * i as f64 / (c.points - 1) as f64)
        .collect()
}
