//! The spherically constrained flow `dx/dt = -lambda(x) x + h + f(x)` with
//! `lambda(x) = x.(h + f(x)) / N`.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::equilibria::{CountReport, SolverOptions};
use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::field_model::FieldInstance;

/// Relative tolerance on `|x|^2 / N - 1` accepted by [`lambda_of_state`].
pub const SPHERE_TOLERANCE: f64 = 1e-6;
/// Starting points must satisfy `| |x|^2/N - 1 | <= 1e-12`.
const START_TOLERANCE: f64 = 1e-12;
/// Without renormalization, relative norm drift beyond this is an error.
const DIVERGENCE_DRIFT: f64 = 0.1;

fn sphere_defect(x: &DVector<f64>) -> f64 {
    (x.norm_squared() / x.len() as f64 - 1.0).abs()
}

fn check_dim(inst: &FieldInstance, x: &DVector<f64>) -> Result<()> {
    if x.len() != inst.n() {
        return Err(Error::DimensionMismatch {
            expected: inst.n(),
            got: x.len(),
        });
    }
    Ok(())
}

/// The Lagrange multiplier `x.(h + f(x)) / N` keeping the flow on the sphere.
pub fn lambda_of_state(inst: &FieldInstance, x: &DVector<f64>) -> Result<f64> {
    check_dim(inst, x)?;
    let d = sphere_defect(x);
    if !(d <= SPHERE_TOLERANCE) {
        return Err(Error::Domain(format!(
            "state is off the sphere: | |x|^2/N - 1 | = {d:e} exceeds {SPHERE_TOLERANCE:e}"
        )));
    }
    Ok(multiplier(inst, x))
}

fn multiplier(inst: &FieldInstance, x: &DVector<f64>) -> f64 {
    x.dot(&(inst.field_unchecked(x) + inst.h())) / inst.n() as f64
}

fn velocity(inst: &FieldInstance, x: &DVector<f64>) -> DVector<f64> {
    inst.flow_with_lambda(x, multiplier(inst, x))
}

fn rk4_step(inst: &FieldInstance, x: &DVector<f64>, dt: f64) -> DVector<f64> {
    let k1 = velocity(inst, x);
    let k2 = velocity(inst, &(x + &k1 * (dt / 2.0)));
    let k3 = velocity(inst, &(x + &k2 * (dt / 2.0)));
    let k4 = velocity(inst, &(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn project(x: &mut DVector<f64>) {
    let s = (x.len() as f64).sqrt() / x.norm();
    *x *= s;
}

/// `0.01 / sqrt(Phi1'(1) + sigma^2)`, or `0.01` for a vanishing field.
pub fn default_time_step(inst: &FieldInstance) -> f64 {
    let p = inst.params();
    let scale = p.covariance_pair().phi1_prime(1.0) + p.sigma * p.sigma;
    if scale > 0.0 {
        0.01 / scale.sqrt()
    } else {
        0.01
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationOptions {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_true")]
    pub renormalize: bool,
    /// Record every `stride`-th step (the first and last states are always
    /// recorded).
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_true() -> bool {
    true
}
fn default_stride() -> usize {
    1
}

impl IntegrationOptions {
    pub fn new(dt: f64, t_end: f64, renormalize: bool) -> Self {
        Self {
            dt,
            t_end,
            renormalize,
            stride: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive (got {})", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", format!("must be finite and nonnegative (got {})", self.t_end)));
        }
        if self.stride == 0 {
            return Err(Error::param("stride", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
    /// `|dx/dt|` at each recorded state.
    pub speeds: Vec<f64>,
    /// Max of `| |x|^2/N - 1 |` over all steps.
    pub constraint_drift: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> DVector<f64> {
        DVector::from_column_slice(self.states.last().expect("trajectory has at least one state"))
    }

    /// CSV with columns `t,lambda,speed` and, if requested, `x0..x{N-1}`.
    pub fn write_csv<W: Write>(&self, w: W, with_state: bool) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        let n = self.states.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string(), "lambda".into(), "speed".into()];
        if with_state {
            header.extend((0..n).map(|i| format!("x{i}")));
        }
        wr.write_record(&header).map_err(fmt)?;
        for i in 0..self.times.len() {
            let mut row = vec![fmt_f64(self.times[i]), fmt_f64(self.lambdas[i]), fmt_f64(self.speeds[i])];
            if with_state {
                row.extend(self.states[i].iter().map(|v| fmt_f64(*v)));
            }
            wr.write_record(&row).map_err(fmt)?;
        }
        wr.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

fn check_start(inst: &FieldInstance, x0: &DVector<f64>) -> Result<()> {
    check_dim(inst, x0)?;
    let d = sphere_defect(x0);
    if !(d <= START_TOLERANCE) {
        return Err(Error::Domain(format!(
            "initial state must lie on the sphere (| |x|^2/N - 1 | = {d:e})"
        )));
    }
    Ok(())
}

/// Classical fourth-order Runge-Kutta integration of the constrained flow,
/// with the multiplier recomputed at every stage.
pub fn integrate(inst: &FieldInstance, x0: &DVector<f64>, opts: &IntegrationOptions) -> Result<Trajectory> {
    opts.validate()?;
    check_start(inst, x0)?;
    let steps = (opts.t_end / opts.dt).ceil() as usize;
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        lambdas: Vec::new(),
        speeds: Vec::new(),
        constraint_drift: sphere_defect(&x),
    };
    let record = |traj: &mut Trajectory, t: f64, x: &DVector<f64>| {
        let lam = multiplier(inst, x);
        traj.times.push(t);
        traj.states.push(x.iter().copied().collect());
        traj.lambdas.push(lam);
        traj.speeds.push(inst.flow_with_lambda(x, lam).norm());
    };
    record(&mut traj, t, &x);
    for i in 0..steps {
        let h = (opts.t_end - t).min(opts.dt);
        x = rk4_step(inst, &x, h);
        if opts.renormalize {
            project(&mut x);
        }
        t = if i + 1 == steps { opts.t_end } else { t + h };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("integration produced non-finite state at t = {t}")));
        }
        let d = sphere_defect(&x);
        traj.constraint_drift = traj.constraint_drift.max(d);
        if !opts.renormalize && d > DIVERGENCE_DRIFT {
            return Err(Error::Numerical(format!(
                "norm drift {d:e} exceeds {DIVERGENCE_DRIFT} at t = {t}; reduce dt or enable renormalization"
            )));
        }
        if (i + 1) % opts.stride == 0 || i + 1 == steps {
            record(&mut traj, t, &x);
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxStatus {
    /// Speed fell below the threshold.
    Converged,
    /// Not converged and the final state revisits an earlier neighbourhood.
    Cycling,
    /// Not converged and no recurrence was detected.
    Wandering,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxOptions {
    /// Defaults to [`default_time_step`].
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_max: f64,
    #[serde(default = "default_speed_tolerance")]
    pub speed_tolerance: f64,
}

fn default_speed_tolerance() -> f64 {
    1e-8
}

impl RelaxOptions {
    pub fn new(t_max: f64) -> Self {
        Self {
            dt: None,
            t_max,
            speed_tolerance: default_speed_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxOutcome {
    pub status: RelaxStatus,
    pub terminal: Vec<f64>,
    pub lambda: f64,
    pub time: f64,
    pub speed: f64,
    /// Equation residual at the terminal state.
    pub residual: f64,
    /// Index into the report's points of the equilibrium reached.
    pub matched: Option<usize>,
    pub constraint_drift: f64,
}

/// Integrate (with renormalization) until `|dx/dt|` drops below the speed
/// threshold or `t_max` is reached. A converged terminal state is refined by
/// Newton iteration and matched against `report` within its dedup radius.
pub fn run_to_equilibrium(
    inst: &FieldInstance,
    x0: &DVector<f64>,
    opts: &RelaxOptions,
    report: Option<&CountReport>,
) -> Result<RelaxOutcome> {
    check_start(inst, x0)?;
    let dt = opts.dt.unwrap_or_else(|| default_time_step(inst));
    if !(dt > 0.0 && opts.t_max > 0.0 && opts.speed_tolerance > 0.0) {
        return Err(Error::param("dt", "dt, t_max and speed_tolerance must be positive"));
    }
    let steps = (opts.t_max / dt).ceil() as usize;
    // Sparse history for recurrence detection.
    let history_stride = (steps / 2000).max(1);
    let mut history: Vec<DVector<f64>> = Vec::new();
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut drift = 0.0f64;
    let mut lam = multiplier(inst, &x);
    let mut speed = inst.flow_with_lambda(&x, lam).norm();
    let mut status = RelaxStatus::Wandering;
    for i in 0..steps {
        if speed < opts.speed_tolerance {
            status = RelaxStatus::Converged;
            break;
        }
        if i % history_stride == 0 {
            history.push(x.clone());
        }
        x = rk4_step(inst, &x, dt);
        project(&mut x);
        t += dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("integration produced non-finite state at t = {t}")));
        }
        drift = drift.max(sphere_defect(&x));
        lam = multiplier(inst, &x);
        speed = inst.flow_with_lambda(&x, lam).norm();
    }
    if status != RelaxStatus::Converged && speed < opts.speed_tolerance {
        status = RelaxStatus::Converged;
    }
    if status != RelaxStatus::Converged {
        let radius = 1e-2 * (inst.n() as f64).sqrt();
        // Skip the most recent tenth of the history (the current neighbourhood).
        let keep = history.len() - history.len() / 10;
        if history[..keep].iter().any(|h| (h - &x).norm() < radius) {
            status = RelaxStatus::Cycling;
        }
    }
    let residual = crate::equilibria::equation_residual(inst, &x, lam);
    let matched = match (status, report) {
        (RelaxStatus::Converged, Some(rep)) => {
            let refined = crate::equilibria::refine(inst, &x, &SolverOptions::default());
            let target = refined.as_ref().map_or(&x, |(xr, _)| xr);
            rep.locate(target, rep.dedup_radius)
        }
        _ => None,
    };
    Ok(RelaxOutcome {
        status,
        terminal: x.iter().copied().collect(),
        lambda: lam,
        time: t,
        speed,
        residual,
        matched,
        constraint_drift: drift,
    })
}
