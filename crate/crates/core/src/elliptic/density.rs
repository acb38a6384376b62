//! Closed-form density of real eigenvalues for even `N` and `|tau| < 1`.
//!
//! With `psi_k(x) = exp(-x^2 / (2(1+tau))) h_k(x)`,
//!
//! ```text
//! rho(x) = 1/sqrt(2 pi) sum_{k=0}^{N-2} psi_k(x)^2 / k!
//!        + 1/(sqrt(2 pi) (1+tau) (N-2)!) psi_{N-1}(x) int_0^x psi_{N-2}(u) du
//! ```
//!
//! Everything is evaluated through the normalized polynomials
//! `h_k / sqrt(k!)`, whose three-term recurrence is run with a separate
//! exponent so that neither the polynomial nor the Gaussian factor overflows.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{self, GaussLegendre, QuadOptions};

use super::EllipticParams;

/// `h_k^tau(x)` from `h_{k+1} = x h_k - tau k h_{k-1}`, `h_0 = 1`, `h_1 = x`.
///
/// Unnormalized; overflows to infinity for large `k |x|`.
pub fn hermite_tau(k: usize, tau: f64, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return 1.0;
    }
    for j in 1..k {
        let next = x * cur - tau * j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SignedLog {
    pub sign: f64,
    pub ln_abs: f64,
}

impl SignedLog {
    fn new(v: f64, ln_scale: f64) -> Self {
        if v == 0.0 {
            Self { sign: 0.0, ln_abs: f64::NEG_INFINITY }
        } else {
            Self { sign: v.signum(), ln_abs: v.abs().ln() + ln_scale }
        }
    }

    fn value(&self) -> f64 {
        if self.sign == 0.0 { 0.0 } else { self.sign * self.ln_abs.exp() }
    }
}

pub(crate) struct HermiteRun {
    /// `ln sum_{k <= sum_to} (h_k / sqrt(k!))^2`.
    pub ln_sum_sq: f64,
    /// `h_kmax / sqrt(kmax!)`.
    pub last: SignedLog,
}

const BIG: f64 = 1e150;
const LN_BIG: f64 = 345.387_763_949_107; // ln(1e150)

/// Normalized recurrence `g_{k+1} = (x g_k - tau sqrt(k) g_{k-1}) / sqrt(k+1)`.
pub(crate) fn normalized_hermite_run(tau: f64, x: f64, kmax: usize, sum_to: usize) -> HermiteRun {
    let (mut prev, mut cur) = (0.0f64, 1.0f64);
    // Values are `cur * e^{ln_scale}`; the sum is `sum * e^{ln_sum_scale}`.
    let mut ln_scale = 0.0f64;
    let mut ln_sum_scale = 0.0f64;
    let mut term_factor = 1.0f64;
    let mut sum = 0.0f64;
    for k in 0..kmax {
        if k <= sum_to {
            sum += cur * cur * term_factor;
        }
        let next = (x * cur - tau * (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        let rescale = if cur.abs() > BIG {
            Some(LN_BIG)
        } else if cur.abs() < 1.0 / BIG && prev.abs() < 1.0 / BIG && (cur != 0.0 || prev != 0.0) {
            Some(-LN_BIG)
        } else {
            None
        };
        if let Some(step) = rescale {
            let f = (-step).exp();
            cur *= f;
            prev *= f;
            ln_scale += step;
            if 2.0 * ln_scale > ln_sum_scale {
                sum *= (ln_sum_scale - 2.0 * ln_scale).exp();
                ln_sum_scale = 2.0 * ln_scale;
            }
            term_factor = (2.0 * ln_scale - ln_sum_scale).exp();
        }
    }
    if kmax <= sum_to {
        sum += cur * cur * term_factor;
    }
    HermiteRun {
        ln_sum_sq: sum.ln() + ln_sum_scale,
        last: SignedLog::new(cur, ln_scale),
    }
}

const PANEL_NODES: usize = 16;
/// Stop extending the antiderivative table once the integrand has dropped by
/// this many e-folds below its running maximum.
const TABLE_DECAY: f64 = 50.0;

/// Evaluator of the exact density for one `(N, tau)`.
///
/// Construction tabulates `int_0^x psi_{N-2}` on fixed panels so each density
/// evaluation costs one recurrence plus one partial panel.
#[derive(Debug, Clone)]
pub struct RealDensity {
    n: usize,
    tau: f64,
    panel: f64,
    cumulative: Vec<f64>,
    rule: GaussLegendre,
}

impl RealDensity {
    pub fn new(n: usize, tau: f64) -> Result<Self> {
        EllipticParams { n, tau }.check_exact_domain()?;
        if n < 2 {
            return Err(Error::Domain("closed-form density needs N >= 2".into()));
        }
        let panel = (2.0 / (n as f64).sqrt()).min(0.25);
        let mut d = Self {
            n,
            tau,
            panel,
            cumulative: vec![0.0],
            rule: GaussLegendre::new(PANEL_NODES),
        };
        d.build_table();
        Ok(d)
    }

    pub fn params(&self) -> EllipticParams {
        EllipticParams { n: self.n, tau: self.tau }
    }

    fn ln_psi(&self, k: usize, x: f64) -> SignedLog {
        let run = normalized_hermite_run(self.tau, x, k, 0);
        SignedLog {
            sign: run.last.sign,
            ln_abs: run.last.ln_abs - x * x / (2.0 * (1.0 + self.tau)),
        }
    }

    fn integrand(&self, u: f64) -> f64 {
        self.ln_psi(self.n - 2, u).value()
    }

    fn build_table(&mut self) {
        let edge = (1.0 + self.tau.abs()) * (self.n as f64).sqrt() + 3.0;
        let cap = 10.0 * ((self.n as f64).sqrt() + 10.0);
        let mut ln_max = f64::NEG_INFINITY;
        let mut j = 0usize;
        loop {
            let (a, b) = (j as f64 * self.panel, (j + 1) as f64 * self.panel);
            let part = self.rule.integrate(|u| self.integrand(u), a, b);
            let last = *self.cumulative.last().unwrap();
            self.cumulative.push(last + part);
            let ln_end = self.ln_psi(self.n - 2, b).ln_abs;
            ln_max = ln_max.max(ln_end);
            j += 1;
            if (b > edge && ln_end < ln_max - TABLE_DECAY) || b > cap {
                break;
            }
        }
    }

    /// `int_0^x psi_{N-2}(u) / sqrt((N-2)!) du`.
    pub(crate) fn antiderivative(&self, x: f64) -> f64 {
        let ax = x.abs();
        let j = (ax / self.panel).floor() as usize;
        let v = if j + 1 >= self.cumulative.len() {
            *self.cumulative.last().unwrap()
        } else {
            let a = j as f64 * self.panel;
            self.cumulative[j] + self.rule.integrate(|u| self.integrand(u), a, ax)
        };
        if x < 0.0 { -v } else { v }
    }

    /// `ln rho(x)`, finite wherever the density is representable in log form.
    pub fn ln_rho(&self, x: f64) -> f64 {
        let (tau, n) = (self.tau, self.n);
        let run = normalized_hermite_run(tau, x, n - 1, n - 2);
        let ln_norm = -0.5 * (2.0 * PI).ln();
        let l1 = ln_norm - x * x / (1.0 + tau) + run.ln_sum_sq;
        let integral = self.antiderivative(x);
        if run.last.sign == 0.0 || integral == 0.0 {
            return l1;
        }
        let l2 = ln_norm + 0.5 * ((n - 1) as f64).ln() - (1.0 + tau).ln() + run.last.ln_abs
            - x * x / (2.0 * (1.0 + tau))
            + integral.abs().ln();
        let s2 = run.last.sign * integral.signum();
        let m = l1.max(l2);
        let total = (l1 - m).exp() + s2 * (l2 - m).exp();
        if total > 0.0 { m + total.ln() } else { f64::NEG_INFINITY }
    }

    pub fn rho(&self, x: f64) -> f64 {
        self.ln_rho(x).exp()
    }

    /// The two terms `(rho_1, rho_2)` separately.
    pub fn rho_parts(&self, x: f64) -> (f64, f64) {
        let (tau, n) = (self.tau, self.n);
        let run = normalized_hermite_run(tau, x, n - 1, n - 2);
        let norm = 1.0 / (2.0 * PI).sqrt();
        let rho1 = norm * (run.ln_sum_sq - x * x / (1.0 + tau)).exp();
        let psi_last = SignedLog {
            sign: run.last.sign,
            ln_abs: run.last.ln_abs - x * x / (2.0 * (1.0 + tau)),
        }
        .value();
        let rho2 = norm * ((n - 1) as f64).sqrt() / (1.0 + tau) * psi_last * self.antiderivative(x);
        (rho1, rho2)
    }

    /// A point beyond which the density is below `exp(-decay)` times its
    /// value at the origin.
    pub fn support_bound(&self, decay: f64) -> f64 {
        let ln0 = self.ln_rho(0.0);
        let step = self.panel;
        let edge = (1.0 + self.tau) * (self.n as f64).sqrt();
        let mut x = edge.max(step);
        while self.ln_rho(x) > ln0 - decay {
            x += step;
        }
        x
    }

    /// `int rho` over the real line: the expected number of real eigenvalues.
    pub fn expected_real_count(&self, rel_tol: f64) -> Result<f64> {
        let upper = self.support_bound(60.0);
        let breaks: Vec<f64> = (1..)
            .map(|j| j as f64 * 4.0 * self.panel)
            .take_while(|&p| p < upper)
            .collect();
        let opts = QuadOptions::with_tolerances(0.0, rel_tol);
        let half = quadrature::integrate(|x| self.rho(x), 0.0, upper, &breaks, &opts)?;
        Ok(2.0 * half.value)
    }
}

/// `rho_N^(r)(x)` for one point.
pub fn rho_real_exact(p: &EllipticParams, x: f64) -> Result<f64> {
    Ok(RealDensity::new(p.n, p.tau)?.rho(x))
}
