//! Gauss-Legendre panels with adaptive bisection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are the roots of `P_n`, refined by Newton's method from the
    /// Tricomi initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, half * w))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (p, pm1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (x * p - pm1) / (x * x - 1.0);
    (p, d)
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    /// Absolute tolerance for the total integral.
    pub abs_tol: f64,
    /// Relative tolerance for the total integral.
    pub rel_tol: f64,
    /// Maximum bisection depth of a single panel.
    pub max_depth: u32,
    /// Nodes per panel.
    pub order: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_depth: 40,
            order: 15,
        }
    }
}

impl QuadOptions {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive integration of `f` over `[a, b]`, with `breakpoints`
/// used as initial panel boundaries.
///
/// Each panel's error is estimated by comparing the whole-panel rule with the
/// sum over its two halves. The panel with the largest estimate is bisected
/// until the total estimate meets `max(abs_tol, rel_tol |value|)`. Panels at
/// `max_depth`, or whose estimate is at rounding level, are not split again.
/// The call fails if the final error exceeds the tolerance by more than a
/// factor 1e3.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "integration bounds must be finite (got [{a}, {b}])"
        )));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let rule = GaussLegendre::new(opts.order);
    let mut cuts: Vec<f64> = std::iter::once(lo)
        .chain(breakpoints.iter().copied().filter(|&p| p > lo && p < hi))
        .chain(std::iter::once(hi))
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();

    let mut evaluations = 0usize;
    let mut assess = |x0: f64, x1: f64, depth: u32| {
        let mid = 0.5 * (x0 + x1);
        let left = rule.integrate(&f, x0, mid);
        let right = rule.integrate(&f, mid, x1);
        let whole = rule.integrate(&f, x0, x1);
        evaluations += 3 * rule.len();
        let value = left + right;
        let err = (value - whole).abs();
        let rounding = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        let settled = err <= rounding || depth >= opts.max_depth || !(mid > x0 && mid < x1);
        Panel { x0, x1, value, err, depth, settled }
    };

    let mut heap: BinaryHeap<Panel> = cuts.windows(2).map(|w| assess(w[0], w[1], 0)).collect();
    let mut done: Vec<Panel> = Vec::new();
    let total = |heap: &BinaryHeap<Panel>, done: &[Panel]| {
        let (mut v, mut e) = (0.0, 0.0);
        for p in heap.iter().chain(done) {
            v += p.value;
            e += p.err;
        }
        (v, e)
    };
    let (mut value, mut error) = total(&heap, &done);
    let mut splits = 0usize;
    while error > opts.abs_tol.max(opts.rel_tol * value.abs()) {
        if splits >= MAX_SPLITS {
            break;
        }
        let Some(p) = heap.pop() else { break };
        if p.settled {
            done.push(p);
            continue;
        }
        let mid = 0.5 * (p.x0 + p.x1);
        let l = assess(p.x0, mid, p.depth + 1);
        let r = assess(mid, p.x1, p.depth + 1);
        value += l.value + r.value - p.value;
        error += l.err + r.err - p.err;
        heap.push(l);
        heap.push(r);
        splits += 1;
        // Running sums drift; recompute them now and then.
        if splits % 1024 == 0 {
            (value, error) = total(&heap, &done);
        }
    }
    let (value, error) = total(&heap, &done);
    let final_tol = opts.abs_tol.max(opts.rel_tol * value.abs());
    if error > 1e3 * final_tol {
        return Err(Error::Numerical(format!(
            "adaptive quadrature on [{lo}, {hi}] did not converge (error estimate {error:e})"
        )));
    }
    Ok(QuadResult {
        value: sign * value,
        error,
        evaluations,
    })
}

/// Upper bound on bisections per call.
const MAX_SPLITS: usize = 1 << 20;

/// A panel awaiting refinement, ordered by error estimate.
#[derive(Debug, Clone, Copy)]
struct Panel {
    x0: f64,
    x1: f64,
    value: f64,
    err: f64,
    depth: u32,
    settled: bool,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        // Ties broken by position so the refinement order is deterministic.
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.x0.total_cmp(&self.x0))
    }
}

/// Convenience wrapper returning only the value.
pub fn integrate_value<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<f64> {
    integrate(f, a, b, &[], opts).map(|r| r.value)
}
