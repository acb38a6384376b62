//! Tabulated densities of real eigenvalues and their export.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::fmt_f64;

use super::{
    rho_real_bulk, rho_real_edge, rho_real_outside, EllipticParams, RealCountHistogram, RealDensity,
};

/// How the values of a profile were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityMethod {
    ExactHermite,
    BulkAsymptotic,
    EdgeAsymptotic,
    OutsideAsymptotic,
    MonteCarlo,
}

impl DensityMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            DensityMethod::ExactHermite => "exact-hermite",
            DensityMethod::BulkAsymptotic => "bulk-asymptotic",
            DensityMethod::EdgeAsymptotic => "edge-asymptotic",
            DensityMethod::OutsideAsymptotic => "outside-asymptotic",
            DensityMethod::MonteCarlo => "monte-carlo",
        }
    }
}

/// `rho_N(lambda sqrt(N))` tabulated on a grid of scaled `lambda` values.
///
/// `normalization` is `int rho(x) dx` over the real line in unscaled units,
/// i.e. the expected number of real eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub n: usize,
    pub tau: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub normalization: f64,
    pub method: DensityMethod,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
}

/// `points` Chebyshev nodes on `[-half_width, half_width]`, ascending.
/// Nodes are symmetric about zero, so the grid contains `g` iff it contains
/// `-g`.
pub fn chebyshev_grid(half_width: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|j| {
            let theta = PI * (2 * (points - j) - 1) as f64 / (2 * points) as f64;
            half_width * theta.cos()
        })
        .collect()
}

/// Smallest `lambda > 1 + tau` where the outside asymptotic is below `ratio`
/// times the bulk value.
fn grid_half_width(n: usize, tau: f64, ratio: f64) -> Result<f64> {
    let bulk = rho_real_bulk(tau)?;
    let target = bulk.ln() + ratio.ln();
    let mut lam = 1.0 + tau + 1e-3;
    while rho_real_outside(tau, lam)?.ln_density(n) > target {
        lam += 0.01;
        if lam > 100.0 {
            return Err(Error::Numerical("density grid half-width search did not terminate".into()));
        }
    }
    Ok(lam)
}

fn trapezoid_scaled(n: usize, grid: &[f64], values: &[f64]) -> f64 {
    let s: f64 = grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum();
    s * (n as f64).sqrt()
}

impl DensityProfile {
    /// Closed-form density on a Chebyshev grid whose half-width is chosen so
    /// that the density beyond it is below `1e-16` of the bulk value.
    pub fn exact(n: usize, tau: f64, points: usize, rel_tol: f64) -> Result<Self> {
        EllipticParams::new(n, tau)?.check_exact_domain()?;
        if points < 2 {
            return Err(Error::param("points", "need at least two grid points"));
        }
        let d = RealDensity::new(n, tau)?;
        let half = grid_half_width(n, tau, 1e-16)?;
        let grid = chebyshev_grid(half, points);
        let sqrt_n = (n as f64).sqrt();
        let values = grid.iter().map(|&l| d.rho(l * sqrt_n)).collect();
        Ok(Self {
            n,
            tau,
            grid,
            values,
            normalization: d.expected_real_count(rel_tol)?,
            method: DensityMethod::ExactHermite,
            tolerance: Some(rel_tol),
            seed: None,
        })
    }

    /// Bulk value inside `|lambda| < 1 + tau`, zero outside.
    pub fn bulk_asymptotic(n: usize, tau: f64, grid: Vec<f64>) -> Result<Self> {
        let bulk = rho_real_bulk(tau)?;
        let values: Vec<f64> = grid
            .iter()
            .map(|&l| if l.abs() < 1.0 + tau { bulk } else { 0.0 })
            .collect();
        Self::assemble(n, tau, grid, values, DensityMethod::BulkAsymptotic)
    }

    /// `Q exp(-N Psi)`; every grid point must lie outside the bulk.
    pub fn outside_asymptotic(n: usize, tau: f64, grid: Vec<f64>) -> Result<Self> {
        let values = grid
            .iter()
            .map(|&l| rho_real_outside(tau, l).map(|o| o.ln_density(n).exp()))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(n, tau, grid, values, DensityMethod::OutsideAsymptotic)
    }

    /// Edge profile under `lambda = 1 + tau + zeta sqrt(1 - tau^2) / sqrt(N)`,
    /// mirrored for negative `lambda`, divided by the Jacobian `sqrt(1 - tau^2)`
    /// so that it joins the bulk value.
    pub fn edge_asymptotic(n: usize, tau: f64, grid: Vec<f64>) -> Result<Self> {
        rho_real_bulk(tau)?;
        let width = (1.0 - tau * tau).sqrt();
        let scale = width / (n as f64).sqrt();
        let values = grid
            .iter()
            .map(|&l| rho_real_edge((l.abs() - 1.0 - tau) / scale) / width)
            .collect();
        Self::assemble(n, tau, grid, values, DensityMethod::EdgeAsymptotic)
    }

    /// Histogram bin centers (scaled by `1/sqrt(N)`) and per-bin densities.
    pub fn from_histogram(h: &RealCountHistogram) -> Self {
        let sqrt_n = (h.n as f64).sqrt();
        Self {
            n: h.n,
            tau: h.tau,
            grid: h.centers().iter().map(|c| c / sqrt_n).collect(),
            values: h.density.iter().map(|e| e.mean).collect(),
            normalization: h.count.mean,
            method: DensityMethod::MonteCarlo,
            tolerance: None,
            seed: Some(h.seed),
        }
    }

    fn assemble(n: usize, tau: f64, grid: Vec<f64>, values: Vec<f64>, method: DensityMethod) -> Result<Self> {
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param("grid", "must be strictly ascending"));
        }
        Ok(Self {
            n,
            tau,
            normalization: trapezoid_scaled(n, &grid, &values),
            grid,
            values,
            method,
            tolerance: None,
            seed: None,
        })
    }

    /// CSV with columns `lambda,rho,method`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        wr.write_record(["lambda", "rho", "method"]).map_err(fmt)?;
        for (g, v) in self.grid.iter().zip(&self.values) {
            wr.write_record([fmt_f64(*g), fmt_f64(*v), self.method.as_str().to_string()])
                .map_err(fmt)?;
        }
        wr.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}
