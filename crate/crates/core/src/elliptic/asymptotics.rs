//! Large-N forms of the real-eigenvalue density.

use std::f64::consts::PI;

use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};

fn check_tau(tau: f64) -> Result<()> {
    if tau.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("asymptotic density needs |tau| < 1 (got {tau})")))
    }
}

/// Bulk value of `rho_N(lambda sqrt(N))` for `|lambda| < 1 + tau`.
pub fn rho_real_bulk(tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(1.0 / (2.0 * PI * (1.0 - tau * tau)).sqrt())
}

/// `rho_N(lambda sqrt(N)) ~ Q exp(-N Psi)` outside the bulk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutsideAsymptotic {
    /// `Psi(lambda) >= 0`.
    pub rate: f64,
    /// `Q(lambda) / sqrt(N)`.
    pub prefactor_per_sqrt_n: f64,
}

impl OutsideAsymptotic {
    pub fn prefactor(&self, n: usize) -> f64 {
        self.prefactor_per_sqrt_n * (n as f64).sqrt()
    }

    pub fn ln_density(&self, n: usize) -> f64 {
        self.prefactor(n).ln() - n as f64 * self.rate
    }
}

/// Rate and prefactor outside the bulk, `|lambda| > 1 + tau`.
///
/// The term `(lambda - s)^2 / (8 tau)` with `s = sqrt(lambda^2 - 4 tau)` is
/// evaluated as `2 tau / (lambda + s)^2`, which is regular at `tau = 0`.
pub fn rho_real_outside(tau: f64, lam: f64) -> Result<OutsideAsymptotic> {
    check_tau(tau)?;
    let l = lam.abs();
    if !(l > 1.0 + tau) {
        return Err(Error::Domain(format!(
            "lambda = {lam} lies inside the bulk |lambda| <= 1 + tau = {}",
            1.0 + tau
        )));
    }
    let s = (l * l - 4.0 * tau).sqrt();
    let rate = -0.5 + l * l / (2.0 * (1.0 + tau)) - 2.0 * tau / ((l + s) * (l + s)) - ((l + s) / 2.0).ln();
    let prefactor_per_sqrt_n = (1.0 / (2.0 * PI * (1.0 + tau) * s * (l + s))).sqrt();
    Ok(OutsideAsymptotic {
        rate,
        prefactor_per_sqrt_n,
    })
}

/// Edge profile of the real-eigenvalue density: with
/// `x = (1+tau) sqrt(N) + zeta sqrt(1 - tau^2)`, `sqrt(1 - tau^2) rho_N(x)`
/// tends to `rho_real_edge(zeta)`.
pub fn rho_real_edge(zeta: f64) -> f64 {
    ln_rho_real_edge(zeta).exp()
}

/// `ln rho_edge(zeta)`, finite for all finite `zeta`.
pub fn ln_rho_real_edge(zeta: f64) -> f64 {
    let c = 1.0 / (2.0 * (2.0 * PI).sqrt());
    if zeta < 20.0 {
        let v = c * (erfc(std::f64::consts::SQRT_2 * zeta)
            + std::f64::consts::FRAC_1_SQRT_2 * (-zeta * zeta).exp() * (1.0 + erf(zeta)));
        v.ln()
    } else {
        // erfc(sqrt2 zeta) is below e^{-800} relative to the Gaussian term here.
        -zeta * zeta - (2.0 * PI.sqrt()).ln() + (1.0 - 0.5 * erfc(zeta)).ln()
    }
}

/// Density in the weakly non-gradient limit `tau = 1 - u^2/N`:
/// `sqrt(N)/pi * int_0^{sqrt(1 - lambda^2/4)} exp(-u^2 t^2) dt`.
pub fn rho_real_weak_nongradient(u: f64, lam: f64, n: usize) -> Result<f64> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::param("u", format!("must be finite and nonnegative (got {u})")));
    }
    if !(lam.abs() < 2.0) {
        return Err(Error::Domain(format!("weak non-gradient density needs |lambda| < 2 (got {lam})")));
    }
    let a = (1.0 - lam * lam / 4.0).sqrt();
    Ok((n as f64).sqrt() / PI * gaussian_segment(u, a))
}

/// `int_0^a exp(-u^2 t^2) dt`.
pub(crate) fn gaussian_segment(u: f64, a: f64) -> f64 {
    let z = u * a;
    if z < 1e-4 {
        // a (1 - z^2/3 + z^4/10)
        a * (1.0 - z * z / 3.0 + z.powi(4) / 10.0)
    } else {
        PI.sqrt() * erf(z) / (2.0 * u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_value, QuadOptions};

    #[test]
    fn bulk_values() {
        assert!((rho_real_bulk(0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((rho_real_bulk(0.6).unwrap() - 0.498_677_850_501_790_9).abs() < 1e-12);
        assert_eq!(rho_real_bulk(0.3).unwrap(), rho_real_bulk(-0.3).unwrap());
        assert!(rho_real_bulk(1.0).is_err());
    }

    #[test]
    fn outside_rate_vanishes_at_edge_and_is_positive_beyond() {
        for tau in [-0.5, 0.0, 0.3, 0.8] {
            let just = rho_real_outside(tau, 1.0 + tau + 1e-9).unwrap();
            assert!(just.rate.abs() < 1e-8, "tau={tau}: {}", just.rate);
        }
        let r = rho_real_outside(0.5, 2.0).unwrap();
        assert!(r.rate > 0.0);
        assert!(rho_real_outside(0.5, 1.2).is_err());
        assert_eq!(rho_real_outside(0.5, -2.0).unwrap(), r);
    }

    #[test]
    fn saddle_point_identity() {
        // lambda = b + tau/b gives (lambda + sqrt(lambda^2 - 4 tau))/2 = b.
        for &(b, tau) in &[(1.5, 0.5), (1.2, -0.4), (2.0, 0.9)] {
            let lam: f64 = b + tau / b;
            let root = (lam + (lam * lam - 4.0 * tau).sqrt()) / 2.0;
            assert!((root - b).abs() < 1e-14);
        }
    }

    #[test]
    fn edge_profile_limits() {
        let inv = 1.0 / (2.0 * PI).sqrt();
        assert!((rho_real_edge(-12.0) - inv).abs() < 1e-12);
        let at0 = (1.0 + std::f64::consts::FRAC_1_SQRT_2) / (2.0 * (2.0 * PI).sqrt());
        assert!((rho_real_edge(0.0) - at0).abs() < 1e-15);
        assert!((at0 - 0.340_518_536).abs() < 1e-9);
        let gauss = (-9.0f64).exp() / (2.0 * PI.sqrt());
        assert!((rho_real_edge(3.0) / gauss - 1.0).abs() < 0.05);
        // The two branches meet.
        let (l, r) = (ln_rho_real_edge(20.0 - 1e-9), ln_rho_real_edge(20.0));
        assert!((l - r).abs() < 1e-6);
        assert!(ln_rho_real_edge(40.0).is_finite());
    }

    #[test]
    fn weak_nongradient_density() {
        let n = 100;
        let v = rho_real_weak_nongradient(0.0, 0.0, n).unwrap();
        assert!((v - 10.0 / PI).abs() < 1e-14);
        for lam in [0.5f64, 1.5] {
            let semi = 10.0 / PI * (1.0 - lam * lam / 4.0).sqrt();
            assert!((rho_real_weak_nongradient(0.0, lam, n).unwrap() - semi).abs() < 1e-13);
        }
        assert!(rho_real_weak_nongradient(3.0, 2.0 - 1e-12, n).unwrap() < 1e-5);
        assert!(rho_real_weak_nongradient(1.0, 2.0, n).is_err());
        let opts = QuadOptions::default();
        for &(u, lam) in &[(0.3, 0.2), (5.0, 1.0), (40.0, 0.0), (1e-5, 1.9)] {
            let a = (1.0 - lam * lam / 4.0f64).sqrt();
            let quad = integrate_value(|t| (-u * u * t * t).exp(), 0.0, a, &opts).unwrap();
            let got = rho_real_weak_nongradient(u, lam, n).unwrap();
            assert!((got - 10.0 / PI * quad).abs() < 1e-12 * got, "u={u} lam={lam}");
        }
    }
}
