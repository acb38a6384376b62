//! The real Gaussian elliptic ensemble and its density of real eigenvalues.

mod asymptotics;
mod density;
mod monte_carlo;
mod profile;
mod sampling;

pub use asymptotics::{
    ln_rho_real_edge, rho_real_bulk, rho_real_edge, rho_real_outside, rho_real_weak_nongradient,
    OutsideAsymptotic,
};
pub(crate) use asymptotics::gaussian_segment;
pub use density::{hermite_tau, rho_real_exact, RealDensity};
pub use monte_carlo::{mean_real_count, real_eigenvalue_histogram, RealCountHistogram};
pub use profile::{chebyshev_grid, DensityMethod, DensityProfile};
pub use sampling::{real_eigenvalues, sample_elliptic, sample_elliptic_with, EllipticParams};
pub(crate) use sampling::real_schur;
