//! Reduced dynamics of a harmonic mode coupled to a photonic bath that is
//! itself damped by a boundary thermostat.
//!
//! The crate works throughout in dimensionless units: `hbar = 1`, the system
//! frequency `omega_0 = 1`, every frequency is the ratio `xi = omega/omega_0`
//! and every time is `omega_0 * t`.
//!
//! Module map:
//!
//! * [`quadrature`] — deterministic adaptive quadrature with Cauchy
//!   principal-value support; every coefficient integral goes through here.
//! * [`bath`] — spectral density, Bose occupation and the scalar coefficient
//!   functions of the thermostatted bath.
//! * [`effective`] — the 2x2 effective drift/diffusion matrices of the
//!   marginal phase-space equation, steady-state and time-dependent Gaussian
//!   kernels.
//! * [`blocks`] — the finite-N composite model: block drift/diffusion
//!   matrices, per-mode Sylvester solves, spectrum, and the brute-force
//!   covariance-propagation oracle.
//! * [`density`] — steady-state density matrix in a truncated Fock basis.
//! * [`redfield`] — the conventional weak-coupling (Redfield) coefficients
//!   and their quantitative relation to the marginal theory.
//! * [`phase_space`] — quasi-probability fields on a grid, negativity
//!   diagnostics, CSV/JSON emission.

pub mod bath;
pub mod blocks;
pub mod density;
pub mod effective;
pub mod phase_space;
pub mod quadrature;
pub mod redfield;

pub use bath::{BathSpec, CoefficientSet, SpectralDensity, Thermostat};
pub use blocks::{FiniteSystem, ModeBlock, Spectrum, SylvesterPair};
pub use density::FockDensity;
pub use effective::{EffectiveModel, GaussianKernel};
pub use phase_space::{Grid, InitialState, NegativityMetrics, QuasiProbField};
pub use quadrature::{QuadratureResult, Tolerance};
pub use redfield::{ComparisonReport, RedfieldModel};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(
        "quadrature did not converge: {panels} panels, error estimate {error_estimate:.3e}, \
         partial value {partial:.17e}"
    )]
    QuadratureNonConvergence {
        partial: f64,
        error_estimate: f64,
        evaluations: u64,
        panels: usize,
    },
    #[error("principal-value pole {pole} lies outside the open interval ({a}, {b})")]
    PoleOutsideInterval { pole: f64, a: f64, b: f64 },
    #[error("principal-value numerator is not finite at the pole: g({pole}) = {value}")]
    SingularNumerator { pole: f64, value: f64 },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("mode {index} (xi = {xi}) yields a singular Sylvester system")]
    SingularMode { index: usize, xi: f64 },
    #[error("drift matrix is not strictly stable")]
    UnstableDrift,
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("time must be non-negative and finite, got {0}")]
    InvalidTime(f64),
    #[error("non-finite value encountered during propagation at t = {t}")]
    NonFinite { t: f64 },
    #[error("extrapolation residual {residual:.3e} for {name} exceeds tolerance {tol:.3e}")]
    ExtrapolationResidual {
        name: &'static str,
        residual: f64,
        tol: f64,
    },
    #[error("Fock truncation n_max = {n_max} too small, need at least {needed}")]
    TruncationTooSmall { n_max: usize, needed: usize },
    #[error(
        "scale separation violated: mode {index} at xi = {xi} has gamma/mu = {ratio:.3} \
         (limit {limit})"
    )]
    ScaleSeparation {
        index: usize,
        xi: f64,
        ratio: f64,
        limit: f64,
    },
    #[error("models under comparison were built from different specifications: {0}")]
    SpecMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
