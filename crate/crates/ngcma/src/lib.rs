//! Gaussian-manifold toolkit for natural-gradient evolution strategies.
//!
//! The library treats a search distribution `N(m, C)` as a point on a
//! Riemannian manifold carrying the Fisher information metric, and provides
//! the pieces needed to build, analyze, and cross-check stochastic
//! natural-gradient optimizers of the CMA-ES family:
//!
//! * [`gaussian`] — parameter container, half-vectorization, seeded sampling,
//!   log-density with gradients, closed-form KL divergence.
//! * [`charts`] — coordinate systems on the manifold (full `vech`, Cholesky
//!   factor, matrix exponent, diagonal, scalar scale), their Jacobians and
//!   Fisher matrices, and the natural gradient of the log-likelihood both in
//!   closed form and through explicit metric inversion.
//! * [`estimator`] — Monte-Carlo natural-gradient estimation from ranked
//!   populations under interchangeable fitness-shaping schemes.
//! * [`strategies`] — the update rules themselves (pure natural-gradient
//!   steps, rank-μ covariance adaptation, its separable variant, and the full
//!   CMA-ES with evolution paths), default learning rates, and a deterministic
//!   run loop with trace records.
//! * [`theory`] — Gauss–Hermite machinery for expectations under the search
//!   distribution: exact natural gradients, the surrogate objective `Q`, rate
//!   scans with analytic derivatives, EM fixed-point targets, and the
//!   improvement decomposition identity.
//! * [`instances`] — seeded generators of well-conditioned random test
//!   instances used by validation batteries.
//!
//! Everything is generic over the floating-point scalar through
//! [`scalar::Real`] (any `nalgebra::RealField` with num-traits conversions);
//! the aliases at the crate root pin the two concrete precisions.

pub mod charts;
pub mod error;
pub mod estimator;
pub mod gaussian;
pub mod instances;
pub mod scalar;
pub mod strategies;
pub mod theory;

pub use error::Error;
pub use scalar::Real;

/// Double-precision Gaussian parameters.
pub type GaussianParams64 = gaussian::GaussianParams<f64>;
/// Single-precision Gaussian parameters.
pub type GaussianParams32 = gaussian::GaussianParams<f32>;
/// Double-precision chart descriptor.
pub type Chart64 = charts::Chart<f64>;
/// Double-precision point in chart coordinates.
pub type ThetaPoint64 = charts::ThetaPoint<f64>;
/// Single-precision point in chart coordinates.
pub type ThetaPoint32 = charts::ThetaPoint<f32>;
/// Double-precision natural-gradient coordinates.
pub type NaturalGradient64 = estimator::NaturalGradient<f64>;
/// Double-precision ranked population.
pub type Population64 = estimator::Population<f64>;
/// Double-precision positive fitness wrapper for quadrature work.
pub type PositiveFitness64 = theory::PositiveFitness<f64>;
