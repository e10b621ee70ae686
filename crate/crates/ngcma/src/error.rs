//! Error taxonomy shared by all modules.

use nalgebra::DVector;
use thiserror::Error;

use crate::scalar::Real;

/// Failure modes of the library.
///
/// The variants distinguish *what went wrong*, which the command-line layer
/// maps onto exit codes: structural misuse ([`Error::Validation`]), inputs
/// outside an operation's mathematical domain ([`Error::Domain`]), numerical
/// breakdown of an otherwise legal computation ([`Error::Numeric`]), and a
/// parameter update that left the admissible set ([`Error::StepRejected`]).
#[derive(Debug, Clone, Error)]
pub enum Error<S: Real> {
    /// Shapes, lengths, symmetry, or axiom checks failed.
    #[error("validation: {0}")]
    Validation(String),
    /// The input lies outside the operation's mathematical domain.
    #[error("domain: {0}")]
    Domain(String),
    /// A factorization or conditioning guard failed.
    #[error("numeric: {0}")]
    Numeric(String),
    /// A proposed step was rejected; carries the offending coordinates.
    #[error("step rejected: {reason}")]
    StepRejected {
        reason: String,
        /// Mean-part coordinates of the rejected point.
        theta_m: DVector<S>,
        /// Covariance-part coordinates of the rejected point.
        theta_c: DVector<S>,
    },
}

impl<S: Real> Error<S> {
    /// True for errors that indicate an inadmissible update rather than bad input.
    pub fn is_step_rejection(&self) -> bool {
        matches!(self, Error::StepRejected { .. })
    }
}
