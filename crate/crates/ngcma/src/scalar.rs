//! Scalar abstraction the whole crate is generic over.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar type of the library.
///
/// Combines `nalgebra::RealField` (factorizations, elementary functions)
/// with the num-traits conversion traits so that numeric constants and
/// dimensions can be injected into generic code. `f32` and `f64` qualify
/// through the blanket impl.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

impl<T> Real for T where T: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

/// Lifts an `f64` constant into the generic scalar type.
#[inline]
pub fn real<S: Real>(x: f64) -> S {
    S::from_f64(x).expect("finite f64 constant converts into the scalar type")
}

/// Lifts a count or dimension into the generic scalar type.
#[inline]
pub fn real_of_usize<S: Real>(n: usize) -> S {
    S::from_usize(n).expect("usize converts into the scalar type")
}
