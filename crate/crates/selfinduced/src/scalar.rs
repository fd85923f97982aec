//! Floating scalar used for measures and frequencies.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// f32 or f64.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {
    /// Smallest residual the power iteration is asked to reach.
    fn target_residual() -> Self;
}

impl Scalar for f32 {
    fn target_residual() -> Self {
        1e-6
    }
}

impl Scalar for f64 {
    fn target_residual() -> Self {
        1e-12
    }
}

pub(crate) fn from_usize<F: Scalar>(n: usize) -> F {
    F::from_usize(n).expect("count fits the scalar type")
}
