//! Finite-depth algorithms for self-induced minimal Cantor systems:
//! substitution subshifts, odometers, ordered Bratteli-Vershik diagrams and
//! generalized substitutions on compact zero-dimensional alphabets.

pub mod bratteli;
pub mod gensub;
pub mod linalg;
pub mod odometer;
pub mod product;
pub mod scalar;
pub mod substitution;
pub mod words;

pub use scalar::Scalar;

/// Letter frequencies in double precision.
pub type Frequencies = Vec<f64>;

/// Cylinder measures in single and double precision.
pub type CylinderMeasure32 = bratteli::CylinderMeasure<f32>;
pub type CylinderMeasure64 = bratteli::CylinderMeasure<f64>;
