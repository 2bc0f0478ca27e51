//! Element type for all tensors: f32 for training, f64 for gradient
//! checking and scoring.

use num_traits::Float;

pub trait Real:
    Float + std::fmt::Debug + std::fmt::Display + std::iter::Sum + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    /// Named to dodge `ToPrimitive::to_f64`, which Float drags into scope.
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Shorthand for lifting literals into the element type.
pub fn rf<F: Real>(x: f64) -> F {
    F::from_f64(x)
}
