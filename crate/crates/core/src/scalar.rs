//! Floating-point scalar abstraction.
//!
//! Probabilities, thresholds and loss values are generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. The harness and I/O layer use `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`. Total for finite inputs in range.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to scalar")
    }

    fn of_count(n: usize) -> Self {
        Self::from_usize(n).expect("count converts to scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
