use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point scalar the numerical core is generic over.
///
/// Implemented for `f32` and `f64`. Reports and artifacts are emitted in `f64`
/// regardless of the working precision.
pub trait Real: RealField + Copy + ToPrimitive + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` literal into the working precision.
    #[inline]
    fn of(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    #[inline]
    fn infinity() -> Self {
        Self::of(f64::INFINITY)
    }

    #[inline]
    fn machine_epsilon() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    fn halve<T: Real>(x: T) -> T {
        x * T::of(0.5)
    }

    #[test]
    fn conversions_round_trip_in_both_precisions() {
        assert_eq!(halve(3.0f64), 1.5);
        assert_eq!(halve(3.0f32), 1.5);
        assert_eq!(f32::of(0.25).as_f64(), 0.25);
        assert!(f64::infinity().is_infinite());
        assert_eq!(f64::of_usize(7), 7.0);
    }
}
