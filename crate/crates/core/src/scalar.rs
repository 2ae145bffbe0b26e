//! Scalar abstraction shared by every numeric module.

use nalgebra::RealField;
use num_traits::ToPrimitive;
use std::fmt::{Debug, Display};

/// Floating-point scalar usable throughout the crate (implemented for `f32` and `f64`).
pub trait Real: RealField + Copy + ToPrimitive + Display + Debug + Send + Sync + 'static {
    /// Central-difference step used for joint and parameter Jacobians.
    fn fd_step() -> Self;

    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion to `f64` for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn fd_step() -> f64 {
        1e-6
    }
}

impl Real for f32 {
    fn fd_step() -> f32 {
        5e-3
    }
}

/// Degrees to radians.
#[inline]
pub fn deg<T: Real>(x: f64) -> T {
    T::lit(x.to_radians())
}

/// Radians to degrees.
#[inline]
pub fn to_deg<T: Real>(x: T) -> T {
    x * T::lit(180.0) / T::pi()
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle<T: Real>(x: T) -> T {
    let two_pi = T::two_pi();
    let mut y = x % two_pi;
    if y > T::pi() {
        y -= two_pi;
    } else if y <= -T::pi() {
        y += two_pi;
    }
    y
}
