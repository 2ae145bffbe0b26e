use crate::scalar::to_deg;
use crate::Real;
use nalgebra::Vector3;

/// RMS, maximum and sample standard deviation of non-negative error magnitudes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatSummary<T: Real> {
    pub rms: T,
    pub max: T,
    /// Sample standard deviation (n − 1 denominator; 0 for a single sample).
    pub std: T,
}

impl<T: Real> StatSummary<T> {
    pub fn zero() -> Self {
        Self {
            rms: T::zero(),
            max: T::zero(),
            std: T::zero(),
        }
    }

    /// Statistics of `samples`; an empty slice gives all zeros.
    pub fn from_samples(samples: &[T]) -> Self {
        if samples.is_empty() {
            return Self::zero();
        }
        let n = T::lit(samples.len() as f64);
        let sum_sq = samples.iter().fold(T::zero(), |a, &x| a + x * x);
        let mean = samples.iter().fold(T::zero(), |a, &x| a + x) / n;
        let max = samples.iter().fold(T::zero(), |a, &x| a.max(x));
        let std = if samples.len() > 1 {
            let ss = samples.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean));
            (ss / (n - T::one())).sqrt()
        } else {
            T::zero()
        };
        Self {
            rms: (sum_sq / n).sqrt(),
            max,
            std,
        }
    }
}

/// Position (mm) and orientation (deg) error statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorStats<T: Real> {
    pub position: StatSummary<T>,
    pub orientation: StatSummary<T>,
}

/// Angle in degrees between two unit vectors, `acos` of the clamped dot product.
pub fn angle_between_deg<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> T {
    let c = nalgebra::clamp(a.dot(b), -T::one(), T::one());
    to_deg(c.acos())
}
