//! Remote-center estimation from tool centerlines.
//!
//! The remote center is the point closest, in the least-squares sense, to all
//! observed centerlines: it solves `Σ(I − z zᵀ) p = Σ(I − z zᵀ) p_i`.

use crate::calibration::{CalibrationParams, StatSummary};
use crate::error::{Error, Result};
use crate::kinematics::JointState;
use crate::Real;
use nalgebra::{Matrix3, Vector3};

/// A tool centerline: a point on it (the tooltip) and its unit direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToolLine<T: Real> {
    pub p: Vector3<T>,
    pub z: Vector3<T>,
}

impl<T: Real> ToolLine<T> {
    /// Line through `p` along `z` (normalized here).
    pub fn new(p: Vector3<T>, z: Vector3<T>) -> Result<Self> {
        let n = z.norm();
        if !(n.is_finite() && n > T::zero()) || !p.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("tool line needs a finite point and non-zero direction".into()));
        }
        Ok(Self { p, z: z / n })
    }

    fn projector(&self) -> Matrix3<T> {
        Matrix3::identity() - self.z * self.z.transpose()
    }
}

/// Estimated remote center with the spread of line distances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RcmFit<T: Real> {
    pub p_rcm: Vector3<T>,
    /// Statistics of the per-line orthogonal distances (mm).
    pub stats: StatSummary<T>,
}

/// Orthogonal displacement `(I − z zᵀ)(p − p_rcm)` between a line and a point.
pub fn rcm_residual<T: Real>(line: &ToolLine<T>, p_rcm: &Vector3<T>) -> Vector3<T> {
    line.projector() * (line.p - p_rcm)
}

/// Closed-form least-squares remote center.
///
/// Fails with [`Error::RankDeficient`] when the smallest eigenvalue of
/// `Σ(I − z zᵀ)` is below `1e-9` times the largest (all lines parallel).
pub fn fit_rcm<T: Real>(lines: &[ToolLine<T>]) -> Result<RcmFit<T>> {
    if lines.len() < 2 {
        return Err(Error::RankDeficient(format!(
            "remote center needs at least 2 non-parallel lines, got {}",
            lines.len()
        )));
    }
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for l in lines {
        let p = l.projector();
        a += p;
        b += p * l.p;
    }
    let eig = a.symmetric_eigen();
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if lo <= hi * T::lit(1e-9) {
        return Err(Error::RankDeficient("tool lines are parallel".into()));
    }
    let p_rcm = a
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("normal matrix not positive definite".into()))?
        .solve(&b);
    let distances: Vec<T> = lines.iter().map(|l| rcm_residual(l, &p_rcm).norm()).collect();
    Ok(RcmFit {
        p_rcm,
        stats: StatSummary::from_samples(&distances),
    })
}

/// `Σ(I − z zᵀ)(p_i − p)`: zero at the least-squares remote center.
pub fn normal_equation_residual<T: Real>(lines: &[ToolLine<T>], p: &Vector3<T>) -> Vector3<T> {
    lines
        .iter()
        .fold(Vector3::zeros(), |acc, l| acc + rcm_residual(l, p))
}

/// Remote center of the centerlines predicted by calibrated parameters, in the
/// measurement frame.
pub fn estimated_rcm<T: Real>(
    gamma_star: &CalibrationParams<T>,
    joint_states: &[JointState<T>],
) -> Result<RcmFit<T>> {
    let lines: Vec<ToolLine<T>> = joint_states.iter().map(|q| gamma_star.predict(q)).collect();
    fit_rcm(&lines)
}
