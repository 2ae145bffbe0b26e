//! Closed-form kinematics of the ideal (uncalibrated) arm.

use super::transform::{orthonormality_error, rot_axis, rot_z, RigidTransform};
use super::{JointLimits, JointState};
use crate::error::{Error, Result};
use crate::scalar::wrap_angle;
use crate::Real;
use nalgebra::{Matrix3, Matrix4, Vector3};

/// Unit axis of the second rotation, in the base frame at `theta1 = 0`.
///
/// It sits 60° from the base axis (+z), tilted toward +y.
pub fn second_joint_axis<T: Real>() -> Vector3<T> {
    Vector3::new(T::zero(), T::lit(3f64.sqrt() / 2.0), T::lit(0.5))
}

/// Tool axis as a function of the two rotations, written out component-wise.
pub fn nominal_tool_axis<T: Real>(theta1: T, theta2: T) -> Vector3<T> {
    let (s1, c1) = theta1.sin_cos();
    let (s2, c2) = theta2.sin_cos();
    let r3 = T::lit(3f64.sqrt());
    let four = T::lit(4.0);
    let two = T::lit(2.0);
    let one = T::one();
    Vector3::new(
        r3 * (two * c1 * s2 - s1 * (one - c2)) / four,
        r3 * (c1 * (one - c2) + two * s1 * s2) / four,
        (T::lit(3.0) * c2 + one) / four,
    )
}

/// Nominal base-to-tooltip transform.
///
/// Rotation `Rz(theta1) · R(k, theta2)` with `k` from [`second_joint_axis`], tooltip
/// at `d3` along the tool axis. Every configuration keeps the tool line through the origin.
pub fn forward_kinematics_nominal<T: Real>(q: &JointState<T>) -> RigidTransform<T> {
    let r = rot_z(q.theta1) * rot_axis(&second_joint_axis(), q.theta2);
    let p = nominal_tool_axis(q.theta1, q.theta2) * q.d3;
    RigidTransform::new(r, p)
}

/// The commonly quoted closed-form homogeneous matrix for this arm, transcribed verbatim.
///
/// Not orthonormal in general; kept only so its disagreement with
/// [`forward_kinematics_nominal`] can be measured. Never used for computation.
pub fn tabulated_closed_form<T: Real>(q: &JointState<T>) -> Matrix4<T> {
    let (s1, c1) = q.theta1.sin_cos();
    let (s2, c2) = q.theta2.sin_cos();
    let r3 = T::lit(3f64.sqrt());
    let (half, quarter, one, two, three, four) = (
        T::lit(0.5),
        T::lit(0.25),
        T::one(),
        T::lit(2.0),
        T::lit(3.0),
        T::lit(4.0),
    );
    let e1 = (two * r3 * c1 * s2 + c2 * s1 - r3 * s1) / four;
    let e2 = r3 * (c1 - c1 * c2 - two * s1 * s2) / four;
    let e3 = (three * c2 + one) / four;
    let d3 = q.d3;
    let z = T::zero();
    Matrix4::new(
        c1 * c2 - half * s1 * s2,
        -quarter * (three * s1 - two * c1 * s2 - c2 * s1),
        e1,
        d3 * e1,
        half * c1 * s2 - c2 * s1,
        quarter * (three * c1 + c1 * c2 - two * s1 * s2),
        e2,
        d3 * e2,
        -r3 / two * s2,
        r3 / four * (one - c2),
        e3,
        d3 * e3,
        z,
        z,
        z,
        one,
    )
}

/// Comparison of the tabulated closed form against the structural kinematics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormCheck<T: Real> {
    /// `max |RᵀR − I|` of the tabulated rotation block.
    pub orthonormality_error: T,
    /// Largest entry-wise difference from [`forward_kinematics_nominal`].
    pub deviation: T,
}

impl<T: Real> ClosedFormCheck<T> {
    /// The tabulated matrix is a valid rotation at this configuration.
    pub fn is_orthonormal(&self, tol: T) -> bool {
        self.orthonormality_error <= tol
    }

    pub fn agrees(&self, tol: T) -> bool {
        self.deviation <= tol
    }
}

/// Evaluates the tabulated closed form at `q` and logs any disagreement.
pub fn check_tabulated<T: Real>(q: &JointState<T>) -> ClosedFormCheck<T> {
    let tab = tabulated_closed_form(q);
    let rot: Matrix3<T> = tab.fixed_view::<3, 3>(0, 0).into_owned();
    let reference = forward_kinematics_nominal(q).to_homogeneous();
    let check = ClosedFormCheck {
        orthonormality_error: orthonormality_error(&rot),
        deviation: (tab - reference).amax(),
    };
    if check.deviation > T::lit(1e-9) {
        log::warn!(
            "tabulated closed form disagrees with structural kinematics at q = ({}, {}, {}): deviation {}, orthonormality error {}",
            q.theta1,
            q.theta2,
            q.d3,
            check.deviation,
            check.orthonormality_error
        );
    }
    check
}

/// Moves a value that misses a limit by rounding only onto the limit.
fn snap<T: Real>(v: T, range: &super::JointRange<T>) -> T {
    let tol = |b: T| T::lit(64.0) * T::default_epsilon() * (T::one() + b.abs());
    if (v < range.min && range.min - v <= tol(range.min)) || (v > range.max && v - range.max <= tol(range.max)) {
        range.clamp(v)
    } else {
        v
    }
}

/// Analytic inverse of [`forward_kinematics_nominal`] under the standard limits.
pub fn inverse_kinematics_nominal<T: Real>(p: &Vector3<T>) -> Result<JointState<T>> {
    inverse_kinematics_nominal_with_limits(p, &JointLimits::standard())
}

/// Analytic inverse kinematics for a tooltip target `p` (mm).
///
/// `|d3| = |p|`; the tool axis always has a positive z component inside the
/// `theta2` limits, so the sign of `d3` follows `p.z`. With `u = p / d3`,
/// `cos theta2 = (4 u_z − 1) / 3`; both signs of `theta2` are tried and the branch
/// satisfying the limits is returned. `theta4` and `d5` are zero.
pub fn inverse_kinematics_nominal_with_limits<T: Real>(
    p: &Vector3<T>,
    limits: &JointLimits<T>,
) -> Result<JointState<T>> {
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite target".into()));
    }
    let r = p.norm();
    if r == T::zero() {
        return Err(Error::Degenerate("target at the remote center: tool direction undefined".into()));
    }
    if p.z == T::zero() {
        // the tool axis of every in-limit configuration has u_z >= (3 cos 40° + 1) / 4
        return Err(Error::Unreachable {
            limit: "theta2",
            value: f64::NAN,
        });
    }
    let d3 = snap(if p.z > T::zero() { r } else { -r }, &limits.d3);
    if !limits.d3.contains(d3) {
        return Err(Error::Unreachable {
            limit: "d3",
            value: d3.as_f64(),
        });
    }
    let u = p / d3;
    let rho = u.x.hypot(u.y);
    // 1 − u_z computed without cancellation; then 1 − cos theta2 = 4 (1 − u_z) / 3
    let one_minus_uz = rho * rho / (T::one() + u.z);
    let versine = T::lit(4.0 / 3.0) * one_minus_uz;
    if versine > T::lit(2.0) {
        return Err(Error::Unreachable {
            limit: "theta2",
            value: f64::NAN,
        });
    }
    let magnitude = T::lit(2.0) * (versine / T::lit(2.0)).sqrt().min(T::one()).asin();

    if rho == T::zero() {
        let q = JointState::positional(limits.theta1.clamp(T::zero()), T::zero(), d3);
        limits.check(&q)?;
        return Ok(q);
    }

    let r3 = T::lit(3f64.sqrt());
    let target_azimuth = u.y.atan2(u.x);
    let mut first_err = None;
    for sign in [T::one(), -T::one()] {
        let theta2 = sign * magnitude;
        // local tool axis before the theta1 rotation: (A, B, u_z)
        let a = r3 / T::lit(2.0) * theta2.sin();
        let b = r3 / T::lit(4.0) * versine;
        let theta1 = snap(wrap_angle(target_azimuth - b.atan2(a)), &limits.theta1);
        let q = JointState::positional(theta1, snap(theta2, &limits.theta2), d3);
        match limits.check(&q) {
            Ok(()) => return Ok(q),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.expect("two branches evaluated"))
}
