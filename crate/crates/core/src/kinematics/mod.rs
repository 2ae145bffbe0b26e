//! Forward and inverse kinematics of the 5-DOF RCM arm.
//!
//! Joints: `theta1` rotates about the base axis, `theta2` about a second axis
//! inclined 60° to it, `d3` inserts the tool along its own axis through the
//! remote center, `theta4` spins the tool and `d5` drives the tool's internal
//! actuator. Only the first three affect the tool centerline.
//!
//! Chain: three standard DH links followed by a six-parameter terminal link.
//! The insertion `d3` adds to the terminal link's `d`.

mod nominal;
mod numeric;
mod transform;

pub use nominal::{
    check_tabulated, forward_kinematics_nominal, inverse_kinematics_nominal,
    inverse_kinematics_nominal_with_limits, nominal_tool_axis, second_joint_axis,
    tabulated_closed_form, ClosedFormCheck,
};
pub use numeric::{inverse_kinematics_numeric, inverse_kinematics_seeded, IkOptions, IkSolution};
pub use transform::{orthonormality_error, rot_axis, rot_x, rot_y, rot_z, RigidTransform};

use crate::error::{Error, Result};
use crate::scalar::deg;
use crate::Real;
use nalgebra::{DMatrix, SVector, Vector3};

/// Number of forward-kinematics parameters: 3 DH links of 4 plus one link of 6.
pub const FK_PARAM_COUNT: usize = 18;

/// Names of the forward-kinematics parameters, in parameter-vector order.
pub const FK_PARAM_NAMES: [&str; FK_PARAM_COUNT] = [
    "link1.d", "link1.theta", "link1.a", "link1.alpha",
    "link2.d", "link2.theta", "link2.a", "link2.alpha",
    "link3.d", "link3.theta", "link3.a", "link3.alpha",
    "link4.d", "link4.theta", "link4.a", "link4.b", "link4.beta", "link4.alpha",
];

/// Whether FK parameter `index` is an angle (otherwise a length).
pub fn fk_param_is_angle(index: usize) -> bool {
    matches!(index, 1 | 3 | 5 | 7 | 9 | 11 | 13 | 16 | 17)
}

/// Joint coordinates of one arm; angles in radians, lengths in mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointState<T: Real> {
    pub theta1: T,
    pub theta2: T,
    pub d3: T,
    pub theta4: T,
    pub d5: T,
}

impl<T: Real> JointState<T> {
    pub fn new(theta1: T, theta2: T, d3: T, theta4: T, d5: T) -> Self {
        Self {
            theta1,
            theta2,
            d3,
            theta4,
            d5,
        }
    }

    /// Centerline joints only; `theta4` and `d5` are zero.
    pub fn positional(theta1: T, theta2: T, d3: T) -> Self {
        Self::new(theta1, theta2, d3, T::zero(), T::zero())
    }

    pub fn zero() -> Self {
        Self::positional(T::zero(), T::zero(), T::zero())
    }

    /// Angles in degrees, lengths in mm.
    pub fn from_degrees(theta1: f64, theta2: f64, d3: f64, theta4: f64, d5: f64) -> Self {
        Self::new(deg(theta1), deg(theta2), T::lit(d3), deg(theta4), T::lit(d5))
    }

    pub fn to_vector(&self) -> SVector<T, 5> {
        SVector::<T, 5>::new(self.theta1, self.theta2, self.d3, self.theta4, self.d5)
    }

    pub fn from_vector(v: &SVector<T, 5>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Closed interval `[min, max]` for one joint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointRange<T: Real> {
    pub min: T,
    pub max: T,
}

impl<T: Real> JointRange<T> {
    pub fn new(min: T, max: T) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min > max {
            return Err(Error::InvalidArgument(format!(
                "joint range requires finite min <= max, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, v: T) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: T) -> T {
        nalgebra::clamp(v, self.min, self.max)
    }

    pub fn span(&self) -> T {
        self.max - self.min
    }
}

/// Per-joint limits, same units as [`JointState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLimits<T: Real> {
    pub theta1: JointRange<T>,
    pub theta2: JointRange<T>,
    pub d3: JointRange<T>,
    pub theta4: JointRange<T>,
    pub d5: JointRange<T>,
}

pub const JOINT_NAMES: [&str; 5] = ["theta1", "theta2", "d3", "theta4", "d5"];

impl<T: Real> JointLimits<T> {
    /// Limits of the built arm.
    pub fn standard() -> Self {
        let r = |a: f64, b: f64| JointRange {
            min: T::lit(a),
            max: T::lit(b),
        };
        let rd = |a: f64, b: f64| JointRange {
            min: deg(a),
            max: deg(b),
        };
        Self {
            theta1: rd(-70.0, 0.0),
            theta2: rd(-40.0, 40.0),
            d3: r(-40.0, 25.0),
            theta4: rd(-720.0, 720.0),
            d5: r(0.0, 500.0),
        }
    }

    pub fn ranges(&self) -> [JointRange<T>; 5] {
        [self.theta1, self.theta2, self.d3, self.theta4, self.d5]
    }

    pub fn from_ranges(r: [JointRange<T>; 5]) -> Self {
        Self {
            theta1: r[0],
            theta2: r[1],
            d3: r[2],
            theta4: r[3],
            d5: r[4],
        }
    }

    /// Checks every joint, naming the first violated limit.
    pub fn check(&self, q: &JointState<T>) -> Result<()> {
        let v = q.to_vector();
        for (i, range) in self.ranges().iter().enumerate() {
            if !v[i].is_finite() {
                return Err(Error::InvalidArgument(format!("{} is not finite", JOINT_NAMES[i])));
            }
            if !range.contains(v[i]) {
                return Err(Error::Unreachable {
                    limit: JOINT_NAMES[i],
                    value: v[i].as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, q: &JointState<T>) -> bool {
        self.check(q).is_ok()
    }

    /// Clamps into the limits; the flag reports whether anything moved.
    pub fn clamp(&self, q: &JointState<T>) -> (JointState<T>, bool) {
        let v = q.to_vector();
        let mut out = v;
        for (i, range) in self.ranges().iter().enumerate() {
            out[i] = range.clamp(v[i]);
        }
        (JointState::from_vector(&out), out != v)
    }
}

impl<T: Real> Default for JointLimits<T> {
    fn default() -> Self {
        Self::standard()
    }
}

/// Which DH variable the joint value adds to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointKind {
    /// Rotation about z: adds to `theta`.
    Revolute,
    /// Translation along z: adds to `d`.
    Prismatic,
    /// No joint variable; the link is a constant offset.
    Fixed,
}

/// Standard DH link `Trans_z(d) Rot_z(theta) Trans_x(a) Rot_x(alpha)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhLink<T: Real> {
    pub d: T,
    pub theta_offset: T,
    pub a: T,
    pub alpha: T,
    pub joint: JointKind,
}

impl<T: Real> DhLink<T> {
    pub fn new(d: T, theta_offset: T, a: T, alpha: T, joint: JointKind) -> Self {
        Self {
            d,
            theta_offset,
            a,
            alpha,
            joint,
        }
    }

    fn params(&self) -> [T; 4] {
        [self.d, self.theta_offset, self.a, self.alpha]
    }

    fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }
}

/// Terminal link `Trans_z(d) Rot_z(theta) Trans_y(b) Rot_y(beta) Trans_x(a) Rot_x(alpha)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SixParamLink<T: Real> {
    pub d: T,
    pub theta: T,
    pub a: T,
    pub b: T,
    pub beta: T,
    pub alpha: T,
}

impl<T: Real> SixParamLink<T> {
    pub fn zero() -> Self {
        Self {
            d: T::zero(),
            theta: T::zero(),
            a: T::zero(),
            b: T::zero(),
            beta: T::zero(),
            alpha: T::zero(),
        }
    }

    fn params(&self) -> [T; 6] {
        [self.d, self.theta, self.a, self.b, self.beta, self.alpha]
    }

    fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }
}

fn dh_compose<T: Real>(link: &DhLink<T>, joint_value: T) -> RigidTransform<T> {
    let (d, theta) = match link.joint {
        JointKind::Revolute => (link.d, link.theta_offset + joint_value),
        JointKind::Prismatic => (link.d + joint_value, link.theta_offset),
        JointKind::Fixed => (link.d, link.theta_offset),
    };
    RigidTransform::trans_z(d)
        * RigidTransform::rot_z(theta)
        * RigidTransform::trans_x(link.a)
        * RigidTransform::rot_x(link.alpha)
}

fn six_compose<T: Real>(link: &SixParamLink<T>, joint_value: T) -> RigidTransform<T> {
    RigidTransform::trans_z(link.d + joint_value)
        * RigidTransform::rot_z(link.theta)
        * RigidTransform::trans_y(link.b)
        * RigidTransform::rot_y(link.beta)
        * RigidTransform::trans_x(link.a)
        * RigidTransform::rot_x(link.alpha)
}

/// DH link transform with the joint value applied per [`JointKind`].
pub fn dh_transform<T: Real>(link: &DhLink<T>, joint_value: T) -> Result<RigidTransform<T>> {
    if !(link.is_finite() && joint_value.is_finite()) {
        return Err(Error::InvalidArgument("non-finite DH link input".into()));
    }
    Ok(dh_compose(link, joint_value))
}

/// Terminal-link transform; the joint value (insertion) adds to `d`.
pub fn six_param_transform<T: Real>(
    link: &SixParamLink<T>,
    joint_value: T,
) -> Result<RigidTransform<T>> {
    if !(link.is_finite() && joint_value.is_finite()) {
        return Err(Error::InvalidArgument("non-finite terminal link input".into()));
    }
    Ok(six_compose(link, joint_value))
}

/// Kinematic chain of the arm: three DH links, a six-parameter tool link, and limits.
///
/// `theta1` drives link 1, `theta2` drives link 2, link 3 takes no joint value and
/// `d3` drives the tool link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotModel<T: Real> {
    pub links: [DhLink<T>; 3],
    pub tool: SixParamLink<T>,
    pub limits: JointLimits<T>,
}

impl<T: Real> RobotModel<T> {
    /// Ideal geometry: both rotation axes and the tool axis meet at the base origin.
    pub fn nominal() -> Self {
        let z = T::zero();
        Self {
            links: [
                DhLink::new(z, z, z, deg(-60.0), JointKind::Revolute),
                DhLink::new(z, z, z, deg(60.0), JointKind::Revolute),
                DhLink::new(z, z, z, z, JointKind::Fixed),
            ],
            tool: SixParamLink::zero(),
            limits: JointLimits::standard(),
        }
    }

    /// The 18 FK parameters in [`FK_PARAM_NAMES`] order.
    pub fn param_vector(&self) -> SVector<T, FK_PARAM_COUNT> {
        let mut v = SVector::<T, FK_PARAM_COUNT>::zeros();
        for (j, link) in self.links.iter().enumerate() {
            for (k, p) in link.params().iter().enumerate() {
                v[4 * j + k] = *p;
            }
        }
        for (k, p) in self.tool.params().iter().enumerate() {
            v[12 + k] = *p;
        }
        v
    }

    /// Copy of `self` with parameters replaced; joint kinds and limits are kept.
    pub fn with_param_vector(&self, v: &SVector<T, FK_PARAM_COUNT>) -> Self {
        let mut m = *self;
        for (j, link) in m.links.iter_mut().enumerate() {
            link.d = v[4 * j];
            link.theta_offset = v[4 * j + 1];
            link.a = v[4 * j + 2];
            link.alpha = v[4 * j + 3];
        }
        m.tool = SixParamLink {
            d: v[12],
            theta: v[13],
            a: v[14],
            b: v[15],
            beta: v[16],
            alpha: v[17],
        };
        m
    }

    pub fn is_finite(&self) -> bool {
        self.links.iter().all(|l| l.is_finite()) && self.tool.is_finite()
    }
}

impl<T: Real> Default for RobotModel<T> {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Base-to-tooltip transform. Joint limits are not checked.
pub fn forward_kinematics<T: Real>(model: &RobotModel<T>, q: &JointState<T>) -> RigidTransform<T> {
    let [l1, l2, l3] = &model.links;
    dh_compose(l1, q.theta1)
        * dh_compose(l2, q.theta2)
        * dh_compose(l3, T::zero())
        * six_compose(&model.tool, q.d3)
}

/// [`forward_kinematics`] with finiteness and optional limit validation.
pub fn forward_kinematics_checked<T: Real>(
    model: &RobotModel<T>,
    q: &JointState<T>,
    check_limits: bool,
) -> Result<RigidTransform<T>> {
    if !q.is_finite() || !model.is_finite() {
        return Err(Error::InvalidArgument("non-finite joint state or model".into()));
    }
    if check_limits {
        model.limits.check(q)?;
    }
    Ok(forward_kinematics(model, q))
}

/// Variables a Jacobian is taken with respect to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianWrt {
    /// The five joints, in [`JOINT_NAMES`] order.
    Joints,
    /// The 18 FK parameters, in [`FK_PARAM_NAMES`] order.
    Parameters,
}

fn pose_vector<T: Real>(t: &RigidTransform<T>) -> SVector<T, 6> {
    let z = t.z_axis();
    SVector::<T, 6>::new(t.translation.x, t.translation.y, t.translation.z, z.x, z.y, z.z)
}

/// Central-difference Jacobian of `[tooltip position; tool axis]` (6 rows).
pub fn numeric_jacobian<T: Real>(
    model: &RobotModel<T>,
    q: &JointState<T>,
    wrt: JacobianWrt,
) -> DMatrix<T> {
    let h = T::fd_step();
    let two_h = h + h;
    match wrt {
        JacobianWrt::Joints => {
            let base = q.to_vector();
            let mut jac = DMatrix::zeros(6, 5);
            for c in 0..5 {
                let mut plus = base;
                let mut minus = base;
                plus[c] += h;
                minus[c] -= h;
                let fp = pose_vector(&forward_kinematics(model, &JointState::from_vector(&plus)));
                let fm = pose_vector(&forward_kinematics(model, &JointState::from_vector(&minus)));
                jac.set_column(c, &((fp - fm) / two_h));
            }
            jac
        }
        JacobianWrt::Parameters => {
            let base = model.param_vector();
            let mut jac = DMatrix::zeros(6, FK_PARAM_COUNT);
            for c in 0..FK_PARAM_COUNT {
                let mut plus = base;
                let mut minus = base;
                plus[c] += h;
                minus[c] -= h;
                let fp = pose_vector(&forward_kinematics(&model.with_param_vector(&plus), q));
                let fm = pose_vector(&forward_kinematics(&model.with_param_vector(&minus), q));
                jac.set_column(c, &((fp - fm) / two_h));
            }
            jac
        }
    }
}

/// Tooltip position and tool axis.
pub fn tool_pose<T: Real>(model: &RobotModel<T>, q: &JointState<T>) -> (Vector3<T>, Vector3<T>) {
    let t = forward_kinematics(model, q);
    (t.translation, t.z_axis())
}
