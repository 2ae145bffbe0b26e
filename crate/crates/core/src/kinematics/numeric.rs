use super::{forward_kinematics, inverse_kinematics_nominal_with_limits, numeric_jacobian, JacobianWrt, JointState, RobotModel};
use crate::error::{Error, Result};
use crate::Real;
use nalgebra::{Matrix3, Vector3};

/// Settings for [`inverse_kinematics_numeric`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkOptions<T: Real> {
    /// Levenberg damping added to `JᵀJ`.
    pub damping: T,
    pub max_iterations: usize,
    /// Position error (mm) at which the solve counts as converged.
    pub tolerance: T,
    /// Largest angle change (rad) per iteration; longer steps are scaled down.
    pub max_angle_step: T,
    /// Largest insertion change (mm) per iteration.
    pub max_length_step: T,
}

impl<T: Real> Default for IkOptions<T> {
    fn default() -> Self {
        Self {
            damping: T::lit(1e-6),
            max_iterations: 100,
            tolerance: T::lit(1e-6),
            max_angle_step: T::lit(0.2),
            max_length_step: T::lit(10.0),
        }
    }
}

/// Converged inverse-kinematics solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkSolution<T: Real> {
    pub q: JointState<T>,
    /// Remaining position error (mm).
    pub residual: T,
    pub iterations: usize,
    /// A joint limit was active (the iterate was clamped) on the final step.
    pub clamped: bool,
}

/// Damped least-squares position IK over `(theta1, theta2, d3)` for any model.
///
/// Each update is projected back into the joint limits. `theta4` and `d5` are
/// copied from `q0`. Running out of iterations yields [`Error::NonConvergence`]
/// with the best iterate as `[theta1, theta2, d3, theta4, d5]`.
pub fn inverse_kinematics_numeric<T: Real>(
    model: &RobotModel<T>,
    target: &Vector3<T>,
    q0: &JointState<T>,
    options: &IkOptions<T>,
) -> Result<IkSolution<T>> {
    if !target.iter().all(|v| v.is_finite()) || !q0.is_finite() {
        return Err(Error::InvalidArgument("non-finite IK input".into()));
    }
    let limits = &model.limits;
    let (mut q, _) = limits.clamp(q0);
    let mut clamped = false;
    let mut best = (q, T::max_value().unwrap_or_else(T::one));

    for iteration in 0..=options.max_iterations {
        let err = target - forward_kinematics(model, &q).translation;
        let residual = err.norm();
        if residual < best.1 {
            best = (q, residual);
        }
        if residual < options.tolerance {
            return Ok(IkSolution {
                q,
                residual,
                iterations: iteration,
                clamped,
            });
        }
        if iteration == options.max_iterations {
            break;
        }
        let full = numeric_jacobian(model, &q, JacobianWrt::Joints);
        let j: Matrix3<T> = full.fixed_view::<3, 3>(0, 0).into_owned();
        let jt = j.transpose();
        let normal = jt * j + Matrix3::identity() * options.damping;
        let Some(chol) = normal.cholesky() else {
            break;
        };
        let mut step = chol.solve(&(jt * err));
        let angle = step.x.abs().max(step.y.abs());
        let mut scale = T::one();
        if angle > options.max_angle_step {
            scale = options.max_angle_step / angle;
        }
        if step.z.abs() * scale > options.max_length_step {
            scale = options.max_length_step / step.z.abs();
        }
        step *= scale;
        let mut next = q;
        next.theta1 += step.x;
        next.theta2 += step.y;
        next.d3 += step.z;
        let (projected, hit) = limits.clamp(&next);
        q = projected;
        clamped = hit;
    }

    let (bq, br) = best;
    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        residual: br.as_f64(),
        best: bq.to_vector().iter().map(|v| v.as_f64()).collect(),
    })
}

/// [`inverse_kinematics_numeric`] with deterministic multi-start seeding.
///
/// The analytic nominal solution is tried first, then a fixed 3×2 grid of
/// starts inside the `theta1`/`theta2` limits. Starting at `theta2 = 0` is
/// avoided: there `theta1` does not move the tool and the iteration can settle
/// against a limit on the mirrored branch. Returns the first converged solution,
/// or the failure with the smallest residual.
pub fn inverse_kinematics_seeded<T: Real>(
    model: &RobotModel<T>,
    target: &Vector3<T>,
    options: &IkOptions<T>,
) -> Result<IkSolution<T>> {
    let limits = &model.limits;
    let d3 = limits.d3.clamp(target.norm());
    let mut starts = Vec::with_capacity(7);
    if let Ok(q) = inverse_kinematics_nominal_with_limits(target, limits) {
        starts.push(q);
    }
    let quarter = T::lit(0.25);
    for i in 1..=3 {
        let t1 = limits.theta1.min + limits.theta1.span() * quarter * T::lit(i as f64);
        for f in [1.0, 3.0] {
            let t2 = limits.theta2.min + limits.theta2.span() * quarter * T::lit(f);
            starts.push(JointState::positional(t1, t2, d3));
        }
    }
    let mut best_err: Option<(f64, Error)> = None;
    for q0 in &starts {
        match inverse_kinematics_numeric(model, target, q0, options) {
            Ok(sol) => return Ok(sol),
            Err(e) => {
                let r = match &e {
                    Error::NonConvergence { residual, .. } => *residual,
                    _ => f64::INFINITY,
                };
                if best_err.as_ref().is_none_or(|(br, _)| r < *br) {
                    best_err = Some((r, e));
                }
            }
        }
    }
    Err(best_err.map(|(_, e)| e).expect("at least one start"))
}
