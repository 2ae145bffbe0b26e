use super::{
    error_vector, param_name, residual_jacobian, validate, CalibrationParams, CalibrationResult,
    Measurement,
};
use crate::error::{Error, Result};
use crate::Real;
use nalgebra::{DMatrix, DVector};

/// Levenberg–Marquardt settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions<T: Real> {
    pub initial_damping: T,
    /// Damping multiplier after a rejected step.
    pub damping_increase: T,
    /// Damping divisor after an accepted step.
    pub damping_decrease: T,
    pub max_iterations: usize,
    /// Stop when `|Jᵀe|∞` falls below this.
    pub gradient_tolerance: T,
    /// Stop when the step norm falls below this.
    pub step_tolerance: T,
    /// Column-scaled `σ_min / σ_max` below which the problem is ill-posed.
    pub rank_tolerance: T,
    /// Damping at which the solve gives up improving.
    pub max_damping: T,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        Self {
            initial_damping: T::lit(1e-3),
            damping_increase: T::lit(10.0),
            damping_decrease: T::lit(10.0),
            max_iterations: 200,
            gradient_tolerance: T::lit(1e-10),
            step_tolerance: T::lit(1e-12),
            rank_tolerance: T::lit(1e-10),
            max_damping: T::lit(1e16),
        }
    }
}

/// Why [`lm_solve`] stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Gradient,
    Step,
    MaxIterations,
    /// No improving step was found before the damping ceiling.
    DampingSaturated,
    /// Nothing to optimize.
    NoFreeParameters,
}

fn scaled_spectrum_check<T: Real>(j: &DMatrix<T>, indices: &[usize], tol: T) -> Result<()> {
    let mut scaled = j.clone();
    let mut zero = Vec::new();
    for (c, &i) in indices.iter().enumerate() {
        let n = scaled.column(c).norm();
        if n > T::zero() {
            scaled.column_mut(c).unscale_mut(n);
        } else {
            zero.push(param_name(i).to_string());
        }
    }
    if !zero.is_empty() {
        return Err(Error::IllPosed { suspects: zero });
    }
    let svd = scaled.svd(false, true);
    let sv = &svd.singular_values;
    let (mut kmin, mut smin, smax) = (0, sv[0], sv.max());
    for (k, s) in sv.iter().enumerate() {
        if *s < smin {
            smin = *s;
            kmin = k;
        }
    }
    if smin <= smax * tol {
        let v_t = svd.v_t.expect("v_t requested");
        let row = v_t.row(kmin);
        let peak = row.amax();
        let suspects = indices
            .iter()
            .enumerate()
            .filter(|(c, _)| row[*c].abs() >= peak * T::lit(0.3))
            .map(|(_, &i)| param_name(i).to_string())
            .collect();
        return Err(Error::IllPosed { suspects });
    }
    Ok(())
}

/// Levenberg–Marquardt over the free parameters of `initial`.
///
/// Marquardt-scaled damping `λ · diag(JᵀJ)`, multiplicative schedule, residual
/// Jacobian by central differences. Fixed parameters are copied unchanged.
/// A step is accepted when `Σ(e_t − e)(e_t + e) < 0`; `history` records the
/// objective after each accepted step and never increases.
pub fn lm_solve<T: Real>(
    initial: &CalibrationParams<T>,
    measurements: &[Measurement<T>],
    w: T,
    options: &LmOptions<T>,
) -> Result<CalibrationResult<T>> {
    let indices = initial.free.indices();
    let residuals = 6 * measurements.len();
    if measurements.is_empty() {
        return Err(Error::InvalidArgument("empty measurement set".into()));
    }
    if residuals < indices.len() {
        return Err(Error::InsufficientData(format!(
            "{} residuals for {} free parameters",
            residuals,
            indices.len()
        )));
    }

    let mut gamma = *initial;
    let mut e = error_vector(&gamma, measurements, w)?;
    let mut s = e.dot(&e);
    if !s.is_finite() {
        return Err(Error::Diverged("non-finite residual at the initial point".into()));
    }
    let initial_objective = s;
    let mut history = vec![s];
    let mut lambda = options.initial_damping;
    let mut accepted = 0usize;
    let mut stop = StopReason::MaxIterations;

    if indices.is_empty() {
        stop = StopReason::NoFreeParameters;
    } else {
        let mut evaluations = 0usize;
        'outer: while evaluations < options.max_iterations {
            let j = residual_jacobian(&gamma, measurements, w, &indices)?;
            if evaluations == 0 {
                scaled_spectrum_check(&j, &indices, options.rank_tolerance)?;
            }
            evaluations += 1;
            let g = j.transpose() * &e;
            if g.amax() < options.gradient_tolerance {
                stop = StopReason::Gradient;
                break;
            }
            let a = j.transpose() * &j;
            let diag_floor = a.diagonal().max() * T::lit(1e-15);
            let x = gamma.vector();
            loop {
                let mut m = a.clone();
                for k in 0..indices.len() {
                    m[(k, k)] += lambda * a[(k, k)].max(diag_floor);
                }
                let Some(chol) = m.cholesky() else {
                    lambda *= options.damping_increase;
                    if lambda > options.max_damping {
                        stop = StopReason::DampingSaturated;
                        break 'outer;
                    }
                    continue;
                };
                let delta: DVector<T> = -chol.solve(&g);
                if delta.norm() < options.step_tolerance {
                    stop = StopReason::Step;
                    break 'outer;
                }
                let mut xv = x;
                for (k, &i) in indices.iter().enumerate() {
                    xv[i] += delta[k];
                }
                let trial = gamma.with_vector(&xv);
                let et = error_vector(&trial, measurements, w)?;
                let st = et.dot(&et);
                if !st.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite residual after {accepted} accepted steps"
                    )));
                }
                // the direct difference resolves decreases that Σe² alone rounds away
                let decrease = et.iter().zip(e.iter()).fold(T::zero(), |acc, (t, o)| acc + (*t - *o) * (*t + *o));
                if decrease < T::zero() {
                    gamma = trial;
                    e = et;
                    s = st.min(s);
                    history.push(s);
                    accepted += 1;
                    lambda /= options.damping_decrease;
                    break;
                }
                lambda *= options.damping_increase;
                if lambda > options.max_damping {
                    stop = StopReason::DampingSaturated;
                    break 'outer;
                }
            }
        }
    }

    let wrapped = gamma.ct.wrapped();
    let final_objective = if wrapped == gamma.ct {
        e.dot(&e)
    } else {
        gamma.ct = wrapped;
        let e_final = error_vector(&gamma, measurements, w)?;
        e_final.dot(&e_final)
    };
    let calib_stats = validate(&gamma, measurements)?;
    Ok(CalibrationResult {
        gamma_star: gamma,
        calib_stats,
        valid_stats: None,
        iterations: accepted,
        initial_objective,
        final_objective,
        history,
        stop,
    })
}
