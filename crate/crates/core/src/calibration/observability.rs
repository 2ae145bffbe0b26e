use super::{param_name, residual_jacobian, CalibrationParams, Measurement, ParamMask, CT_OFFSET};
use crate::error::{Error, Result};
use crate::Real;
use nalgebra::DMatrix;

/// Result of SVD observability gating.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservabilityReport<T: Real> {
    /// Free set after gating.
    pub free: ParamMask,
    /// Parameters fixed by the analysis, in the order they were fixed.
    pub fixed: Vec<usize>,
    /// Scaled singular values of the starting free set, descending.
    pub initial_singular_values: Vec<T>,
    /// Scaled singular values of the final free set, descending.
    pub singular_values: Vec<T>,
    /// Every parameter ended up fixed.
    pub all_fixed: bool,
}

impl<T: Real> ObservabilityReport<T> {
    pub fn fixed_names(&self) -> Vec<&'static str> {
        self.fixed.iter().map(|&i| param_name(i)).collect()
    }
}

fn scaled_columns<T: Real>(j: &DMatrix<T>, cols: &[usize]) -> DMatrix<T> {
    let mut out = DMatrix::zeros(j.nrows(), cols.len());
    for (k, &c) in cols.iter().enumerate() {
        let col = j.column(c);
        out.set_column(k, &(col / col.norm()));
    }
    out
}

fn descending<T: Real>(values: impl Iterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = values.collect();
    v.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    v
}

/// Greedy gating of the columns of `m`: while the smallest singular value is
/// below `threshold · σ_max`, drops the column with the largest weight in the
/// span of all right-singular vectors below that level (near-ties to the lower
/// position). The weight does not depend on the basis chosen for that span.
/// Returns the kept and dropped positions, the latter in drop order.
fn gate<T: Real>(m: &DMatrix<T>, threshold: T) -> (Vec<usize>, Vec<usize>) {
    let mut active: Vec<usize> = (0..m.ncols()).collect();
    let mut dropped = Vec::new();
    while active.len() > 1 {
        let sub = DMatrix::from_fn(m.nrows(), active.len(), |r, k| m[(r, active[k])]);
        let svd = sub.svd(false, true);
        let sv = &svd.singular_values;
        let level = sv.max() * threshold;
        let small: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] < level).collect();
        if small.is_empty() {
            break;
        }
        let v_t = svd.v_t.expect("v_t requested");
        let weight: Vec<T> = (0..active.len())
            .map(|c| small.iter().fold(T::zero(), |a, &k| a + v_t[(k, c)] * v_t[(k, c)]))
            .collect();
        let peak = weight.iter().fold(T::zero(), |a, &b| a.max(b));
        let pick = (0..active.len())
            .find(|&k| weight[k] >= peak * (T::one() - T::lit(1e-6)))
            .expect("peak exists");
        dropped.push(active.remove(pick));
    }
    (active, dropped)
}

/// Fixes parameters the measurements cannot resolve.
///
/// The residual Jacobian over the free set is column-normalized. Columns with
/// (numerically) zero norm are fixed first. The free CT columns are gated on
/// their own; the FK columns are then gated after projecting out the span of
/// the kept CT columns. Gating drops, while the smallest singular value is
/// below `threshold · σ_max`, the parameter with the largest weight in the
/// corresponding right-singular vector; near-ties go to the lower index, so
/// earlier links are fixed before the terminal link.
///
/// The CT columns span every rigid motion of the measurement frame, so the
/// projected FK block, and with it the choice of fixed FK parameters, does not
/// depend on where that frame is.
pub fn observability_analysis<T: Real>(
    gamma: &CalibrationParams<T>,
    measurements: &[Measurement<T>],
    w: T,
    threshold: T,
) -> Result<ObservabilityReport<T>> {
    if measurements.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "observability analysis needs at least 5 measurements, got {}",
            measurements.len()
        )));
    }
    let indices = gamma.free.indices();
    let mut free = gamma.free;
    let mut fixed = Vec::new();
    if indices.is_empty() {
        log::warn!("observability analysis called with no free parameters");
        return Ok(ObservabilityReport {
            free,
            fixed,
            initial_singular_values: Vec::new(),
            singular_values: Vec::new(),
            all_fixed: true,
        });
    }

    let j = residual_jacobian(gamma, measurements, w, &indices)?;
    let norms: Vec<T> = (0..indices.len()).map(|c| j.column(c).norm()).collect();
    let peak = norms.iter().fold(T::zero(), |a, &b| a.max(b));
    let zero_tol = peak * T::lit(1e-9);

    let fix = |c: usize, free: &mut ParamMask, fixed: &mut Vec<usize>| {
        free.set(indices[c], false);
        fixed.push(indices[c]);
    };
    let (mut ct_cols, mut fk_cols) = (Vec::new(), Vec::new());
    for (c, &i) in indices.iter().enumerate() {
        if norms[c] <= zero_tol {
            fix(c, &mut free, &mut fixed);
        } else if i >= CT_OFFSET {
            ct_cols.push(c);
        } else {
            fk_cols.push(c);
        }
    }

    let spectrum = |cols: &[usize]| -> Vec<T> {
        if cols.is_empty() {
            return Vec::new();
        }
        let s = scaled_columns(&j, cols);
        descending(s.svd(false, false).singular_values.iter().copied())
    };
    let nonzero: Vec<usize> = (0..indices.len()).filter(|c| norms[*c] > T::zero()).collect();
    let initial_singular_values = spectrum(&nonzero);

    let mut active = Vec::new();
    if !ct_cols.is_empty() {
        let (kept, dropped) = gate(&scaled_columns(&j, &ct_cols), threshold);
        for k in dropped {
            fix(ct_cols[k], &mut free, &mut fixed);
        }
        ct_cols = kept.into_iter().map(|k| ct_cols[k]).collect();
        active.extend_from_slice(&ct_cols);
    }
    if !fk_cols.is_empty() {
        let mut fk = scaled_columns(&j, &fk_cols);
        if !ct_cols.is_empty() {
            let q = scaled_columns(&j, &ct_cols).svd(true, false).u.expect("u requested");
            fk -= &q * (q.transpose() * &fk);
        }
        // columns a rigid motion of the measurement frame reproduces
        let (mut live, mut absorbed) = (Vec::new(), Vec::new());
        for k in 0..fk_cols.len() {
            if fk.column(k).norm() <= T::lit(1e-9) {
                absorbed.push(k);
            } else {
                live.push(k);
            }
        }
        for &k in &absorbed {
            fix(fk_cols[k], &mut free, &mut fixed);
        }
        let sub = DMatrix::from_fn(fk.nrows(), live.len(), |r, k| fk[(r, live[k])]);
        let (kept, dropped) = if live.is_empty() { (Vec::new(), Vec::new()) } else { gate(&sub, threshold) };
        for k in dropped {
            fix(fk_cols[live[k]], &mut free, &mut fixed);
        }
        active.extend(kept.into_iter().map(|k| fk_cols[live[k]]));
    }
    active.sort_unstable();

    let singular_values = spectrum(&active);
    let all_fixed = active.is_empty();
    if all_fixed {
        log::warn!("observability analysis fixed every parameter");
    }
    Ok(ObservabilityReport {
        free,
        fixed,
        initial_singular_values,
        singular_values,
        all_fixed,
    })
}
