//! Joint estimation of the scanner registration (CT) and the kinematic (FK)
//! parameters from tool-pose measurements.
//!
//! Parameter vector (24 scalars): the 18 FK parameters in
//! [`FK_PARAM_NAMES`](crate::kinematics::FK_PARAM_NAMES) order, then the CT
//! translation `p_mb` and ZYX Euler angles `r_mb = (yaw, pitch, roll)` of the
//! base frame expressed in the measurement frame.
//!
//! Residual of one measurement:
//! `[p_m − (R(r_mb) p_b + p_mb); w (z_m − R(r_mb) z_b)]`.

mod lm;
mod observability;
mod stats;

pub use lm::{lm_solve, LmOptions, StopReason};
pub use observability::{observability_analysis, ObservabilityReport};
pub use stats::{angle_between_deg, ErrorStats, StatSummary};

use crate::error::{Error, Result};
use crate::kinematics::{
    fk_param_is_angle, forward_kinematics, rot_x, rot_y, rot_z, JointState, RigidTransform,
    RobotModel, FK_PARAM_COUNT, FK_PARAM_NAMES,
};
use crate::rcm::ToolLine;
use crate::scalar::wrap_angle;
use crate::Real;
use nalgebra::{DMatrix, DVector, Matrix3, SVector, Vector3};

/// Total number of calibration parameters.
pub const PARAM_COUNT: usize = 24;
/// Index of the first CT parameter.
pub const CT_OFFSET: usize = FK_PARAM_COUNT;
/// Index of the first terminal-link parameter.
pub const TOOL_OFFSET: usize = 12;
/// Default weight (mm) converting axis mismatch into a position-like residual.
pub const DEFAULT_WEIGHT: f64 = 10.0;

/// Name of calibration parameter `index`.
pub fn param_name(index: usize) -> &'static str {
    const CT: [&str; 6] = ["ct.px", "ct.py", "ct.pz", "ct.yaw", "ct.pitch", "ct.roll"];
    if index < CT_OFFSET {
        FK_PARAM_NAMES[index]
    } else {
        CT[index - CT_OFFSET]
    }
}

/// Whether calibration parameter `index` is an angle.
pub fn param_is_angle(index: usize) -> bool {
    if index < CT_OFFSET {
        fk_param_is_angle(index)
    } else {
        index >= CT_OFFSET + 3
    }
}

/// Base-to-measurement registration: translation (mm) and ZYX Euler angles (rad).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CtParams<T: Real> {
    pub p_mb: Vector3<T>,
    /// `(yaw about z, pitch about y, roll about x)`, applied as `Rz · Ry · Rx`.
    pub r_mb: Vector3<T>,
}

impl<T: Real> CtParams<T> {
    pub fn identity() -> Self {
        Self {
            p_mb: Vector3::zeros(),
            r_mb: Vector3::zeros(),
        }
    }

    pub fn new(p_mb: Vector3<T>, r_mb: Vector3<T>) -> Self {
        Self { p_mb, r_mb }.wrapped()
    }

    pub fn rotation(&self) -> Matrix3<T> {
        rot_z(self.r_mb.x) * rot_y(self.r_mb.y) * rot_x(self.r_mb.z)
    }

    pub fn transform(&self) -> RigidTransform<T> {
        RigidTransform::new(self.rotation(), self.p_mb)
    }

    /// ZYX decomposition of a rigid transform.
    pub fn from_transform(t: &RigidTransform<T>) -> Self {
        let r = &t.rotation;
        let pitch = (-r[(2, 0)]).max(-T::one()).min(T::one()).asin();
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        Self::new(t.translation, Vector3::new(yaw, pitch, roll))
    }

    /// Euler angles wrapped into (−π, π].
    pub fn wrapped(self) -> Self {
        Self {
            p_mb: self.p_mb,
            r_mb: self.r_mb.map(wrap_angle),
        }
    }
}

/// Per-parameter free/fixed flags over the 24 calibration parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamMask(pub [bool; PARAM_COUNT]);

impl ParamMask {
    pub fn none() -> Self {
        Self([false; PARAM_COUNT])
    }

    pub fn all() -> Self {
        Self([true; PARAM_COUNT])
    }

    /// Everything except link 1's `d` and `theta`, which duplicate CT freedoms.
    pub fn default_free() -> Self {
        let mut m = Self::all();
        m.0[0] = false;
        m.0[1] = false;
        m
    }

    pub fn ct_only() -> Self {
        Self::from_indices(CT_OFFSET..PARAM_COUNT)
    }

    /// The six terminal-link parameters.
    pub fn tool_only() -> Self {
        Self::from_indices(TOOL_OFFSET..CT_OFFSET)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::none();
        for i in indices {
            m.0[i] = true;
        }
        m
    }

    pub fn is_free(&self, index: usize) -> bool {
        self.0[index]
    }

    pub fn set(&mut self, index: usize, free: bool) {
        self.0[index] = free;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|f| **f).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..PARAM_COUNT).filter(|i| self.0[*i]).collect()
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let mut m = *self;
        for i in 0..PARAM_COUNT {
            m.0[i] &= other.0[i];
        }
        m
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.indices().into_iter().map(param_name).collect()
    }
}

impl Default for ParamMask {
    fn default() -> Self {
        Self::default_free()
    }
}

/// Calibration state: kinematic model, registration and which scalars may move.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationParams<T: Real> {
    pub model: RobotModel<T>,
    pub ct: CtParams<T>,
    pub free: ParamMask,
}

impl<T: Real> CalibrationParams<T> {
    pub fn new(model: RobotModel<T>, ct: CtParams<T>, free: ParamMask) -> Self {
        Self { model, ct, free }
    }

    pub fn vector(&self) -> SVector<T, PARAM_COUNT> {
        let mut v = SVector::<T, PARAM_COUNT>::zeros();
        v.fixed_rows_mut::<FK_PARAM_COUNT>(0).copy_from(&self.model.param_vector());
        v.fixed_rows_mut::<3>(CT_OFFSET).copy_from(&self.ct.p_mb);
        v.fixed_rows_mut::<3>(CT_OFFSET + 3).copy_from(&self.ct.r_mb);
        v
    }

    /// Copy with every parameter replaced from `v` (mask unchanged).
    pub fn with_vector(&self, v: &SVector<T, PARAM_COUNT>) -> Self {
        let fk: SVector<T, FK_PARAM_COUNT> = v.fixed_rows::<FK_PARAM_COUNT>(0).into_owned();
        Self {
            model: self.model.with_param_vector(&fk),
            ct: CtParams {
                p_mb: v.fixed_rows::<3>(CT_OFFSET).into_owned(),
                r_mb: v.fixed_rows::<3>(CT_OFFSET + 3).into_owned(),
            },
            free: self.free,
        }
    }

    pub fn with_free(&self, free: ParamMask) -> Self {
        Self { free, ..*self }
    }

    /// Tool pose predicted in the measurement frame.
    pub fn predict(&self, q: &JointState<T>) -> ToolLine<T> {
        let t = forward_kinematics(&self.model, q);
        let r = self.ct.rotation();
        ToolLine {
            p: r * t.translation + self.ct.p_mb,
            z: r * t.z_axis(),
        }
    }
}

/// One observation: encoder joints plus tooltip position and tool axis in the scanner frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement<T: Real> {
    pub q: JointState<T>,
    pub p_m: Vector3<T>,
    pub z_m: Vector3<T>,
}

impl<T: Real> Measurement<T> {
    pub fn new(q: JointState<T>, p_m: Vector3<T>, z_m: Vector3<T>) -> Self {
        Self { q, p_m, z_m }
    }

    /// Checks finiteness and the unit-axis invariant (1e-9).
    pub fn validate(&self) -> Result<()> {
        let finite = self.q.is_finite()
            && self.p_m.iter().chain(self.z_m.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("non-finite measurement".into()));
        }
        if (self.z_m.norm() - T::one()).abs() > T::lit(1e-9) {
            return Err(Error::InvalidArgument(format!(
                "measured tool axis is not unit length (|z| = {})",
                self.z_m.norm()
            )));
        }
        Ok(())
    }

    pub fn line(&self) -> ToolLine<T> {
        ToolLine {
            p: self.p_m,
            z: self.z_m,
        }
    }
}

/// Six-component residual `[e_p; w e_z]` of one measurement.
pub fn residual<T: Real>(gamma: &CalibrationParams<T>, m: &Measurement<T>, w: T) -> SVector<T, 6> {
    let pred = gamma.predict(&m.q);
    let ep = m.p_m - pred.p;
    let ez = (m.z_m - pred.z) * w;
    SVector::<T, 6>::new(ep.x, ep.y, ep.z, ez.x, ez.y, ez.z)
}

/// Residuals of all measurements stacked in order (length `6 n`).
pub fn error_vector<T: Real>(
    gamma: &CalibrationParams<T>,
    measurements: &[Measurement<T>],
    w: T,
) -> Result<DVector<T>> {
    if measurements.is_empty() {
        return Err(Error::InvalidArgument("empty measurement set".into()));
    }
    let mut e = DVector::zeros(6 * measurements.len());
    for (i, m) in measurements.iter().enumerate() {
        e.fixed_rows_mut::<6>(6 * i).copy_from(&residual(gamma, m, w));
    }
    Ok(e)
}

/// Sum of squared residuals `S = eᵀe`.
pub fn objective<T: Real>(
    gamma: &CalibrationParams<T>,
    measurements: &[Measurement<T>],
    w: T,
) -> Result<T> {
    let e = error_vector(gamma, measurements, w)?;
    Ok(e.dot(&e))
}

/// Central-difference Jacobian of the error vector with respect to `indices`.
pub fn residual_jacobian<T: Real>(
    gamma: &CalibrationParams<T>,
    measurements: &[Measurement<T>],
    w: T,
    indices: &[usize],
) -> Result<DMatrix<T>> {
    let h = T::fd_step();
    let base = gamma.vector();
    let mut jac = DMatrix::zeros(6 * measurements.len(), indices.len());
    for (c, &i) in indices.iter().enumerate() {
        let mut plus = base;
        let mut minus = base;
        plus[i] += h;
        minus[i] -= h;
        let ep = error_vector(&gamma.with_vector(&plus), measurements, w)?;
        let em = error_vector(&gamma.with_vector(&minus), measurements, w)?;
        jac.set_column(c, &((ep - em) / (h + h)));
    }
    Ok(jac)
}

/// Least-squares rigid registration of nominal tool tips onto the measured tips.
///
/// Needs three or more measurements whose predicted tips are not collinear.
pub fn register_ct<T: Real>(
    model: &RobotModel<T>,
    measurements: &[Measurement<T>],
) -> Result<CtParams<T>> {
    if measurements.len() < 3 {
        return Err(Error::InsufficientData(
            "registration needs at least 3 measurements".into(),
        ));
    }
    let n = T::lit(measurements.len() as f64);
    let src: Vec<Vector3<T>> = measurements
        .iter()
        .map(|m| forward_kinematics(model, &m.q).translation)
        .collect();
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let cd = measurements.iter().fold(Vector3::zeros(), |a, m| a + m.p_m) / n;
    let mut h = Matrix3::zeros();
    for (s, m) in src.iter().zip(measurements) {
        h += (s - cs) * (m.p_m - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let sv = &svd.singular_values;
    let smax = sv.max();
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    if smax <= T::zero() || sorted[1] <= smax * T::lit(1e-12) {
        return Err(Error::Degenerate(
            "tool tips are collinear; registration is undetermined".into(),
        ));
    }
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < T::zero() {
        d[(2, 2)] = -T::one();
    };
    let r = v * d * u.transpose();
    let t = cd - r * cs;
    Ok(CtParams::from_transform(&RigidTransform::new(r, t)))
}

/// Summary of one calibration solve.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult<T: Real> {
    pub gamma_star: CalibrationParams<T>,
    pub calib_stats: ErrorStats<T>,
    pub valid_stats: Option<ErrorStats<T>>,
    /// Accepted LM steps.
    pub iterations: usize,
    pub initial_objective: T,
    pub final_objective: T,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<T>,
    pub stop: StopReason,
}

/// Position and orientation error statistics of `gamma` against measurements.
///
/// Position error is `|e_p|` in mm; orientation error is the angle between the
/// measured and predicted axes in degrees. Parameters are not modified.
pub fn validate<T: Real>(
    gamma: &CalibrationParams<T>,
    measurements: &[Measurement<T>],
) -> Result<ErrorStats<T>> {
    if measurements.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    let mut pos = Vec::with_capacity(measurements.len());
    let mut ang = Vec::with_capacity(measurements.len());
    for m in measurements {
        let pred = gamma.predict(&m.q);
        pos.push((m.p_m - pred.p).norm());
        ang.push(angle_between_deg(&m.z_m, &pred.z));
    }
    Ok(ErrorStats {
        position: StatSummary::from_samples(&pos),
        orientation: StatSummary::from_samples(&ang),
    })
}

/// CT-only baseline: the six registration scalars move, FK stays at `initial`.
pub fn ct_only_calibrate<T: Real>(
    initial: &CalibrationParams<T>,
    measurements: &[Measurement<T>],
    w: T,
    options: &LmOptions<T>,
) -> Result<CalibrationResult<T>> {
    lm_solve(&initial.with_free(ParamMask::ct_only()), measurements, w, options)
}

/// Re-estimates only the terminal link (after a tool exchange); needs ≥ 5 poses.
///
/// Links 1–3 and the CT are frozen. Terminal-link scalars that the poses cannot
/// observe (for the ideal tool, the spin offset) are fixed by
/// [`observability_analysis`] before solving.
pub fn tool_offset_recalibrate<T: Real>(
    gamma_star: &CalibrationParams<T>,
    measurements: &[Measurement<T>],
    w: T,
    threshold: T,
    options: &LmOptions<T>,
) -> Result<CalibrationResult<T>> {
    if measurements.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "tool recalibration needs at least 5 poses, got {}",
            measurements.len()
        )));
    }
    let start = gamma_star.with_free(ParamMask::tool_only());
    let report = observability_analysis(&start, measurements, w, threshold)?;
    lm_solve(&start.with_free(report.free), measurements, w, options)
}

/// Settings for the full [`calibrate`] pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationOptions<T: Real> {
    pub w: T,
    /// Relative singular-value threshold for observability gating.
    pub observability_threshold: T,
    /// Starting free set before gating.
    pub free: ParamMask,
    pub lm: LmOptions<T>,
}

impl<T: Real> Default for CalibrationOptions<T> {
    fn default() -> Self {
        Self {
            w: T::lit(DEFAULT_WEIGHT),
            observability_threshold: T::lit(1e-6),
            free: ParamMask::default_free(),
            lm: LmOptions::default(),
        }
    }
}

/// Output of [`calibrate`]: the CT-only baseline and the gated CT+FK solve.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationOutcome<T: Real> {
    pub ct_only: CalibrationResult<T>,
    pub full: CalibrationResult<T>,
    pub observability: ObservabilityReport<T>,
}

/// Registration, CT-only solve, observability gating, then the CT+FK solve.
///
/// With a validation set, both results carry validation statistics.
pub fn calibrate<T: Real>(
    nominal: &RobotModel<T>,
    measurements: &[Measurement<T>],
    validation: Option<&[Measurement<T>]>,
    options: &CalibrationOptions<T>,
) -> Result<CalibrationOutcome<T>> {
    for m in measurements {
        m.validate()?;
    }
    let ct0 = register_ct(nominal, measurements)?;
    let start = CalibrationParams::new(*nominal, ct0, options.free);
    let mut ct_only = ct_only_calibrate(&start, measurements, options.w, &options.lm)?;
    let seeded = ct_only.gamma_star.with_free(options.free);
    let observability =
        observability_analysis(&seeded, measurements, options.w, options.observability_threshold)?;
    let mut full = lm_solve(&seeded.with_free(observability.free), measurements, options.w, &options.lm)?;
    if let Some(valid) = validation {
        ct_only.valid_stats = Some(validate(&ct_only.gamma_star, valid)?);
        full.valid_stats = Some(validate(&full.gamma_star, valid)?);
    }
    Ok(CalibrationOutcome {
        ct_only,
        full,
        observability,
    })
}

/// Spread of repeated tool poses about each set's mean.
///
/// For every set, position deviations are `|p_i − mean(p)|` and orientation
/// deviations are the angles between `z_i` and the normalized mean axis. The
/// deviations of all sets are pooled; `rms` is therefore the pooled population
/// standard deviation of the positions (two points `2h` apart give `rms = h`,
/// `max = h`, `std = 0`), and `std` is the sample standard deviation of the
/// deviation magnitudes.
pub fn pose_stats<T: Real>(sets: &[Vec<ToolLine<T>>]) -> Result<ErrorStats<T>> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no pose sets".into()));
    }
    let mut pos = Vec::new();
    let mut ang = Vec::new();
    for set in sets {
        if set.len() < 2 {
            return Err(Error::InsufficientData(
                "each pose set needs at least 2 samples".into(),
            ));
        }
        let n = T::lit(set.len() as f64);
        let mean_p = set.iter().fold(Vector3::zeros(), |a, l| a + l.p) / n;
        let mean_z = set.iter().fold(Vector3::zeros(), |a, l| a + l.z);
        let norm = mean_z.norm();
        if norm == T::zero() {
            return Err(Error::Degenerate("tool axes cancel; mean orientation undefined".into()));
        }
        let mean_z = mean_z / norm;
        for l in set {
            pos.push((l.p - mean_p).norm());
            ang.push(angle_between_deg(&l.z, &mean_z));
        }
    }
    Ok(ErrorStats {
        position: StatSummary::from_samples(&pos),
        orientation: StatSummary::from_samples(&ang),
    })
}
