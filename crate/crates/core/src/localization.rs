//! Tool axis and tooltip from an OCT intensity point cloud.
//!
//! Pipeline: threshold, PCA axis, Gauss–Newton line refinement, removal of
//! non-cylindrical tip features, second refinement, cumulative-percentage tip
//! interpolation.

use crate::error::{Error, Result};
use crate::kinematics::RigidTransform;
use crate::Real;
use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};

/// Scanner metadata carried with a cloud.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudMeta<T: Real> {
    /// mm
    pub axial_res: T,
    /// mm
    pub lateral_res: T,
    /// Unit B-scan direction.
    pub bscan_dir: Vector3<T>,
    /// Unit depth direction of the scanner. The tool enters from the shallow
    /// side, so its tip points along this; `None` means +z.
    pub axial_dir: Option<Vector3<T>>,
}

impl<T: Real> CloudMeta<T> {
    pub fn new(axial_res: T, lateral_res: T, bscan_dir: Vector3<T>, axial_dir: Option<Vector3<T>>) -> Result<Self> {
        let meta = Self {
            axial_res,
            lateral_res,
            bscan_dir,
            axial_dir,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: &Vector3<T>| (v.norm() - T::one()).abs() <= T::lit(1e-9);
        if !(self.axial_res > T::zero() && self.lateral_res > T::zero()) {
            return Err(Error::InvalidArgument("cloud resolutions must be positive".into()));
        }
        if !unit(&self.bscan_dir) || !self.axial_dir.as_ref().is_none_or(unit) {
            return Err(Error::InvalidArgument("cloud directions must be unit vectors".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for CloudMeta<T> {
    fn default() -> Self {
        Self {
            axial_res: T::lit(0.0092),
            lateral_res: T::lit(0.025),
            bscan_dir: Vector3::x(),
            axial_dir: Some(Vector3::z()),
        }
    }
}

/// Points (mm) with one intensity each.
#[derive(Clone, Debug, PartialEq)]
pub struct OctPointCloud<T: Real> {
    pub points: Vec<Vector3<T>>,
    pub intensity: Vec<T>,
    pub meta: CloudMeta<T>,
}

impl<T: Real> OctPointCloud<T> {
    pub fn new(points: Vec<Vector3<T>>, intensity: Vec<T>, meta: CloudMeta<T>) -> Result<Self> {
        if points.len() != intensity.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} intensities",
                points.len(),
                intensity.len()
            )));
        }
        meta.validate()?;
        Ok(Self {
            points,
            intensity,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rigidly moved copy; the scanner directions rotate with it.
    pub fn transformed(&self, g: &RigidTransform<T>) -> Self {
        Self {
            points: self.points.iter().map(|p| g.transform_point(p)).collect(),
            intensity: self.intensity.clone(),
            meta: CloudMeta {
                bscan_dir: g.transform_vector(&self.meta.bscan_dir),
                axial_dir: self.meta.axial_dir.map(|a| g.transform_vector(&a)),
                ..self.meta
            },
        }
    }
}

/// Fitted centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisFit<T: Real> {
    pub direction: Vector3<T>,
    pub point_on_axis: Vector3<T>,
    /// RMS orthogonal distance of the fitted points (mm).
    pub rms_orthogonal: T,
    pub inlier_count: usize,
    pub iterations: usize,
    /// False when the iteration cap was hit; the best iterate is returned.
    pub converged: bool,
}

impl<T: Real> AxisFit<T> {
    pub fn distance(&self, x: &Vector3<T>) -> T {
        let y = x - self.point_on_axis;
        (y - self.direction * self.direction.dot(&y)).norm()
    }

    /// Signed coordinate of `x` along the axis.
    pub fn coordinate(&self, x: &Vector3<T>) -> T {
        self.direction.dot(&(x - self.point_on_axis))
    }

    pub fn flipped(self) -> Self {
        Self {
            direction: -self.direction,
            ..self
        }
    }
}

/// Tooltip position and axis. Only the axis is known; rotation about it is not.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TipEstimate<T: Real> {
    pub p: Vector3<T>,
    pub z: Vector3<T>,
    /// Interpolated tip coordinate minus the extreme point coordinate (mm).
    pub d_offset: T,
}

/// Points with intensity ≥ `level`.
pub fn threshold_cloud<T: Real>(cloud: &OctPointCloud<T>, level: T) -> Result<OctPointCloud<T>> {
    if !level.is_finite() {
        return Err(Error::InvalidArgument("threshold level must be finite".into()));
    }
    let (points, intensity) = cloud
        .points
        .iter()
        .zip(&cloud.intensity)
        .filter(|(_, i)| **i >= level)
        .map(|(p, i)| (*p, *i))
        .unzip();
    Ok(OctPointCloud {
        points,
        intensity,
        meta: cloud.meta,
    })
}

/// Two-class Otsu split of the intensities over a 256-bin histogram.
///
/// Returns a level separating the classes; when all intensities are equal,
/// the common value (everything kept).
pub fn otsu_level<T: Real>(intensity: &[T]) -> Result<T> {
    const BINS: usize = 256;
    if intensity.is_empty() {
        return Err(Error::InsufficientData("no intensities to threshold".into()));
    }
    let lo = intensity.iter().fold(intensity[0], |a, &b| a.min(b));
    let hi = intensity.iter().fold(intensity[0], |a, &b| a.max(b));
    if !(hi > lo) {
        return Ok(lo);
    }
    let width = (hi - lo) / T::lit(BINS as f64);
    let mut hist = [0usize; BINS];
    for &v in intensity {
        let b = ((v - lo) / width).floor().as_f64() as usize;
        hist[b.min(BINS - 1)] += 1;
    }
    let total = intensity.len() as f64;
    let centers: Vec<f64> = (0..BINS).map(|b| b as f64 + 0.5).collect();
    let sum_all: f64 = hist.iter().zip(&centers).map(|(h, c)| *h as f64 * c).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (-1.0, 0);
    for k in 0..BINS - 1 {
        w0 += hist[k] as f64;
        sum0 += hist[k] as f64 * centers[k];
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_k = k;
        }
    }
    Ok(lo + width * T::lit((best_k + 1) as f64))
}

fn centroid<T: Real>(points: &[Vector3<T>]) -> Vector3<T> {
    points.iter().fold(Vector3::zeros(), |a, p| a + p) / T::lit(points.len() as f64)
}

/// Principal direction of the centered covariance.
///
/// Sign: positive dot with +z; if that is zero (within 1e-12), positive dot with +x, then +y.
pub fn pca_axis<T: Real>(points: &[Vector3<T>]) -> Result<Vector3<T>> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 3 points, got {}",
            points.len()
        )));
    }
    let c = centroid(points);
    let mut cov = Matrix3::zeros();
    for p in points {
        let y = p - c;
        cov += y * y.transpose();
    }
    let eig = cov.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let scale = points.iter().fold(T::zero(), |a, p| a.max(p.amax()));
    if eig.eigenvalues[k] <= T::default_epsilon() * (T::one() + scale * scale) {
        return Err(Error::Degenerate("points are collocated".into()));
    }
    let v: Vector3<T> = eig.eigenvectors.column(k).normalize();
    let tie = T::lit(1e-12);
    let flip = if v.z.abs() > tie {
        v.z < T::zero()
    } else if v.x.abs() > tie {
        v.x < T::zero()
    } else {
        v.y < T::zero()
    };
    Ok(if flip { -v } else { v })
}

fn perpendicular_basis<T: Real>(d: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
    let a = d.map(|v| v.abs());
    let helper = if a.x <= a.y && a.x <= a.z {
        Vector3::x()
    } else if a.y <= a.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = d.cross(&helper).normalize();
    let e2 = d.cross(&e1);
    (e1, e2)
}

fn line_rms<T: Real>(points: &[Vector3<T>], c: &Vector3<T>, d: &Vector3<T>) -> T {
    let ss = points.iter().fold(T::zero(), |a, x| {
        let y = x - c;
        a + (y - d * d.dot(&y)).norm_squared()
    });
    (ss / T::lit(points.len() as f64)).sqrt()
}

/// Orthogonal residual `(I − d dᵀ)(x − c)` and its derivative with respect to
/// `(u1, u2, v1, v2)`, where `c' = c + u·e` and `d' ∝ d + v·e`.
fn line_jacobian<T: Real>(
    x: &Vector3<T>,
    c: &Vector3<T>,
    d: &Vector3<T>,
    e1: &Vector3<T>,
    e2: &Vector3<T>,
) -> (Vector3<T>, Matrix3x4<T>) {
    let y = x - c;
    let s = d.dot(&y);
    let mut j = Matrix3x4::zeros();
    j.set_column(0, &-e1);
    j.set_column(1, &-e2);
    j.set_column(2, &-(e1 * s + d * e1.dot(&y)));
    j.set_column(3, &-(e2 * s + d * e2.dot(&y)));
    (y - d * s, j)
}

/// Gauss–Newton fit of a 3-D line minimizing squared orthogonal distances.
///
/// Four local parameters per step (two in-plane shifts of the point, two tilts
/// of the direction). Converged when the step norm is below 1e-10; after 100
/// iterations the best iterate is returned with `converged = false`. For `f32`
/// the step tolerance is raised to 16 ulps. The direction keeps the sign of
/// `initial_direction`.
pub fn gauss_newton_line_refine<T: Real>(
    points: &[Vector3<T>],
    initial_direction: &Vector3<T>,
    initial_point: &Vector3<T>,
) -> Result<AxisFit<T>> {
    const MAX_ITER: usize = 100;
    if points.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "line refinement needs at least 6 points, got {}",
            points.len()
        )));
    }
    let n0 = initial_direction.norm();
    if !(n0 > T::zero() && n0.is_finite()) {
        return Err(Error::InvalidArgument("initial direction is degenerate".into()));
    }
    let step_tol = T::lit(1e-10).max(T::default_epsilon() * T::lit(16.0));
    let mean = centroid(points);
    let recenter = |c: Vector3<T>, d: &Vector3<T>| c + d * d.dot(&(mean - c));

    let mut d = initial_direction / n0;
    let mut c = recenter(*initial_point, &d);
    let mut rms = line_rms(points, &c, &d);
    let (mut best_c, mut best_d, mut best_rms) = (c, d, rms);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let (e1, e2) = perpendicular_basis(&d);
        let mut jtj = Matrix4::<T>::zeros();
        let mut jtr = Vector4::<T>::zeros();
        for x in points {
            let (r, j) = line_jacobian(x, &c, &d, &e1, &e2);
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let step = match jtj.cholesky() {
            Some(ch) => -ch.solve(&jtr),
            None => match jtj.pseudo_inverse(T::lit(1e-14)) {
                Ok(pinv) => -(pinv * jtr),
                Err(_) => break,
            },
        };
        iterations += 1;
        if step.norm() < step_tol {
            // near the minimum the rms is flat to rounding, so keep the last iterate
            (best_c, best_d, best_rms) = (c, d, rms);
            converged = true;
            break;
        }
        c += e1 * step[0] + e2 * step[1];
        d = (d + e1 * step[2] + e2 * step[3]).normalize();
        c = recenter(c, &d);
        rms = line_rms(points, &c, &d);
        if rms <= best_rms {
            (best_c, best_d, best_rms) = (c, d, rms);
        }
    }
    if !converged {
        log::warn!("line refinement stopped at {MAX_ITER} iterations without converging");
    }
    Ok(AxisFit {
        direction: best_d,
        point_on_axis: best_c,
        rms_orthogonal: best_rms,
        inlier_count: points.len(),
        iterations,
        converged,
    })
}

/// PCA start plus Gauss–Newton refinement over `points`.
pub fn fit_axis<T: Real>(points: &[Vector3<T>]) -> Result<AxisFit<T>> {
    let d = pca_axis(points)?;
    gauss_newton_line_refine(points, &d, &centroid(points))
}

/// Points within `dist_threshold` (mm) of the axis.
pub fn discard_tip_features<T: Real>(points: &[Vector3<T>], axis: &AxisFit<T>, dist_threshold: T) -> Vec<Vector3<T>> {
    points
        .iter()
        .filter(|x| axis.distance(x) <= dist_threshold)
        .copied()
        .collect()
}

/// Twice the shaft-radius estimate, the radius being `√2 ·` median orthogonal distance.
pub fn default_discard_threshold<T: Real>(points: &[Vector3<T>], axis: &AxisFit<T>) -> T {
    let mut d: Vec<T> = points.iter().map(|x| axis.distance(x)).collect();
    if d.is_empty() {
        return T::zero();
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = d.len();
    let median = if n % 2 == 1 {
        d[n / 2]
    } else {
        (d[n / 2 - 1] + d[n / 2]) / T::lit(2.0)
    };
    T::lit(2.0) * T::lit(2f64.sqrt()) * median
}

/// Empirical CDF with ties (within 1e-9, or a few ulps for `f32`) grouped: `(value, fraction ≤ value)`.
fn ecdf<T: Real>(mut values: Vec<T>) -> Vec<(T, T)> {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = T::lit(values.len() as f64);
    let scale = values.iter().fold(T::one(), |a, v| a.max(v.abs()));
    let tie = T::lit(1e-9).max(T::default_epsilon() * T::lit(64.0) * scale);
    let mut out: Vec<(T, T)> = Vec::new();
    let mut start = 0;
    for (k, v) in values.iter().enumerate() {
        let last = k + 1 == values.len() || values[k + 1] - values[start] > tie;
        if last {
            out.push((*v, T::lit((k + 1) as f64) / n));
            start = k + 1;
        }
    }
    out
}

/// Extrapolates a line `value = a + b·P` fitted over `P ∈ [0.2, 0.8]` to `P = 1`;
/// returns the crossing and the residual variance of the fit.
fn extrapolate_full<T: Real>(curve: &[(T, T)]) -> (T, T) {
    let core: Vec<(T, T)> = curve
        .iter()
        .filter(|(_, p)| *p >= T::lit(0.2) && *p <= T::lit(0.8))
        .copied()
        .collect();
    let pts = if core.len() >= 2 { core } else { curve.to_vec() };
    if pts.len() < 2 {
        let v = pts.first().map_or(T::zero(), |x| x.0);
        return (v, T::zero());
    }
    let n = T::lit(pts.len() as f64);
    let mp = pts.iter().fold(T::zero(), |a, x| a + x.1) / n;
    let mv = pts.iter().fold(T::zero(), |a, x| a + x.0) / n;
    let spp = pts.iter().fold(T::zero(), |a, x| a + (x.1 - mp) * (x.1 - mp));
    let spv = pts.iter().fold(T::zero(), |a, x| a + (x.1 - mp) * (x.0 - mv));
    let slope = if spp > T::zero() { spv / spp } else { T::zero() };
    let at = |p: T| mv + slope * (p - mp);
    let var = pts.iter().fold(T::zero(), |a, x| a + (x.0 - at(x.1)) * (x.0 - at(x.1))) / n;
    (at(T::one()), var)
}

/// Tooltip from the cumulative distribution of points near the tip end.
///
/// `axis.direction` must point toward the tip. Points with axial coordinate
/// within `window` of the extreme point are used. Two cumulative curves are
/// built: (b) the coordinate along the centerline and (a) the coordinate along
/// `bscan_dir`, mapped onto the axis by `1 / (b·d)`. Each is extrapolated to
/// 100 %, and the two crossings are combined with inverse residual-variance
/// weights. Curve (a) is skipped when `|b·d| < 1e-3`.
pub fn cumulative_tip_estimate<T: Real>(
    points: &[Vector3<T>],
    axis: &AxisFit<T>,
    bscan_dir: &Vector3<T>,
    window: T,
) -> Result<TipEstimate<T>> {
    let s_max = points
        .iter()
        .map(|x| axis.coordinate(x))
        .fold(None, |a: Option<T>, s| Some(a.map_or(s, |m| m.max(s))))
        .ok_or_else(|| Error::InsufficientData("no points for tip estimation".into()))?;
    let near: Vec<&Vector3<T>> = points
        .iter()
        .filter(|x| axis.coordinate(x) >= s_max - window)
        .collect();
    if near.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} point(s) within {window} mm of the tip",
            near.len()
        )));
    }
    let d = axis.direction;
    let c = axis.point_on_axis;
    let (along_b, var_b) = extrapolate_full(&ecdf(near.iter().map(|x| axis.coordinate(x)).collect()));
    let bd = bscan_dir.dot(&d);
    let eps = T::lit(1e-12);
    let s_tip = if bd.abs() >= T::lit(1e-3) {
        let (along_a, var_a) = extrapolate_full(&ecdf(near.iter().map(|x| bscan_dir.dot(&(*x - c)) / bd).collect()));
        let (wa, wb) = (T::one() / (var_a + eps), T::one() / (var_b + eps));
        (along_a * wa + along_b * wb) / (wa + wb)
    } else {
        along_b
    };
    Ok(TipEstimate {
        p: c + d * s_tip,
        z: d,
        d_offset: s_tip - s_max,
    })
}

/// Settings of [`localize_tool`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalizeConfig<T: Real> {
    /// Fixed intensity level; `None` uses [`otsu_level`].
    pub threshold: Option<T>,
    /// Fixed feature-removal distance (mm); `None` uses [`default_discard_threshold`].
    pub discard_threshold: Option<T>,
    /// Tip window (mm).
    pub window: T,
}

impl<T: Real> Default for LocalizeConfig<T> {
    fn default() -> Self {
        Self {
            threshold: None,
            discard_threshold: None,
            window: T::lit(0.15),
        }
    }
}

/// Intermediate results of [`localize_tool_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationReport<T: Real> {
    pub tip: TipEstimate<T>,
    pub level: T,
    pub first_fit: AxisFit<T>,
    pub final_fit: AxisFit<T>,
    pub discarded: usize,
}

fn orient_to_tip<T: Real>(fit: AxisFit<T>, meta: &CloudMeta<T>) -> AxisFit<T> {
    let reference = meta.axial_dir.unwrap_or(Vector3::z());
    if reference.dot(&fit.direction) < T::zero() {
        fit.flipped()
    } else {
        fit
    }
}

/// Full pipeline with intermediate results.
pub fn localize_tool_report<T: Real>(cloud: &OctPointCloud<T>, config: &LocalizeConfig<T>) -> Result<LocalizationReport<T>> {
    if cloud.is_empty() {
        return Err(Error::InsufficientData("empty point cloud".into()));
    }
    let level = match config.threshold {
        Some(l) => l,
        None => otsu_level(&cloud.intensity)?,
    };
    let tool = threshold_cloud(cloud, level)?;
    if tool.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "{} point(s) left after thresholding",
            tool.len()
        )));
    }
    let first_fit = orient_to_tip(fit_axis(&tool.points)?, &cloud.meta);
    let limit = config
        .discard_threshold
        .unwrap_or_else(|| default_discard_threshold(&tool.points, &first_fit));
    let kept = discard_tip_features(&tool.points, &first_fit, limit);
    if kept.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "{} point(s) left after removing tip features",
            kept.len()
        )));
    }
    let refit = gauss_newton_line_refine(&kept, &first_fit.direction, &first_fit.point_on_axis)?;
    let final_fit = orient_to_tip(refit, &cloud.meta);
    let tip = cumulative_tip_estimate(&kept, &final_fit, &cloud.meta.bscan_dir, config.window)?;
    Ok(LocalizationReport {
        tip,
        level,
        first_fit,
        final_fit,
        discarded: tool.len() - kept.len(),
    })
}

/// threshold → PCA → refine → discard → refine → cumulative tip.
pub fn localize_tool<T: Real>(cloud: &OctPointCloud<T>, config: &LocalizeConfig<T>) -> Result<TipEstimate<T>> {
    localize_tool_report(cloud, config).map(|r| r.tip)
}

#[cfg(test)]
mod tests;
