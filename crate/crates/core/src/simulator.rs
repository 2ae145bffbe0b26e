//! Seeded synthetic ground truth: perturbed models, pose sets, noisy tool-pose
//! measurements and cylindrical-tool point clouds.
//!
//! Every generator is a pure function of its inputs and seed. Per-item streams
//! use `seed + index` so items can be generated independently.

use crate::calibration::{CtParams, Measurement};
use crate::error::{Error, Result};
use crate::kinematics::{
    fk_param_is_angle, forward_kinematics, forward_kinematics_nominal, JointLimits, JointState,
    RobotModel, FK_PARAM_COUNT,
};
use crate::localization::{CloudMeta, OctPointCloud};
use crate::rcm::ToolLine;
use crate::Real;
use nalgebra::{SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index))
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).expect("finite std").sample(rng)
}

/// Which FK parameters a perturbation touches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PerturbationTarget {
    AllLinks,
    TerminalLinkOnly,
    /// Explicit FK parameter indices.
    Indices(Vec<usize>),
}

impl PerturbationTarget {
    pub fn indices(&self) -> Vec<usize> {
        match self {
            Self::AllLinks => (0..FK_PARAM_COUNT).collect(),
            Self::TerminalLinkOnly => (12..FK_PARAM_COUNT).collect(),
            Self::Indices(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSpec<T: Real> {
    /// mm
    pub max_length_dev: T,
    /// rad
    pub max_angle_dev: T,
    pub seed: u64,
    pub target: PerturbationTarget,
}

impl<T: Real> PerturbationSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_length_dev >= T::zero() && self.max_angle_dev >= T::zero()) {
            return Err(Error::InvalidArgument("perturbation magnitudes must be ≥ 0".into()));
        }
        if let Some(i) = self.target.indices().iter().find(|i| **i >= FK_PARAM_COUNT) {
            return Err(Error::InvalidArgument(format!("FK parameter index {i} out of range")));
        }
        Ok(())
    }
}

/// Deviations applied by [`perturb_model`], in FK parameter order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviationRecord<T: Real> {
    pub deltas: SVector<T, FK_PARAM_COUNT>,
}

/// Uniform deviations in `±max` per parameter class (length or angle).
///
/// Each parameter draws from its own stream (`seed + index`), so the value of a
/// deviation does not depend on which other parameters are targeted.
pub fn perturb_model<T: Real>(nominal: &RobotModel<T>, spec: &PerturbationSpec<T>) -> Result<(RobotModel<T>, DeviationRecord<T>)> {
    spec.validate()?;
    let mut deltas = SVector::<T, FK_PARAM_COUNT>::zeros();
    for i in spec.target.indices() {
        let max = if fk_param_is_angle(i) { spec.max_angle_dev } else { spec.max_length_dev }.as_f64();
        if max > 0.0 {
            deltas[i] = T::lit(rng_for(spec.seed, i as u64).random_range(-max..=max));
        }
    }
    let mut v = nominal.param_vector();
    for i in 0..FK_PARAM_COUNT {
        if deltas[i] != T::zero() {
            v[i] += deltas[i];
        }
    }
    Ok((nominal.with_param_vector(&v), DeviationRecord { deltas }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PoseStrategy {
    /// Uniform within the joint limits.
    Cover,
    /// Consecutive nominal tip positions 2.5–4 mm apart.
    Repeatability,
}

fn uniform_pose<T: Real>(rng: &mut ChaCha8Rng, limits: &JointLimits<T>) -> JointState<T> {
    let r = limits.ranges();
    let mut v = [T::zero(); 5];
    for (k, range) in r.iter().enumerate() {
        let (lo, hi) = (range.min.as_f64(), range.max.as_f64());
        v[k] = T::lit(if hi > lo { rng.random_range(lo..=hi) } else { lo });
    }
    JointState::new(v[0], v[1], v[2], v[3], v[4])
}

/// `n` joint states drawn with `strategy`.
///
/// Repeatability poses are found by rejection sampling: each candidate is drawn
/// uniformly within the limits and accepted when its nominal tip lies 2.5–4 mm
/// from the previous one.
pub fn random_poses<T: Real>(n: usize, limits: &JointLimits<T>, strategy: PoseStrategy, seed: u64) -> Result<Vec<JointState<T>>> {
    const MAX_TRIES: usize = 1_000_000;
    if n == 0 {
        return Err(Error::InvalidArgument("pose count must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match strategy {
        PoseStrategy::Cover => Ok((0..n).map(|_| uniform_pose(&mut rng, limits)).collect()),
        PoseStrategy::Repeatability => {
            let tip = |q: &JointState<T>| forward_kinematics_nominal(q).translation;
            let mut out = vec![uniform_pose(&mut rng, limits)];
            while out.len() < n {
                let prev = tip(out.last().expect("non-empty"));
                let next = (0..MAX_TRIES)
                    .map(|_| uniform_pose(&mut rng, limits))
                    .find(|q| {
                        let d = (tip(q) - prev).norm().as_f64();
                        (2.5..=4.0).contains(&d)
                    })
                    .ok_or_else(|| Error::InvalidArgument("joint limits admit no 2.5–4 mm step".into()))?;
                out.push(next);
            }
            Ok(out)
        }
    }
}

/// Gaussian noise levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec<T: Real> {
    /// Per-coordinate tooltip noise (mm).
    pub position_std: T,
    /// Per-coordinate axis noise before renormalization (rad).
    pub axis_std: T,
    /// Point-cloud noise along the scanner depth axis (mm).
    pub cloud_axial_std: T,
    /// Point-cloud noise across the depth axis (mm).
    pub cloud_lateral_std: T,
    pub seed: u64,
}

impl<T: Real> NoiseSpec<T> {
    pub fn zero(seed: u64) -> Self {
        Self {
            position_std: T::zero(),
            axis_std: T::zero(),
            cloud_axial_std: T::zero(),
            cloud_lateral_std: T::zero(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.position_std, self.axis_std, self.cloud_axial_std, self.cloud_lateral_std];
        if all.iter().all(|v| *v >= T::zero() && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("noise levels must be finite and ≥ 0".into()))
        }
    }
}

impl<T: Real> Default for NoiseSpec<T> {
    /// Tool-pose noise of 0.008 mm / 0.014°, cloud noise at the scanner
    /// resolution (9.2 µm axial, 25 µm lateral).
    fn default() -> Self {
        Self {
            position_std: T::lit(0.008),
            axis_std: T::lit(0.014f64.to_radians()),
            cloud_axial_std: T::lit(0.0092),
            cloud_lateral_std: T::lit(0.025),
            seed: 0,
        }
    }
}

/// Noisy measurements of `poses` on the true robot seen through `true_ct`.
pub fn gen_measurements<T: Real>(
    true_model: &RobotModel<T>,
    true_ct: &CtParams<T>,
    poses: &[JointState<T>],
    noise: &NoiseSpec<T>,
) -> Result<Vec<Measurement<T>>> {
    noise.validate()?;
    let r = true_ct.rotation();
    let (ps, zs) = (noise.position_std.as_f64(), noise.axis_std.as_f64());
    poses
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let mut rng = rng_for(noise.seed, i as u64);
            let t = forward_kinematics(true_model, q);
            let p = r * t.translation + true_ct.p_mb;
            let z = r * t.z_axis();
            let dp = Vector3::from_fn(|_, _| T::lit(gaussian(&mut rng, ps)));
            let dz = Vector3::from_fn(|_, _| T::lit(gaussian(&mut rng, zs)));
            let z = if zs == 0.0 { z } else { (z + dz).normalize() };
            Ok(Measurement::new(*q, p + dp, z))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TipStyle<T: Real> {
    /// Open cut; no end cap.
    Flat,
    /// Hemispherical cap with the shaft radius; the tip is its apex.
    Rounded,
    /// Sphere of the given radius beside the tip, a stand-in for a bent or
    /// non-cylindrical tip feature.
    Blob(T),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToolGeometry<T: Real> {
    /// mm
    pub shaft_radius: T,
    /// Shaft length visible behind the tip (mm).
    pub shaft_length_in_view: T,
    pub tip_style: TipStyle<T>,
}

impl<T: Real> ToolGeometry<T> {
    pub fn validate(&self) -> Result<()> {
        let blob_ok = match self.tip_style {
            TipStyle::Blob(r) => r > T::zero(),
            _ => true,
        };
        if self.shaft_radius > T::zero() && self.shaft_length_in_view > T::zero() && blob_ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("tool radii and visible length must be > 0".into()))
        }
    }
}

impl<T: Real> Default for ToolGeometry<T> {
    fn default() -> Self {
        Self {
            shaft_radius: T::lit(0.3),
            shaft_length_in_view: T::lit(3.0),
            tip_style: TipStyle::Flat,
        }
    }
}

/// Sampling pattern and scanner description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanSpec<T: Real> {
    pub meta: CloudMeta<T>,
    /// Axial spacing of shaft rings (mm).
    pub ring_spacing: T,
    pub points_per_ring: usize,
    /// Background points as a fraction of tool points.
    pub background_fraction: T,
    /// Edge of the cubic scan volume centred on the tip (mm).
    pub volume: T,
}

impl<T: Real> Default for ScanSpec<T> {
    /// 10 mm volume sampled at 10× the lateral resolution along the shaft
    /// (0.01 mm rings once decimation is folded in), 24 points per ring.
    fn default() -> Self {
        Self {
            meta: CloudMeta::default(),
            ring_spacing: T::lit(0.01),
            points_per_ring: 24,
            background_fraction: T::lit(0.01),
            volume: T::lit(10.0),
        }
    }
}

/// Origin of each point in a synthetic cloud.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointLabel {
    Shaft,
    Cap,
    Blob,
    Background,
}

/// A cloud with per-point labels and the pose it was generated from.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCloud<T: Real> {
    pub cloud: OctPointCloud<T>,
    pub labels: Vec<PointLabel>,
    pub truth: ToolLine<T>,
}

pub const TOOL_INTENSITY: f64 = 1.0;
pub const BACKGROUND_INTENSITY: f64 = 0.1;

fn basis_perpendicular(z: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if z.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = z.cross(&helper).normalize();
    (e1, z.cross(&e1))
}

/// Point cloud of a cylindrical tool whose tip is at `tool_pose.p`, its shaft
/// extending backward from the tip along `−tool_pose.z`.
///
/// Shaft rings run from the tip ring backward at `ring_spacing`; successive
/// rings are rotated by the golden angle. Noise is anisotropic: `cloud_axial_std`
/// along `meta.axial_dir` (or `z` of the scanner when absent) and
/// `cloud_lateral_std` across it. Background points are uniform in the scan
/// volume. Each call with the same inputs gives an identical cloud.
pub fn synth_cloud<T: Real>(
    tool_pose: &ToolLine<T>,
    geom: &ToolGeometry<T>,
    noise: &NoiseSpec<T>,
    scan: &ScanSpec<T>,
) -> Result<SyntheticCloud<T>> {
    geom.validate()?;
    noise.validate()?;
    scan.meta.validate()?;
    if !(scan.ring_spacing > T::zero()) || scan.points_per_ring < 3 {
        return Err(Error::InvalidArgument("ring spacing must be > 0 with ≥ 3 points per ring".into()));
    }
    let tz = tool_pose.z.map(|v| v.as_f64());
    if (tz.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("tool axis must be a unit vector".into()));
    }
    let tip = tool_pose.p.map(|v| v.as_f64());
    let (e1, e2) = basis_perpendicular(&tz);
    let r = geom.shaft_radius.as_f64();
    let h = scan.ring_spacing.as_f64();
    let m = scan.points_per_ring;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());

    let mut pts: Vec<Vector3<f64>> = Vec::new();
    let mut labels = Vec::new();
    let rings = (geom.shaft_length_in_view.as_f64() / h).floor() as usize;
    let shaft_start = match geom.tip_style {
        TipStyle::Rounded => r,
        _ => 0.0,
    };
    for k in 0..=rings {
        let s = shaft_start + k as f64 * h;
        let phase = k as f64 * golden;
        for j in 0..m {
            let a = phase + 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            pts.push(tip - tz * s + (e1 * a.cos() + e2 * a.sin()) * r);
            labels.push(PointLabel::Shaft);
        }
    }
    match geom.tip_style {
        TipStyle::Flat => {}
        TipStyle::Rounded => {
            let cap_rings = (r / h).ceil().max(1.0) as usize;
            for k in 0..cap_rings {
                // polar angle from the apex
                let phi = std::f64::consts::FRAC_PI_2 * k as f64 / cap_rings as f64;
                let count = if k == 0 { 1 } else { m };
                for j in 0..count {
                    let a = k as f64 * golden + 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                    let radial = (e1 * a.cos() + e2 * a.sin()) * (r * phi.sin());
                    pts.push(tip - tz * (r - r * phi.cos()) + radial);
                    labels.push(PointLabel::Cap);
                }
            }
        }
        TipStyle::Blob(br) => {
            let br = br.as_f64();
            let centre = tip - tz * br + e1 * (r + 2.0 * br);
            let count = 10 * m;
            for j in 0..count {
                // Fibonacci sphere
                let y = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
                let ring = (1.0 - y * y).sqrt();
                let a = j as f64 * golden;
                let dir = tz * y + (e1 * a.cos() + e2 * a.sin()) * ring;
                pts.push(centre + dir * br);
                labels.push(PointLabel::Blob);
            }
        }
    }

    let axial = scan.meta.axial_dir.unwrap_or(Vector3::z()).map(|v| v.as_f64());
    let (l1, l2) = basis_perpendicular(&axial);
    let (sa, sl) = (noise.cloud_axial_std.as_f64(), noise.cloud_lateral_std.as_f64());
    let mut rng = rng_for(noise.seed, 0);
    for p in &mut pts {
        let (na, n1, n2) = (gaussian(&mut rng, sa), gaussian(&mut rng, sl), gaussian(&mut rng, sl));
        *p += axial * na + l1 * n1 + l2 * n2;
    }

    let tool_count = pts.len();
    let background = (scan.background_fraction.as_f64() * tool_count as f64).round() as usize;
    let half = scan.volume.as_f64() / 2.0;
    let mut bg_rng = rng_for(noise.seed, 1);
    for _ in 0..background {
        let off = Vector3::from_fn(|_, _| if half > 0.0 { bg_rng.random_range(-half..=half) } else { 0.0 });
        pts.push(tip + off);
        labels.push(PointLabel::Background);
    }

    let intensity = labels
        .iter()
        .map(|l| T::lit(if *l == PointLabel::Background { BACKGROUND_INTENSITY } else { TOOL_INTENSITY }))
        .collect();
    let cloud = OctPointCloud::new(pts.iter().map(|p| p.map(T::lit)).collect(), intensity, scan.meta)?;
    Ok(SyntheticCloud {
        cloud,
        labels,
        truth: *tool_pose,
    })
}
