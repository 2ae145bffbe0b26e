use super::*;
use crate::calibration::CtParams;
use crate::simulator::{synth_cloud, NoiseSpec, PointLabel, ScanSpec, TipStyle, ToolGeometry};
use crate::rcm::ToolLine;
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn pose() -> ToolLine<f64> {
    ToolLine::new(Vector3::new(0.4, -0.3, 2.0), Vector3::new(0.25, -0.15, 0.95)).unwrap()
}

fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    crate::calibration::angle_between_deg(&a.normalize(), &b.normalize())
}

fn segment(dir: Vector3<f64>, n: usize, len: f64) -> Vec<Vector3<f64>> {
    (0..n).map(|k| dir * (len * k as f64 / (n - 1) as f64)).collect()
}

fn meta() -> CloudMeta<f64> {
    CloudMeta::default()
}

#[test]
fn threshold_examples() {
    let c = synth_cloud(&pose(), &ToolGeometry::default(), &NoiseSpec::zero(1), &ScanSpec::default()).unwrap();
    assert_eq!(threshold_cloud(&c.cloud, 0.0).unwrap(), c.cloud);
    let empty = threshold_cloud(&c.cloud, 2.0).unwrap();
    assert!(empty.is_empty());
    assert_eq!(empty.meta, c.cloud.meta);
    let tool = threshold_cloud(&c.cloud, 0.5).unwrap();
    let expected: Vec<_> = c.cloud.points.iter().zip(&c.labels).filter(|(_, l)| **l != PointLabel::Background).map(|(p, _)| *p).collect();
    assert_eq!(tool.points, expected);
    assert!(threshold_cloud(&c.cloud, f64::NAN).is_err());

    let level = otsu_level(&c.cloud.intensity).unwrap();
    assert!(level > 0.1 && level <= 1.0);
    assert_eq!(otsu_level(&[0.7, 0.7]).unwrap(), 0.7);
    assert!(otsu_level::<f64>(&[]).is_err());
}

#[test]
fn pca_examples() {
    let pts = segment(Vector3::new(0.0, 0.0, -1.0), 20, 5.0);
    assert_relative_eq!(pca_axis(&pts).unwrap(), Vector3::z(), epsilon = 1e-12);
    let pts = segment(Vector3::new(-1.0, 0.0, 0.0), 20, 5.0);
    assert_relative_eq!(pca_axis(&pts).unwrap(), Vector3::x(), epsilon = 1e-12);
    assert!(matches!(pca_axis(&[Vector3::new(1.0, 2.0, 3.0); 5]), Err(Error::Degenerate(_))));
    assert!(pca_axis::<f64>(&[Vector3::zeros(), Vector3::x()]).is_err());
}

#[test]
fn pca_noisy_segment_close_to_truth() {
    let truth = Vector3::new(0.2, 0.5, 0.8).normalize();
    let n = Normal::new(0.0, 0.01).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<_> = segment(truth, 200, 5.0)
            .into_iter()
            .map(|p| p + Vector3::from_fn(|_, _| n.sample(&mut rng)))
            .collect();
        assert!(angle_deg(&pca_axis(&pts).unwrap(), &truth) < 0.5);
    }
}

#[test]
fn pca_rotation_equivariance() {
    let pts = segment(Vector3::new(0.2, 0.5, 0.8).normalize(), 50, 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<_> = pts.iter().map(|p| p + Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05))).collect();
    let g = CtParams::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.3, -0.4, 0.2)).transform();
    let a = pca_axis(&pts).unwrap();
    let moved: Vec<_> = pts.iter().map(|p| g.transform_point(p)).collect();
    let b = pca_axis(&moved).unwrap();
    let ra = g.transform_vector(&a);
    assert!((ra - b).norm() < 1e-9 || (ra + b).norm() < 1e-9);
}

#[test]
fn line_jacobian_matches_finite_differences() {
    let d = Vector3::new(0.3, -0.2, 0.9).normalize();
    let c = Vector3::new(0.1, 0.2, 0.3);
    let x = Vector3::new(1.0, -0.5, 2.0);
    let (e1, e2) = perpendicular_basis(&d);
    let (_, j) = line_jacobian(&x, &c, &d, &e1, &e2);
    let h = 1e-6;
    let r_at = |u: [f64; 4]| {
        let cc = c + e1 * u[0] + e2 * u[1];
        let dd = (d + e1 * u[2] + e2 * u[3]).normalize();
        let y = x - cc;
        y - dd * dd.dot(&y)
    };
    for k in 0..4 {
        let mut up = [0.0; 4];
        let mut um = [0.0; 4];
        up[k] = h;
        um[k] = -h;
        let fd = (r_at(up) - r_at(um)) / (2.0 * h);
        assert_relative_eq!(fd, j.column(k).into_owned(), epsilon = 1e-8);
    }
}

#[test]
fn refine_examples() {
    let truth = Vector3::new(0.1, 0.2, 1.0).normalize();
    let pts: Vec<_> = segment(truth, 30, 3.0).into_iter().map(|p| p + Vector3::new(1.0, 1.0, 0.0)).collect();
    let fit = gauss_newton_line_refine(&pts, &Vector3::new(0.0, 0.3, 1.0), &Vector3::new(1.2, 0.9, 0.0)).unwrap();
    assert!(fit.converged);
    assert!(fit.rms_orthogonal < 1e-12);
    assert_relative_eq!(fit.direction, truth, epsilon = 1e-12);
    assert_eq!(fit.inlier_count, 30);

    let again = gauss_newton_line_refine(&pts, &fit.direction, &fit.point_on_axis).unwrap();
    assert_relative_eq!(again.direction, fit.direction, epsilon = 1e-14);
    assert_relative_eq!(again.point_on_axis, fit.point_on_axis, epsilon = 1e-12);
    assert_eq!(again.iterations, 1);

    let flipped = gauss_newton_line_refine(&pts, &-truth, &Vector3::zeros()).unwrap();
    assert_relative_eq!(flipped.direction, -truth, epsilon = 1e-12);

    assert!(matches!(gauss_newton_line_refine(&pts[..5], &truth, &Vector3::zeros()), Err(Error::InsufficientData(_))));
    assert!(gauss_newton_line_refine(&pts, &Vector3::zeros(), &Vector3::zeros()).is_err());
}

#[test]
fn refine_on_cylinder_surface() {
    let t = pose();
    let c = synth_cloud(&t, &ToolGeometry::default(), &NoiseSpec::zero(0), &ScanSpec { background_fraction: 0.0, ..ScanSpec::default() }).unwrap();
    let start = t.z + Vector3::new(0.03, -0.02, 0.0);
    let fit = gauss_newton_line_refine(&c.cloud.points, &start, &(t.p + Vector3::new(0.05, 0.0, 0.0))).unwrap();
    assert!((fit.rms_orthogonal - 0.3).abs() < 0.003);
    assert!(angle_deg(&fit.direction, &t.z) < 0.1);
}

#[test]
fn discard_examples() {
    let t = pose();
    let axis = AxisFit { direction: t.z, point_on_axis: t.p, rms_orthogonal: 0.3, inlier_count: 0, iterations: 0, converged: true };
    let c = synth_cloud(&t, &ToolGeometry::default(), &NoiseSpec::zero(0), &ScanSpec { background_fraction: 0.0, ..ScanSpec::default() }).unwrap();
    assert_eq!(discard_tip_features(&c.cloud.points, &axis, 0.31), c.cloud.points);

    let geom = ToolGeometry { tip_style: TipStyle::Blob(0.9), ..ToolGeometry::default() };
    let b = synth_cloud(&t, &geom, &NoiseSpec::zero(0), &ScanSpec { background_fraction: 0.0, ..ScanSpec::default() }).unwrap();
    let limit = default_discard_threshold(&b.cloud.points, &axis);
    let kept = discard_tip_features(&b.cloud.points, &axis, limit);
    let shaft = b.labels.iter().filter(|l| **l == PointLabel::Shaft).count();
    assert_eq!(kept.len(), shaft);

    let z_axis = AxisFit { direction: Vector3::z(), point_on_axis: Vector3::zeros(), ..axis };
    let on_axis = vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, -2.0), Vector3::new(0.1, 0.0, 0.0)];
    assert_eq!(discard_tip_features(&on_axis, &z_axis, 0.0).len(), 2);
}

#[test]
fn blob_removed_after_biased_first_fit() {
    let geom = ToolGeometry { tip_style: TipStyle::Blob(0.9), ..ToolGeometry::default() };
    let c = synth_cloud(&pose(), &geom, &NoiseSpec::zero(0), &ScanSpec::default()).unwrap();
    let report = localize_tool_report(&c.cloud, &LocalizeConfig::default()).unwrap();
    let blob: Vec<_> = c.cloud.points.iter().zip(&c.labels).filter(|(_, l)| **l == PointLabel::Blob).map(|(p, _)| *p).collect();
    let limit = default_discard_threshold(&threshold_cloud(&c.cloud, report.level).unwrap().points, &report.first_fit);
    let surviving = discard_tip_features(&blob, &report.first_fit, limit).len();
    assert!(surviving as f64 <= 0.05 * blob.len() as f64, "{surviving} of {} blob points kept", blob.len());
    assert!(angle_deg(&report.tip.z, &pose().z) < 1e-6);
}

#[test]
fn cumulative_tip_examples() {
    let d = Vector3::new(0.0, 0.5, 3f64.sqrt() / 2.0);
    let h = 0.001;
    let pts: Vec<_> = (0..=2000).map(|k| d * (k as f64 * h)).collect();
    let axis = fit_axis(&pts).unwrap();
    let axis = if axis.direction.dot(&d) < 0.0 { axis.flipped() } else { axis };
    let end = d * 2.0;

    let tip = cumulative_tip_estimate(&pts, &axis, &d, 0.15).unwrap();
    assert!((tip.p - end).norm() < 1e-9);

    let b = Vector3::z();
    assert_relative_eq!(b.dot(&d), 30f64.to_radians().cos(), epsilon = 1e-12);
    let tip = cumulative_tip_estimate(&pts, &axis, &b, 0.15).unwrap();
    assert!((tip.p - end).norm() <= h);
    assert_relative_eq!(tip.z, d, epsilon = 1e-12);

    let far = vec![Vector3::zeros(), d * 2.0];
    assert!(matches!(cumulative_tip_estimate(&far, &axis, &b, 0.15), Err(Error::InsufficientData(_))));
    assert!(cumulative_tip_estimate(&[], &axis, &b, 0.15).is_err());
}

#[test]
fn localize_noise_free_is_exact() {
    let t = pose();
    for style in [TipStyle::Flat, TipStyle::Blob(0.9)] {
        let geom = ToolGeometry { tip_style: style, ..ToolGeometry::default() };
        let c = synth_cloud(&t, &geom, &NoiseSpec::zero(4), &ScanSpec::default()).unwrap();
        let tip = localize_tool(&c.cloud, &LocalizeConfig::default()).unwrap();
        assert!(angle_deg(&tip.z, &t.z) < 1e-6);
        assert!((tip.p - t.p).norm() < 1e-6, "{style:?}: {}", (tip.p - t.p).norm());
    }
}

#[test]
fn localize_noisy_repeats() {
    let t = pose();
    let (mut pos, mut ang) = (0.0, 0.0);
    for seed in 0..32 {
        let noise = NoiseSpec { seed, ..NoiseSpec::default() };
        let c = synth_cloud(&t, &ToolGeometry::default(), &noise, &ScanSpec::default()).unwrap();
        let tip = localize_tool(&c.cloud, &LocalizeConfig::default()).unwrap();
        pos += (tip.p - t.p).norm_squared();
        ang += angle_deg(&tip.z, &t.z).powi(2);
    }
    assert!((pos / 32.0).sqrt() <= 0.02);
    assert!((ang / 32.0).sqrt() <= 0.05);
}

#[test]
fn localize_errors_and_tip_side() {
    let c = synth_cloud(&pose(), &ToolGeometry::default(), &NoiseSpec::zero(4), &ScanSpec::default()).unwrap();
    let empty = LocalizeConfig { threshold: Some(5.0), ..LocalizeConfig::default() };
    assert!(matches!(localize_tool(&c.cloud, &empty), Err(Error::InsufficientData(_))));
    let none = OctPointCloud::new(vec![], vec![], meta()).unwrap();
    assert!(matches!(localize_tool(&none, &LocalizeConfig::default()), Err(Error::InsufficientData(_))));

    // Tool pointing against the depth axis: the tip follows the depth axis.
    let up = ToolLine::new(Vector3::zeros(), -pose().z).unwrap();
    let c = synth_cloud(&up, &ToolGeometry::default(), &NoiseSpec::zero(4), &ScanSpec::default()).unwrap();
    let tip = localize_tool(&c.cloud, &LocalizeConfig::default()).unwrap();
    assert!(tip.z.dot(&up.z) < 0.0);

    // Without a depth axis the PCA sign convention decides.
    let scan = ScanSpec { meta: CloudMeta { axial_dir: None, ..meta() }, ..ScanSpec::default() };
    let c = synth_cloud(&up, &ToolGeometry::default(), &NoiseSpec::zero(4), &scan).unwrap();
    let tip = localize_tool(&c.cloud, &LocalizeConfig::default()).unwrap();
    assert!(tip.z.z > 0.0);
}

#[test]
fn cloud_validation() {
    assert!(OctPointCloud::new(vec![Vector3::<f64>::zeros()], vec![], meta()).is_err());
    assert!(CloudMeta::new(0.0, 0.025, Vector3::x(), None).is_err());
    assert!(CloudMeta::new(0.01, 0.025, Vector3::new(1.0, 1.0, 0.0), None).is_err());
}

#[test]
fn localize_f32() {
    let t = pose();
    let c = synth_cloud(&t, &ToolGeometry::default(), &NoiseSpec::zero(1), &ScanSpec::default()).unwrap();
    let meta32 = CloudMeta::<f32> {
        axial_res: 0.0092,
        lateral_res: 0.025,
        bscan_dir: Vector3::x(),
        axial_dir: Some(Vector3::z()),
    };
    let cloud = OctPointCloud::new(
        c.cloud.points.iter().map(|p| p.cast::<f32>()).collect(),
        c.cloud.intensity.iter().map(|v| *v as f32).collect(),
        meta32,
    )
    .unwrap();
    let tip = localize_tool(&cloud, &LocalizeConfig::default()).unwrap();
    assert!((tip.p.cast::<f64>() - t.p).norm() < 1e-3);
}

fn window_cloud(seed: u64) -> (Vec<Vector3<f64>>, AxisFit<f64>) {
    let t = pose();
    let noise = NoiseSpec { seed, ..NoiseSpec::default() };
    let c = synth_cloud(&t, &ToolGeometry::default(), &noise, &ScanSpec { background_fraction: 0.0, ..ScanSpec::default() }).unwrap();
    let axis = fit_axis(&c.cloud.points).unwrap();
    let axis = if axis.direction.dot(&t.z) < 0.0 { axis.flipped() } else { axis };
    (c.cloud.points, axis)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn prop_rigid_motion_equivariance(seed in 0u64..100_000, tx in -5.0..5.0f64, yaw in -3.0..3.0f64, pitch in -1.2..1.2f64, roll in -3.0..3.0f64) {
        let geom = ToolGeometry { tip_style: TipStyle::Blob(0.9), ..ToolGeometry::default() };
        let noise = NoiseSpec { seed, ..NoiseSpec::default() };
        let c = synth_cloud(&pose(), &geom, &noise, &ScanSpec::default()).unwrap();
        let g = CtParams::new(Vector3::new(tx, -tx / 2.0, 1.0), Vector3::new(yaw, pitch, roll)).transform();
        let a = localize_tool_report(&c.cloud, &LocalizeConfig::default()).unwrap();
        let b = localize_tool_report(&c.cloud.transformed(&g), &LocalizeConfig::default()).unwrap();
        prop_assert!((g.transform_point(&a.tip.p) - b.tip.p).amax() < 1e-9);
        prop_assert!((g.transform_vector(&a.tip.z) - b.tip.z).amax() < 1e-9);
        prop_assert!((g.transform_vector(&a.final_fit.direction) - b.final_fit.direction).amax() < 1e-9);
        prop_assert!((a.final_fit.rms_orthogonal - b.final_fit.rms_orthogonal).abs() < 1e-9);
    }

    #[test]
    fn prop_window_restriction(seed in 0u64..100_000, shift in 0.0..1.0f64) {
        let (pts, axis) = window_cloud(seed);
        let b = Vector3::new(1.0, 0.0, 1.0).normalize();
        let base = cumulative_tip_estimate(&pts, &axis, &b, 0.15).unwrap();
        let s_max = pts.iter().map(|x| axis.coordinate(x)).fold(f64::MIN, f64::max);
        let moved: Vec<_> = pts
            .iter()
            .map(|x| if axis.coordinate(x) < s_max - 0.3 { x + Vector3::new(shift, -shift, 0.0) - axis.direction * shift } else { *x })
            .collect();
        let again = cumulative_tip_estimate(&moved, &axis, &b, 0.15).unwrap();
        prop_assert_eq!(base, again);
    }

    #[test]
    fn prop_fit_has_no_spin(seed in 0u64..100_000) {
        // Only a centerline comes out; rotating the cloud about it changes nothing.
        let t = pose();
        let c = synth_cloud(&t, &ToolGeometry::default(), &NoiseSpec::zero(seed), &ScanSpec::default()).unwrap();
        let spin = crate::kinematics::rot_axis(&t.z, 0.7);
        let g = crate::kinematics::RigidTransform::new(spin, t.p - spin * t.p);
        let a = localize_tool(&c.cloud, &LocalizeConfig::default()).unwrap();
        let b = localize_tool(&c.cloud.transformed(&g), &LocalizeConfig::default()).unwrap();
        prop_assert!((a.p - b.p).amax() < 1e-9 && (a.z - b.z).amax() < 1e-9);
    }
}

#[test]
fn noise_monotonicity() {
    let t = pose();
    let mut means = Vec::new();
    for sigma in [0.0, 0.005, 0.010, 0.025] {
        let mut total = 0.0;
        for seed in 0..24 {
            let noise = NoiseSpec { cloud_axial_std: sigma, cloud_lateral_std: sigma, seed, ..NoiseSpec::zero(seed) };
            let c = synth_cloud(&t, &ToolGeometry::default(), &noise, &ScanSpec::default()).unwrap();
            total += (localize_tool(&c.cloud, &LocalizeConfig::default()).unwrap().p - t.p).norm();
        }
        means.push(total / 24.0);
    }
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
}


