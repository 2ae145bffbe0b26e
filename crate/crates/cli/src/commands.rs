//! Subcommand implementations. Each returns the text to print on success.

use crate::config::{parse_range, Target, Tip};
use crate::report::{header, json_text, provenance, read_file, side_by_side, stats_json, summary_json, vec3, write_file};
use crate::{CalibrateArgs, CliError, Context, FkArgs, IkArgs, LocalizeArgs, RcmArgs, WorkspaceArgs};
use nalgebra::{Vector2, Vector3};
use rcmkit::calibration::{
    angle_between_deg, calibrate as run_calibration, pose_stats, CalibrationOptions, CalibrationParams,
    CalibrationResult, CtParams, LmOptions, ParamMask, StatSummary,
};
use rcmkit::io::{
    joints_from_file, joints_to_file, lines_from_json, measurements_from_json, measurements_to_json, parse_cloud,
    robot_model_from_json, robot_model_to_json, write_cloud_text, CtRecord, LineRecord, RobotModelRecord,
};
use rcmkit::kinematics::{
    forward_kinematics, forward_kinematics_checked, inverse_kinematics_nominal_with_limits, inverse_kinematics_seeded,
    IkOptions, RobotModel, FK_PARAM_COUNT, FK_PARAM_NAMES,
};
use rcmkit::localization::{localize_tool, LocalizeConfig, TipEstimate};
use rcmkit::rcm::{estimated_rcm, fit_rcm, RcmFit, ToolLine};
use rcmkit::scalar::deg;
use rcmkit::simulator::{
    gen_measurements, perturb_model, random_poses, synth_cloud, NoiseSpec, PerturbationSpec, PerturbationTarget,
    PoseStrategy, ScanSpec, TipStyle, ToolGeometry,
};
use rcmkit::workspace::{grid_search, ScoreBreakdown, ScoreOptions, SearchRanges, Shell, StiffnessModel, WorkspaceGrid};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::Path;

fn load_model(ctx: &Context) -> Result<RobotModel<f64>, CliError> {
    match &ctx.cfg.robot_model {
        Some(p) => Ok(robot_model_from_json(&read_file(p)?)?),
        None => Ok(RobotModel::nominal()),
    }
}

pub fn fk(ctx: &Context, a: &FkArgs) -> Result<String, CliError> {
    let mut j = [0.0; 5];
    j[..a.joints.len()].copy_from_slice(&a.joints);
    let q = joints_from_file(&j);
    let model = load_model(ctx)?;
    let t = forward_kinematics_checked(&model, &q, !a.no_limits)?;
    let (p, z) = (t.translation, t.z_axis());
    if ctx.json {
        let rows: Vec<[f64; 3]> = (0..3).map(|r| [t.rotation[(r, 0)], t.rotation[(r, 1)], t.rotation[(r, 2)]]).collect();
        return Ok(json_text(&json!({
            "provenance": provenance(ctx, "fk"),
            "joints": j,
            "position_mm": [p.x, p.y, p.z],
            "axis": [z.x, z.y, z.z],
            "rotation": rows,
        })));
    }
    let mut out = header(ctx, "fk");
    let _ = writeln!(out, "joints (deg, deg, mm, deg, mm): {j:?}");
    let _ = writeln!(out, "tooltip (mm):  {}", vec3(&p));
    let _ = writeln!(out, "tool axis:     {}", vec3(&z));
    Ok(out)
}

pub fn ik(ctx: &Context, a: &IkArgs) -> Result<String, CliError> {
    let p = Vector3::new(a.point[0], a.point[1], a.point[2]);
    let model = load_model(ctx)?;
    let q = if ctx.cfg.robot_model.is_none() {
        inverse_kinematics_nominal_with_limits(&p, &model.limits)?
    } else {
        inverse_kinematics_seeded(&model, &p, &IkOptions::default())?.q
    };
    let residual = (forward_kinematics(&model, &q).translation - p).norm();
    let j = joints_to_file(&q);
    if ctx.json {
        return Ok(json_text(&json!({
            "provenance": provenance(ctx, "ik"),
            "target_mm": a.point,
            "joints": j,
            "residual_mm": residual,
        })));
    }
    let mut out = header(ctx, "ik");
    let _ = writeln!(
        out,
        "theta1 {:.9} deg  theta2 {:.9} deg  d3 {:.9} mm  theta4 {:.9} deg  d5 {:.9} mm",
        j[0], j[1], j[2], j[3], j[4]
    );
    let _ = writeln!(out, "residual {residual:.3e} mm");
    Ok(out)
}

fn noise_spec(ctx: &Context, seed: u64) -> NoiseSpec<f64> {
    let n = &ctx.cfg.simulate.noise;
    NoiseSpec {
        position_std: n.position_std_mm,
        axis_std: n.axis_std_deg.to_radians(),
        cloud_axial_std: n.cloud_axial_std_mm,
        cloud_lateral_std: n.cloud_lateral_std_mm,
        seed,
    }
}

/// Seed offsets of the independent streams derived from the master seed.
const POSES_CAL: u64 = 1;
const POSES_VAL: u64 = 2;
const NOISE_CAL: u64 = 3;
const NOISE_VAL: u64 = 4;
const POSES_CLOUD: u64 = 5;
const NOISE_CLOUD: u64 = 1000;

pub fn simulate(ctx: &Context) -> Result<String, CliError> {
    let out = ctx
        .out_dir()
        .ok_or_else(|| CliError::Input("simulate needs --out or output_dir".into()))?;
    let s = &ctx.cfg.simulate;
    let seed = ctx.seed();
    if s.calibration_poses == 0 || s.validation_poses == 0 {
        return Err(CliError::Input("calibration and validation pose counts must be ≥ 1".into()));
    }
    let nominal = load_model(ctx)?;
    let spec = PerturbationSpec {
        max_length_dev: s.perturbation.max_length_dev_mm,
        max_angle_dev: s.perturbation.max_angle_dev_deg.to_radians(),
        seed,
        target: match s.perturbation.target {
            Target::All => PerturbationTarget::AllLinks,
            Target::Terminal => PerturbationTarget::TerminalLinkOnly,
        },
    };
    let (truth, deviation) = perturb_model(&nominal, &spec)?;
    let ct_rec = CtRecord {
        p_mb: s.ct.p_mb,
        r_mb: s.ct.r_mb_deg,
    };
    let ct = CtParams::from(&ct_rec);
    let cal_q = random_poses(s.calibration_poses, &nominal.limits, PoseStrategy::Cover, seed + POSES_CAL)?;
    let val_q = random_poses(s.validation_poses, &nominal.limits, PoseStrategy::Cover, seed + POSES_VAL)?;
    let cal = gen_measurements(&truth, &ct, &cal_q, &noise_spec(ctx, seed + NOISE_CAL))?;
    let val = gen_measurements(&truth, &ct, &val_q, &noise_spec(ctx, seed + NOISE_VAL))?;

    let mut files = vec![
        ("robot_nominal.json".to_string(), robot_model_to_json(&nominal)),
        ("robot_true.json".to_string(), robot_model_to_json(&truth)),
        ("measurements_calibration.json".to_string(), measurements_to_json(&cal)),
        ("measurements_validation.json".to_string(), measurements_to_json(&val)),
    ];

    let mut cloud_truth = Vec::new();
    if s.cloud_poses > 0 && s.clouds_per_pose > 0 {
        let geom = ToolGeometry {
            tip_style: match s.tip {
                Tip::Flat => TipStyle::Flat,
                Tip::Rounded => TipStyle::Rounded,
                Tip::Blob => TipStyle::Blob(s.blob_radius_mm),
            },
            ..ToolGeometry::default()
        };
        let scan = ScanSpec::default();
        let poses = random_poses(s.cloud_poses, &nominal.limits, PoseStrategy::Repeatability, seed + POSES_CLOUD)?;
        let r = ct.rotation();
        for (k, q) in poses.iter().enumerate() {
            let t = forward_kinematics(&truth, q);
            let line = ToolLine::new(r * t.translation + ct.p_mb, r * t.z_axis())?;
            for j in 0..s.clouds_per_pose {
                let stream = seed + NOISE_CLOUD + (k * s.clouds_per_pose + j) as u64;
                let sc = synth_cloud(&line, &geom, &noise_spec(ctx, stream), &scan)?;
                let name = format!("clouds/pose_{k:02}_scan_{j:02}.txt");
                cloud_truth.push(json!({
                    "file": name,
                    "pose": k,
                    "q": joints_to_file(q),
                    "p": [line.p.x, line.p.y, line.p.z],
                    "z": [line.z.x, line.z.y, line.z.z],
                    "points": sc.cloud.len(),
                }));
                files.push((name, write_cloud_text(&sc.cloud)));
            }
        }
    }

    let deviations: serde_json::Map<String, Value> = (0..FK_PARAM_COUNT)
        .map(|i| {
            let d = deviation.deltas[i];
            let v = if rcmkit::kinematics::fk_param_is_angle(i) { d.to_degrees() } else { d };
            (FK_PARAM_NAMES[i].to_string(), json!(v))
        })
        .collect();
    let sidecar = json!({
        "provenance": provenance(ctx, "simulate"),
        "true_model": RobotModelRecord::from(&truth),
        "ct": ct_rec,
        "deviations": deviations,
        "seeds": {
            "perturbation": seed,
            "calibration_poses": seed + POSES_CAL,
            "validation_poses": seed + POSES_VAL,
            "calibration_noise": seed + NOISE_CAL,
            "validation_noise": seed + NOISE_VAL,
            "cloud_poses": seed + POSES_CLOUD,
            "cloud_noise_base": seed + NOISE_CLOUD,
        },
        "calibration_set": "measurements_calibration.json",
        "validation_set": "measurements_validation.json",
        "clouds": cloud_truth,
    });
    files.push(("ground_truth.json".to_string(), json_text(&sidecar)));
    for (name, body) in &files {
        write_file(&out.join(name), body)?;
    }

    if ctx.json {
        let names: Vec<&String> = files.iter().map(|(n, _)| n).collect();
        return Ok(json_text(&json!({
            "provenance": provenance(ctx, "simulate"),
            "output_dir": out.display().to_string(),
            "files": names,
            "calibration_count": cal.len(),
            "validation_count": val.len(),
            "cloud_count": cloud_truth.len(),
        })));
    }
    let mut text = header(ctx, "simulate");
    let _ = writeln!(
        text,
        "{} calibration + {} validation measurements, {} clouds, in {}",
        cal.len(),
        val.len(),
        cloud_truth.len(),
        out.display()
    );
    Ok(text)
}

fn result_json(r: &CalibrationResult<f64>) -> Value {
    json!({
        "calibration_stats": stats_json(&r.calib_stats),
        "validation_stats": r.valid_stats.as_ref().map(stats_json),
        "iterations": r.iterations,
        "initial_objective": r.initial_objective,
        "final_objective": r.final_objective,
        "stop": format!("{:?}", r.stop),
    })
}

fn load_measurements(path: &Path) -> Result<Vec<rcmkit::calibration::Measurement<f64>>, CliError> {
    Ok(measurements_from_json(&read_file(path)?)?)
}

pub fn calibrate(ctx: &Context, a: &CalibrateArgs) -> Result<String, CliError> {
    let ms = load_measurements(&a.measurements)?;
    let valid = a.validation.as_deref().map(load_measurements).transpose()?;
    let nominal = load_model(ctx)?;
    let c = &ctx.cfg.calibration;
    let opts = CalibrationOptions {
        w: c.w,
        observability_threshold: c.observability_threshold,
        free: c.free.mask()?,
        lm: LmOptions::default(),
    };
    let o = run_calibration(&nominal, &ms, valid.as_deref(), &opts)?;
    let g = &o.full.gamma_star;
    let report = json!({
        "provenance": provenance(ctx, "calibrate"),
        "w": c.w,
        "observability_threshold": c.observability_threshold,
        "free": g.free.names(),
        "fixed_by_observability": o.observability.fixed_names(),
        "singular_values": o.observability.singular_values,
        "ct_only": result_json(&o.ct_only),
        "ct_fk": result_json(&o.full),
        "gamma_star": {
            "model": RobotModelRecord::from(&g.model),
            "ct": CtRecord::from(&g.ct),
        },
    });
    if let Some(dir) = ctx.out_dir() {
        write_file(&dir.join("calibration_report.json"), &json_text(&report))?;
    }
    if ctx.json {
        return Ok(json_text(&report));
    }
    let (a_, b_) = (&o.ct_only, &o.full);
    let mut rows = vec![
        ("calib pos (mm)", vec![&a_.calib_stats.position, &b_.calib_stats.position]),
        ("calib ori (deg)", vec![&a_.calib_stats.orientation, &b_.calib_stats.orientation]),
    ];
    if let (Some(va), Some(vb)) = (&a_.valid_stats, &b_.valid_stats) {
        rows.push(("valid pos (mm)", vec![&va.position, &vb.position]));
        rows.push(("valid ori (deg)", vec![&va.orientation, &vb.orientation]));
    }
    let mut out = header(ctx, "calibrate");
    out.push_str(&side_by_side(&["CT-only", "CT+FK"], &rows));
    let _ = writeln!(out, "free parameters: {}", g.free.count());
    let fixed = o.observability.fixed_names();
    let _ = writeln!(out, "fixed by observability: {}", if fixed.is_empty() { "-".into() } else { fixed.join(", ") });
    let _ = writeln!(
        out,
        "objective {:.6e} -> {:.6e} ({} steps, {:?})",
        b_.initial_objective, b_.final_objective, b_.iterations, b_.stop
    );
    Ok(out)
}

fn file_key(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn localize(ctx: &Context, a: &LocalizeArgs) -> Result<String, CliError> {
    if a.clouds.is_empty() {
        return Err(CliError::Input("no point-cloud files given".into()));
    }
    let l = &ctx.cfg.localization;
    let cfg = LocalizeConfig {
        threshold: l.threshold,
        discard_threshold: l.discard_threshold_mm,
        window: l.window,
    };
    let mut estimates: Vec<(String, TipEstimate<f64>)> = Vec::with_capacity(a.clouds.len());
    for path in &a.clouds {
        let cloud = parse_cloud(&read_file(path)?)?;
        let tip = localize_tool(&cloud, &cfg)?;
        estimates.push((file_key(path), tip));
    }
    let lines: Vec<ToolLine<f64>> = estimates
        .iter()
        .map(|(_, t)| ToolLine::new(t.p, t.z))
        .collect::<Result<_, _>>()?;
    let spread = if lines.len() >= 2 { Some(pose_stats(&[lines.clone()])?) } else { None };

    let truth_errors = match &a.truth {
        None => None,
        Some(tp) => {
            let v: Value = serde_json::from_str(&read_file(tp)?).map_err(|e| CliError::Input(format!("{}: {e}", tp.display())))?;
            let clouds = v["clouds"].as_array().cloned().unwrap_or_default();
            let mut pos = Vec::new();
            let mut ang = Vec::new();
            for (name, t) in &estimates {
                let entry = clouds
                    .iter()
                    .find(|c| c["file"].as_str().map(|f| file_key(Path::new(f)) == *name).unwrap_or(false))
                    .ok_or_else(|| CliError::Input(format!("{name} not found in ground truth")))?;
                let vec_of = |k: &str| -> Result<Vector3<f64>, CliError> {
                    let arr: [f64; 3] = serde_json::from_value(entry[k].clone())
                        .map_err(|e| CliError::Input(format!("ground truth {name}.{k}: {e}")))?;
                    Ok(Vector3::from(arr))
                };
                pos.push((t.p - vec_of("p")?).norm());
                ang.push(angle_between_deg(&t.z, &vec_of("z")?));
            }
            Some((StatSummary::from_samples(&pos), StatSummary::from_samples(&ang)))
        }
    };

    let records: Vec<Value> = estimates
        .iter()
        .map(|(n, t)| {
            let mut v = serde_json::to_value(LineRecord::from(t)).expect("record serializes");
            v["file"] = json!(n);
            v
        })
        .collect();
    let report = json!({
        "provenance": provenance(ctx, "localize"),
        "estimates": records,
        "repeatability": spread.as_ref().map(stats_json),
        "truth_error": truth_errors.as_ref().map(|(p, o)| json!({
            "position_mm": summary_json(p),
            "orientation_deg": summary_json(o),
        })),
    });
    if let Some(dir) = ctx.out_dir() {
        write_file(&dir.join("tip_estimates.json"), &json_text(&Value::Array(records.clone())))?;
    }
    if ctx.json {
        return Ok(json_text(&report));
    }
    let mut out = header(ctx, "localize");
    for (n, t) in &estimates {
        let _ = writeln!(out, "{n}: tip {}  axis {}  d_offset {:.6}", vec3(&t.p), vec3(&t.z), t.d_offset);
    }
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    if let Some(s) = &spread {
        cols.push("repeatability");
        rows.push(("position (mm)", vec![&s.position]));
        rows.push(("orientation (deg)", vec![&s.orientation]));
    }
    if let Some((p, o)) = &truth_errors {
        cols.push("vs truth");
        if rows.is_empty() {
            rows.push(("position (mm)", vec![]));
            rows.push(("orientation (deg)", vec![]));
        }
        rows[0].1.push(p);
        rows[1].1.push(o);
    }
    if !rows.is_empty() {
        out.push_str(&side_by_side(&cols, &rows));
    }
    Ok(out)
}

fn fit_json(f: &RcmFit<f64>) -> Value {
    json!({
        "p_rcm": [f.p_rcm.x, f.p_rcm.y, f.p_rcm.z],
        "distance_mm": summary_json(&f.stats),
    })
}

pub fn rcm(ctx: &Context, a: &RcmArgs) -> Result<String, CliError> {
    let text = read_file(&a.lines)?;
    let lines = lines_from_json(&text)?;
    let measured = fit_rcm(&lines)?;
    let estimated = match &a.calibration_report {
        None => None,
        Some(rp) => {
            let v: Value =
                serde_json::from_str(&read_file(rp)?).map_err(|e| CliError::Input(format!("{}: {e}", rp.display())))?;
            let bad = |e: serde_json::Error| CliError::Input(format!("{}: gamma_star: {e}", rp.display()));
            let model_rec: RobotModelRecord = serde_json::from_value(v["gamma_star"]["model"].clone()).map_err(bad)?;
            let ct_rec: CtRecord = serde_json::from_value(v["gamma_star"]["ct"].clone()).map_err(bad)?;
            let gamma = CalibrationParams::new(
                RobotModel::try_from(&model_rec)?,
                CtParams::from(&ct_rec),
                ParamMask::none(),
            );
            let ms = measurements_from_json(&text)
                .map_err(|_| CliError::Input("the estimated remote center needs a measurement set".into()))?;
            let qs: Vec<_> = ms.iter().map(|m| m.q).collect();
            Some(estimated_rcm(&gamma, &qs)?)
        }
    };
    let report = json!({
        "provenance": provenance(ctx, "rcm"),
        "lines": lines.len(),
        "measured": fit_json(&measured),
        "estimated": estimated.as_ref().map(fit_json),
    });
    if let Some(dir) = ctx.out_dir() {
        write_file(&dir.join("rcm_report.json"), &json_text(&report))?;
    }
    if ctx.json {
        return Ok(json_text(&report));
    }
    let mut out = header(ctx, "rcm");
    let _ = writeln!(out, "{:<10} {:<42} {:>10} {:>10} {:>10}", "", "p_rcm (mm)", "rms", "max", "std");
    let mut row = |label: &str, f: &RcmFit<f64>| {
        let _ = writeln!(
            out,
            "{label:<10} {:<42} {:>10.6} {:>10.6} {:>10.6}",
            vec3(&f.p_rcm),
            f.stats.rms,
            f.stats.max,
            f.stats.std
        );
    };
    row("measured", &measured);
    if let Some(e) = &estimated {
        row("estimated", e);
    }
    Ok(out)
}

fn breakdown_json(b: &ScoreBreakdown<f64>) -> Value {
    json!({
        "score": b.score,
        "gci": b.gci,
        "k_end": b.k_end,
        "q_l": if b.q_l.is_finite() { json!(b.q_l) } else { json!(null) },
        "alpha": b.alpha,
        "coverage": b.coverage,
        "feasible": b.feasible,
    })
}

pub fn workspace(ctx: &mut Context, a: &WorkspaceArgs) -> Result<String, CliError> {
    {
        let w = &mut ctx.cfg.workspace;
        if let Some(v) = &a.theta12 {
            w.theta12_deg = v.clone();
        }
        if let Some(v) = &a.theta13 {
            w.theta13_deg = v.clone();
        }
        if let Some(v) = &a.theta35 {
            w.theta35_deg = v.clone();
        }
        if let Some(t) = a.tilt {
            w.tilt_deg = t;
        }
    }
    let w = &ctx.cfg.workspace;
    if !(w.r_in >= 0.0 && w.r_out > w.r_in) {
        return Err(CliError::Input("workspace shell needs 0 ≤ r_in < r_out".into()));
    }
    let rad = |s: &str| -> Result<Vec<f64>, CliError> { Ok(parse_range(s)?.into_iter().map(deg).collect()) };
    let ranges = SearchRanges {
        theta12: rad(&w.theta12_deg)?,
        theta13: rad(&w.theta13_deg)?,
        theta35: rad(&w.theta35_deg)?,
    };
    let grid = WorkspaceGrid::semi_sphere(w.tilt_deg.to_radians());
    let model = StiffnessModel {
        k_q: Vector2::new(w.k_q[0], w.k_q[1]),
        f: Vector3::z(),
    };
    let options = ScoreOptions {
        required_coverage: w.required_coverage,
        shell: Shell {
            r_in: w.r_in,
            r_out: w.r_out,
        },
        min_arc_sum: w.min_arc_sum_deg.to_radians(),
    };
    let r = grid_search(&ranges, &grid, &model, &options, w.stiffness_scale)?;
    let map = r.to_delimited();
    let map_path = ctx.out_dir().map(|d| d.join("workspace_map.csv"));
    if let Some(p) = &map_path {
        write_file(p, &map)?;
    }
    let best = r.best_breakdown();
    let d = [r.best.theta12.to_degrees(), r.best.theta13.to_degrees(), r.best.theta35.to_degrees()];
    if ctx.json {
        return Ok(json_text(&json!({
            "provenance": provenance(ctx, "workspace"),
            "designs": r.breakdowns.len(),
            "best_deg": { "theta12": d[0], "theta13": d[1], "theta35": d[2] },
            "breakdown": breakdown_json(best),
            "stiffness_norm": r.stiffness_norm,
            "map": map_path.map(|p| p.display().to_string()),
        })));
    }
    let mut out = header(ctx, "workspace");
    let _ = writeln!(out, "{} designs scored over {} cells", r.breakdowns.len(), grid.len());
    if best.score > 0.0 {
        let _ = writeln!(out, "best: theta12 {:.1} deg  theta13 {:.1} deg  theta35 {:.1} deg", d[0], d[1], d[2]);
    } else {
        let _ = writeln!(out, "no feasible design (all scores 0); first design reported");
    }
    let _ = writeln!(
        out,
        "score {:.6e}  gci {:.6}  k_end {:.6}  q_l {:.6}  alpha {:.6}  coverage {:.4}",
        best.score, best.gci, best.k_end, best.q_l, best.alpha, best.coverage
    );
    if let Some(p) = &map_path {
        let _ = writeln!(out, "map: {}", p.display());
    }
    Ok(out)
}
