use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rcmkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcmkit")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("json report")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const NOISE_FREE: &str = "[simulate.noise]\nposition_std_mm = 0.0\naxis_std_deg = 0.0\ncloud_axial_std_mm = 0.0\ncloud_lateral_std_mm = 0.0\n";

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn simulate(dir: &Path, config: Option<&Path>, seed: &str) -> PathBuf {
    let out = dir.join(format!("data_{seed}"));
    let mut args = vec!["--out", p(&out), "--seed", seed];
    if let Some(c) = config {
        args.extend(["--config", p(c)]);
    }
    args.push("simulate");
    let o = rcmkit(&args);
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn fk_and_ik_round_trip() {
    let f = json(&rcmkit(&["--json", "fk", "--", "-25", "12", "7.5"]));
    let pos: Vec<String> = f["position_mm"].as_array().unwrap().iter().map(|v| v.to_string()).collect();
    let mut args = vec!["--json", "ik", "--"];
    args.extend(pos.iter().map(String::as_str));
    let i = json(&rcmkit(&args));
    let j: Vec<f64> = serde_json::from_value(i["joints"].clone()).unwrap();
    assert!((j[0] + 25.0).abs() < 1e-9 && (j[1] - 12.0).abs() < 1e-9 && (j[2] - 7.5).abs() < 1e-9);
    assert!(i["residual_mm"].as_f64().unwrap() < 1e-12);
    assert_eq!(f["provenance"]["seed"], 1);
    assert_eq!(f["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn fk_validates_limits() {
    assert_eq!(code(&rcmkit(&["fk", "--", "10", "0", "5"])), 2);
    assert_eq!(code(&rcmkit(&["fk", "--no-limits", "--", "10", "0", "5"])), 0);
    assert_eq!(code(&rcmkit(&["fk", "1"])), 2);
    assert_eq!(code(&rcmkit(&["ik", "--", "0", "0", "60"])), 2);
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = simulate(tmp.path(), None, "11");
    let b_root = tmp.path().join("again");
    let b = simulate(&b_root, None, "11");
    let c = simulate(tmp.path(), None, "12");
    for name in [
        "ground_truth.json",
        "measurements_calibration.json",
        "measurements_validation.json",
        "robot_true.json",
        "clouds/pose_00_scan_00.txt",
    ] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
        assert_ne!(x, std::fs::read(c.join(name)).unwrap(), "{name}");
    }
    let cal: Value = serde_json::from_slice(&std::fs::read(a.join("measurements_calibration.json")).unwrap()).unwrap();
    let val: Value = serde_json::from_slice(&std::fs::read(a.join("measurements_validation.json")).unwrap()).unwrap();
    assert_eq!(cal.as_array().unwrap().len(), 30);
    assert_eq!(val.as_array().unwrap().len(), 30);
    let truth: Value = serde_json::from_slice(&std::fs::read(a.join("ground_truth.json")).unwrap()).unwrap();
    assert_eq!(truth["provenance"]["seed"], 11);
}

#[test]
fn simulate_rejects_empty_pose_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[simulate]\nvalidation_poses = 0\n");
    let o = rcmkit(&["--config", p(&cfg), "--out", p(&tmp.path().join("x")), "simulate"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&rcmkit(&["simulate"])), 2);
}

#[test]
fn bad_configs_are_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "sed = 4\n");
    assert_eq!(code(&rcmkit(&["--config", p(&cfg), "fk", "0", "0", "1"])), 2);
    let cfg = write_config(tmp.path(), "d.toml", "robot_model = \"absent.json\"\n");
    assert_eq!(code(&rcmkit(&["--config", p(&cfg), "fk", "0", "0", "1"])), 2);
    assert_eq!(code(&rcmkit(&["--config", p(&tmp.path().join("none.toml")), "fk", "0", "0", "1"])), 2);
}

#[test]
fn config_robot_model_is_used() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), None, "3");
    let cfg = write_config(&data, "c.toml", "robot_model = \"robot_true.json\"\n");
    let nominal = json(&rcmkit(&["--json", "fk", "--", "-20", "10", "5"]));
    let perturbed = json(&rcmkit(&["--json", "--config", p(&cfg), "fk", "--", "-20", "10", "5"]));
    assert_ne!(nominal["position_mm"], perturbed["position_mm"]);
    let pos: Vec<String> = perturbed["position_mm"].as_array().unwrap().iter().map(|v| v.to_string()).collect();
    let mut args = vec!["--json", "--config", p(&cfg), "ik", "--"];
    args.extend(pos.iter().map(String::as_str));
    assert!(json(&rcmkit(&args))["residual_mm"].as_f64().unwrap() < 1e-5);
}

#[test]
fn calibrate_noise_free_and_paired() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", NOISE_FREE);
    let data = simulate(tmp.path(), Some(&cfg), "5");
    let o = rcmkit(&[
        "--json",
        "--config",
        p(&cfg),
        "--out",
        p(&data),
        "calibrate",
        p(&data.join("measurements_calibration.json")),
        "--validation",
        p(&data.join("measurements_validation.json")),
    ]);
    let r = json(&o);
    let full = &r["ct_fk"];
    for set in ["calibration_stats", "validation_stats"] {
        assert!(full[set]["position_mm"]["rms"].as_f64().unwrap() < 1e-6, "{set}");
        assert!(full[set]["orientation_deg"]["rms"].as_f64().unwrap() < 1e-6, "{set}");
        for q in ["position_mm", "orientation_deg"] {
            assert!(
                r["ct_only"][set][q]["rms"].as_f64().unwrap() >= full[set][q]["rms"].as_f64().unwrap(),
                "{set} {q}"
            );
        }
    }
    assert!(!r["singular_values"].as_array().unwrap().is_empty());
    assert!(data.join("calibration_report.json").is_file());
    let table = stdout(&rcmkit(&[
        "--config",
        p(&cfg),
        "calibrate",
        p(&data.join("measurements_calibration.json")),
        "--validation",
        p(&data.join("measurements_validation.json")),
    ]));
    assert!(table.contains("CT-only") && table.contains("CT+FK") && table.contains("valid pos (mm)"));
    assert!(table.starts_with("# rcmkit calibrate  config-sha256="));
}

#[test]
fn calibrate_error_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&rcmkit(&["calibrate", p(&tmp.path().join("missing.json"))])), 2);
    let data = simulate(tmp.path(), None, "6");
    let ill = write_config(tmp.path(), "ill.toml", "[calibration]\nobservability_threshold = 0.0\nfree = \"all\"\n");
    let o = rcmkit(&["--config", p(&ill), "calibrate", p(&data.join("measurements_calibration.json"))]);
    assert_eq!(code(&o), 3, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    let bad = write_config(tmp.path(), "bad.json", "[{\"q\": [0, 0, 1, 0, 0], \"p_m\": [0, 0, 1]}]");
    assert_eq!(code(&rcmkit(&["calibrate", p(&bad)])), 2);
}

fn clouds_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir.join("clouds"))
        .unwrap()
        .map(|e| e.unwrap().path().to_str().unwrap().to_string())
        .collect();
    v.sort();
    v
}

#[test]
fn localize_repeated_clouds_of_one_pose() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[simulate]\nclouds_per_pose = 32\n");
    let data = simulate(tmp.path(), Some(&cfg), "8");
    let files = clouds_in(&data);
    assert_eq!(files.len(), 32);
    let mut args = vec!["--json", "localize"];
    args.extend(files.iter().map(String::as_str));
    let truth = data.join("ground_truth.json");
    args.extend(["--truth", p(&truth)]);
    let r = json(&rcmkit(&args));
    assert_eq!(r["estimates"].as_array().unwrap().len(), 32);
    assert!(r["repeatability"]["position_mm"]["rms"].as_f64().unwrap() < 0.02);
    assert!(r["truth_error"]["position_mm"]["rms"].as_f64().unwrap() < 0.02);
    assert!(r["truth_error"]["orientation_deg"]["rms"].as_f64().unwrap() < 0.05);
    let mut args = vec!["localize"];
    args.extend(files.iter().map(String::as_str));
    let table = stdout(&rcmkit(&args));
    assert!(table.contains("repeatability") && table.contains("orientation (deg)"));
}

#[test]
fn localize_noise_free_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", NOISE_FREE);
    let data = simulate(tmp.path(), Some(&cfg), "9");
    let files = clouds_in(&data);
    let truth = data.join("ground_truth.json");
    let mut args = vec!["--json", "localize", "--truth", p(&truth)];
    args.extend(files.iter().map(String::as_str));
    let r = json(&rcmkit(&args));
    assert!(r["truth_error"]["position_mm"]["max"].as_f64().unwrap() < 1e-6);
    assert!(r["truth_error"]["orientation_deg"]["max"].as_f64().unwrap() < 1e-6);
}

#[test]
fn localize_empty_input_is_usage_error() {
    assert_eq!(code(&rcmkit(&["localize"])), 2);
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "c.txt", "1 2 3\n");
    assert_eq!(code(&rcmkit(&["localize", p(&bad)])), 2);
}

#[test]
fn rcm_concurrent_measured_and_estimated() {
    let tmp = tempfile::tempdir().unwrap();
    let lines = write_config(
        tmp.path(),
        "lines.json",
        r#"[{"p":[1,2,4],"z":[0,0,1]},{"p":[2,2,3],"z":[1,0,0]},{"p":[1,5,3],"z":[0,1,0]},{"p":[2,3,4],"z":[1,1,1]}]"#,
    );
    let r = json(&rcmkit(&["--json", "rcm", p(&lines)]));
    assert!(r["measured"]["distance_mm"]["rms"].as_f64().unwrap() < 1e-12);
    let c: Vec<f64> = serde_json::from_value(r["measured"]["p_rcm"].clone()).unwrap();
    assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12 && (c[2] - 3.0).abs() < 1e-12);
    assert!(r["estimated"].is_null());

    let data = simulate(tmp.path(), None, "10");
    let ms = data.join("measurements_calibration.json");
    assert_eq!(code(&rcmkit(&["--out", p(&data), "calibrate", p(&ms)])), 0);
    let report = data.join("calibration_report.json");
    let both = json(&rcmkit(&["--json", "rcm", p(&ms), "--calibration-report", p(&report)]));
    assert!(both["measured"]["distance_mm"]["rms"].as_f64().is_some());
    assert!(both["estimated"]["distance_mm"]["rms"].as_f64().is_some());
    let table = stdout(&rcmkit(&["rcm", p(&ms), "--calibration-report", p(&report)]));
    assert!(table.contains("measured") && table.contains("estimated"));
    assert_eq!(code(&rcmkit(&["rcm", p(&lines), "--calibration-report", p(&report)])), 2);
}

#[test]
fn rcm_parallel_lines_fail_numerically() {
    let tmp = tempfile::tempdir().unwrap();
    let lines = write_config(tmp.path(), "l.json", r#"[{"p":[0,0,0],"z":[0,0,1]},{"p":[1,0,0],"z":[0,0,2]}]"#);
    assert_eq!(code(&rcmkit(&["rcm", p(&lines)])), 3);
    assert_eq!(code(&rcmkit(&["rcm", p(&tmp.path().join("none.json"))])), 2);
}

#[test]
fn workspace_default_grid_and_map() {
    let tmp = tempfile::tempdir().unwrap();
    let r = json(&rcmkit(&["--json", "--out", p(tmp.path()), "workspace"]));
    assert_eq!(r["designs"], 324);
    // The module oracle for the untilted semi-sphere under full coverage.
    assert_eq!(r["best_deg"]["theta13"].as_f64().unwrap().round(), 45.0);
    assert_eq!(r["best_deg"]["theta35"].as_f64().unwrap().round(), 45.0);
    assert!(r["breakdown"]["score"].as_f64().unwrap() > 0.0);
    assert_eq!(r["breakdown"]["k_end"].as_f64().unwrap(), 1.0);
    let map = std::fs::read_to_string(tmp.path().join("workspace_map.csv")).unwrap();
    let rows: Vec<&str> = map.lines().collect();
    assert_eq!(rows.len(), 2 + 18);
    assert!(rows[2].starts_with("5,"));
    assert!(rows.iter().skip(1).all(|l| l.split(',').count() == 19));
}

#[test]
fn workspace_single_cell_and_errors() {
    let r = json(&rcmkit(&["--json", "workspace", "--theta13", "60", "--theta35", "70"]));
    assert_eq!(r["designs"], 1);
    assert_eq!(r["best_deg"]["theta13"].as_f64().unwrap().round(), 60.0);
    assert_eq!(r["best_deg"]["theta35"].as_f64().unwrap().round(), 70.0);
    assert_eq!(code(&rcmkit(&["workspace", "--theta13", "100"])), 2);
    assert_eq!(code(&rcmkit(&["workspace", "--theta13", "5:x:5"])), 2);
    let tilted = json(&rcmkit(&["--json", "workspace", "--tilt", "30"]));
    assert_eq!(tilted["best_deg"]["theta13"].as_f64().unwrap().round(), 60.0);
    assert_ne!(tilted["provenance"]["config_sha256"], r["provenance"]["config_sha256"]);
}
