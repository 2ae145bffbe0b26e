//! Report helpers: provenance, tables and file output.

use crate::{CliError, Context};
use rcmkit::calibration::{ErrorStats, StatSummary};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::Path;

pub fn provenance(ctx: &Context, command: &str) -> Value {
    json!({
        "tool": "rcmkit",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_sha256": ctx.cfg.hash(),
        "seed": ctx.seed(),
    })
}

pub fn header(ctx: &Context, command: &str) -> String {
    format!("# rcmkit {command}  config-sha256={}  seed={}\n", ctx.cfg.hash(), ctx.seed())
}

pub fn summary_json(s: &StatSummary<f64>) -> Value {
    json!({ "rms": s.rms, "max": s.max, "std": s.std })
}

pub fn stats_json(s: &ErrorStats<f64>) -> Value {
    json!({ "position_mm": summary_json(&s.position), "orientation_deg": summary_json(&s.orientation) })
}

pub fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn cells(s: &StatSummary<f64>) -> String {
    format!("{:>10.5} {:>10.5} {:>10.5}", s.rms, s.max, s.std)
}

/// Side-by-side rms/max/std table, one row per (label, stats) pair and column group.
pub fn side_by_side(columns: &[&str], rows: &[(&str, Vec<&StatSummary<f64>>)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<18}", "");
    for c in columns {
        let _ = write!(out, " {:^32}", c);
    }
    out.push('\n');
    let _ = write!(out, "{:<18}", "");
    for _ in columns {
        let _ = write!(out, " {:>10} {:>10} {:>10}", "rms", "max", "std");
    }
    out.push('\n');
    for (label, stats) in rows {
        let _ = write!(out, "{label:<18}");
        for s in stats {
            let _ = write!(out, " {}", cells(s));
        }
        out.push('\n');
    }
    out
}

pub fn vec3(v: &nalgebra::Vector3<f64>) -> String {
    format!("({:.6}, {:.6}, {:.6})", v.x, v.y, v.z)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}
