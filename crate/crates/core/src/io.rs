//! File formats: robot model and measurement sets as JSON, point clouds as
//! line-oriented text (or JSON), tool-line lists as JSON.
//!
//! Angles are degrees in files and radians in memory.

use crate::calibration::{CtParams, Measurement};
use crate::error::{Error, Result};
use crate::kinematics::{DhLink, JointKind, JointLimits, JointRange, JointState, RobotModel, SixParamLink};
use crate::localization::{CloudMeta, OctPointCloud, TipEstimate};
use crate::rcm::ToolLine;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKindRecord {
    Revolute,
    Prismatic,
    Fixed,
}

impl From<JointKind> for JointKindRecord {
    fn from(k: JointKind) -> Self {
        match k {
            JointKind::Revolute => Self::Revolute,
            JointKind::Prismatic => Self::Prismatic,
            JointKind::Fixed => Self::Fixed,
        }
    }
}

impl From<JointKindRecord> for JointKind {
    fn from(k: JointKindRecord) -> Self {
        match k {
            JointKindRecord::Revolute => Self::Revolute,
            JointKindRecord::Prismatic => Self::Prismatic,
            JointKindRecord::Fixed => Self::Fixed,
        }
    }
}

/// One link; lengths in mm, angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LinkRecord {
    Dh {
        joint: JointKindRecord,
        d: f64,
        theta: f64,
        a: f64,
        alpha: f64,
    },
    Six {
        d: f64,
        theta: f64,
        a: f64,
        b: f64,
        beta: f64,
        alpha: f64,
    },
}

/// `[min, max]` per joint; degrees for revolute joints, mm for prismatic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitsRecord {
    pub theta1: [f64; 2],
    pub theta2: [f64; 2],
    pub d3: [f64; 2],
    pub theta4: [f64; 2],
    pub d5: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotModelRecord {
    pub links: Vec<LinkRecord>,
    pub limits: LimitsRecord,
}

const JOINT_IS_ANGLE: [bool; 5] = [true, true, false, true, false];

fn to_file_unit(v: f64, angle: bool) -> f64 {
    if angle {
        v.to_degrees()
    } else {
        v
    }
}

fn from_file_unit(v: f64, angle: bool) -> f64 {
    if angle {
        v.to_radians()
    } else {
        v
    }
}

impl From<&RobotModel<f64>> for RobotModelRecord {
    fn from(m: &RobotModel<f64>) -> Self {
        let mut links: Vec<LinkRecord> = m
            .links
            .iter()
            .map(|l| LinkRecord::Dh {
                joint: l.joint.into(),
                d: l.d,
                theta: l.theta_offset.to_degrees(),
                a: l.a,
                alpha: l.alpha.to_degrees(),
            })
            .collect();
        let t = &m.tool;
        links.push(LinkRecord::Six {
            d: t.d,
            theta: t.theta.to_degrees(),
            a: t.a,
            b: t.b,
            beta: t.beta.to_degrees(),
            alpha: t.alpha.to_degrees(),
        });
        let r = m.limits.ranges();
        let lim = |i: usize| [to_file_unit(r[i].min, JOINT_IS_ANGLE[i]), to_file_unit(r[i].max, JOINT_IS_ANGLE[i])];
        Self {
            links,
            limits: LimitsRecord {
                theta1: lim(0),
                theta2: lim(1),
                d3: lim(2),
                theta4: lim(3),
                d5: lim(4),
            },
        }
    }
}

impl TryFrom<&RobotModelRecord> for RobotModel<f64> {
    type Error = Error;

    fn try_from(r: &RobotModelRecord) -> Result<Self> {
        if r.links.len() != 4 {
            return Err(Error::Parse(format!("robot model needs 4 links, got {}", r.links.len())));
        }
        let mut dh = Vec::with_capacity(3);
        for (i, l) in r.links[..3].iter().enumerate() {
            match l {
                LinkRecord::Dh { joint, d, theta, a, alpha } => {
                    dh.push(DhLink::new(*d, theta.to_radians(), *a, alpha.to_radians(), (*joint).into()))
                }
                LinkRecord::Six { .. } => {
                    return Err(Error::Parse(format!("link {} must be of type \"dh\"", i + 1)));
                }
            }
        }
        let tool = match &r.links[3] {
            LinkRecord::Six { d, theta, a, b, beta, alpha } => SixParamLink {
                d: *d,
                theta: theta.to_radians(),
                a: *a,
                b: *b,
                beta: beta.to_radians(),
                alpha: alpha.to_radians(),
            },
            LinkRecord::Dh { .. } => return Err(Error::Parse("link 4 must be of type \"six\"".into())),
        };
        let l = &r.limits;
        let mut ranges = Vec::with_capacity(5);
        for (i, pair) in [l.theta1, l.theta2, l.d3, l.theta4, l.d5].iter().enumerate() {
            let a = JOINT_IS_ANGLE[i];
            ranges.push(JointRange::new(from_file_unit(pair[0], a), from_file_unit(pair[1], a))?);
        }
        let model = RobotModel {
            links: [dh[0], dh[1], dh[2]],
            tool,
            limits: JointLimits::from_ranges([ranges[0], ranges[1], ranges[2], ranges[3], ranges[4]]),
        };
        if !model.is_finite() {
            return Err(Error::Parse("robot model has non-finite parameters".into()));
        }
        Ok(model)
    }
}

pub fn robot_model_to_json(m: &RobotModel<f64>) -> String {
    serde_json::to_string_pretty(&RobotModelRecord::from(m)).expect("robot model serializes")
}

pub fn robot_model_from_json(s: &str) -> Result<RobotModel<f64>> {
    let r: RobotModelRecord = serde_json::from_str(s)?;
    RobotModel::try_from(&r)
}

/// Joint values in file units: `[θ1°, θ2°, d3 mm, θ4°, d5 mm]`.
pub fn joints_to_file(q: &JointState<f64>) -> [f64; 5] {
    let v = q.to_vector();
    std::array::from_fn(|i| to_file_unit(v[i], JOINT_IS_ANGLE[i]))
}

pub fn joints_from_file(q: &[f64; 5]) -> JointState<f64> {
    JointState::new(q[0].to_radians(), q[1].to_radians(), q[2], q[3].to_radians(), q[4])
}

/// One measurement; `q` in file units (see [`joints_to_file`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub q: [f64; 5],
    pub p_m: [f64; 3],
    pub z_m: [f64; 3],
}

impl From<&Measurement<f64>> for MeasurementRecord {
    fn from(m: &Measurement<f64>) -> Self {
        Self {
            q: joints_to_file(&m.q),
            p_m: m.p_m.into(),
            z_m: m.z_m.into(),
        }
    }
}

impl TryFrom<&MeasurementRecord> for Measurement<f64> {
    type Error = Error;

    fn try_from(r: &MeasurementRecord) -> Result<Self> {
        let m = Measurement::new(joints_from_file(&r.q), Vector3::from(r.p_m), Vector3::from(r.z_m));
        m.validate()?;
        Ok(m)
    }
}

pub fn measurements_to_json(ms: &[Measurement<f64>]) -> String {
    let recs: Vec<MeasurementRecord> = ms.iter().map(MeasurementRecord::from).collect();
    serde_json::to_string_pretty(&recs).expect("measurements serialize")
}

pub fn measurements_from_json(s: &str) -> Result<Vec<Measurement<f64>>> {
    let recs: Vec<MeasurementRecord> = serde_json::from_str(s)?;
    recs.iter().map(Measurement::try_from).collect()
}

/// Registration with translation in mm and ZYX angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtRecord {
    pub p_mb: [f64; 3],
    pub r_mb: [f64; 3],
}

impl From<&CtParams<f64>> for CtRecord {
    fn from(c: &CtParams<f64>) -> Self {
        Self {
            p_mb: c.p_mb.into(),
            r_mb: c.r_mb.map(f64::to_degrees).into(),
        }
    }
}

impl From<&CtRecord> for CtParams<f64> {
    fn from(r: &CtRecord) -> Self {
        CtParams::new(Vector3::from(r.p_mb), Vector3::from(r.r_mb).map(f64::to_radians))
    }
}

/// A tool centerline or tip estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub p: [f64; 3],
    pub z: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_offset: Option<f64>,
}

impl From<&ToolLine<f64>> for LineRecord {
    fn from(l: &ToolLine<f64>) -> Self {
        Self {
            p: l.p.into(),
            z: l.z.into(),
            d_offset: None,
        }
    }
}

impl From<&TipEstimate<f64>> for LineRecord {
    fn from(t: &TipEstimate<f64>) -> Self {
        Self {
            p: t.p.into(),
            z: t.z.into(),
            d_offset: Some(t.d_offset),
        }
    }
}

impl TryFrom<&LineRecord> for ToolLine<f64> {
    type Error = Error;

    fn try_from(r: &LineRecord) -> Result<Self> {
        ToolLine::new(Vector3::from(r.p), Vector3::from(r.z))
    }
}

/// Tool lines from a JSON file holding either measurements or line records.
pub fn lines_from_json(s: &str) -> Result<Vec<ToolLine<f64>>> {
    if let Ok(ms) = serde_json::from_str::<Vec<MeasurementRecord>>(s) {
        return ms.iter().map(|r| Measurement::try_from(r).map(|m| m.line())).collect();
    }
    let recs: Vec<LineRecord> = serde_json::from_str(s)?;
    recs.iter().map(ToolLine::try_from).collect()
}

/// Structured form of a point cloud; each point is `[x, y, z, intensity]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudRecord {
    pub axial_res: f64,
    pub lateral_res: f64,
    pub bscan_dir: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axial_dir: Option<[f64; 3]>,
    pub points: Vec<[f64; 4]>,
}

fn cloud_from_parts(meta: CloudMeta<f64>, rows: &[[f64; 4]]) -> Result<OctPointCloud<f64>> {
    let points = rows.iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect();
    let intensity = rows.iter().map(|r| r[3]).collect();
    OctPointCloud::new(points, intensity, meta)
}

/// Line-oriented text: `# key value…` headers then `x y z intensity` rows.
pub fn write_cloud_text(cloud: &OctPointCloud<f64>) -> String {
    let m = &cloud.meta;
    let mut out = String::new();
    let _ = writeln!(out, "# axial_res {}", m.axial_res);
    let _ = writeln!(out, "# lateral_res {}", m.lateral_res);
    let _ = writeln!(out, "# bscan_dir {} {} {}", m.bscan_dir.x, m.bscan_dir.y, m.bscan_dir.z);
    if let Some(a) = m.axial_dir {
        let _ = writeln!(out, "# axial_dir {} {} {}", a.x, a.y, a.z);
    }
    for (p, i) in cloud.points.iter().zip(&cloud.intensity) {
        let _ = writeln!(out, "{} {} {} {}", p.x, p.y, p.z, i);
    }
    out
}

fn parse_floats(line_no: usize, fields: &[&str], n: usize) -> Result<Vec<f64>> {
    if fields.len() != n {
        return Err(Error::Parse(format!("line {line_no}: expected {n} numbers, got {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("line {line_no}: {e}"))))
        .collect()
}

/// Parses the text format or the structured (JSON) form.
///
/// Missing headers fall back to [`CloudMeta::default`]; unknown `#` lines are comments.
pub fn parse_cloud(s: &str) -> Result<OctPointCloud<f64>> {
    if s.trim_start().starts_with('{') {
        let r: CloudRecord = serde_json::from_str(s)?;
        let meta = CloudMeta::new(
            r.axial_res,
            r.lateral_res,
            Vector3::from(r.bscan_dir),
            r.axial_dir.map(Vector3::from),
        )?;
        return cloud_from_parts(meta, &r.points);
    }
    let mut meta = CloudMeta::default();
    let mut rows = Vec::new();
    for (k, raw) in s.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let fields: Vec<&str> = h.split_whitespace().collect();
            match fields.first().copied() {
                Some("axial_res") => meta.axial_res = parse_floats(line_no, &fields[1..], 1)?[0],
                Some("lateral_res") => meta.lateral_res = parse_floats(line_no, &fields[1..], 1)?[0],
                Some("bscan_dir") => meta.bscan_dir = Vector3::from_vec(parse_floats(line_no, &fields[1..], 3)?),
                Some("axial_dir") => meta.axial_dir = Some(Vector3::from_vec(parse_floats(line_no, &fields[1..], 3)?)),
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let v = parse_floats(line_no, &fields, 4)?;
        rows.push([v[0], v[1], v[2], v[3]]);
    }
    let meta = CloudMeta::new(meta.axial_res, meta.lateral_res, meta.bscan_dir, meta.axial_dir)?;
    cloud_from_parts(meta, &rows)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}
