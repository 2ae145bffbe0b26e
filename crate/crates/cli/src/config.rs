//! Experiment configuration (TOML). Every field has a default, so an empty
//! file, or no file at all, is a valid configuration.

use crate::CliError;
use rcmkit::calibration::{param_name, ParamMask, PARAM_COUNT};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// JSON robot model; the nominal arm when absent. Relative to the config file.
    pub robot_model: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub simulate: SimulateConfig,
    pub calibration: CalibrationConfig,
    pub localization: LocalizationConfig,
    pub workspace: WorkspaceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            robot_model: None,
            seed: 1,
            output_dir: None,
            simulate: SimulateConfig::default(),
            calibration: CalibrationConfig::default(),
            localization: LocalizationConfig::default(),
            workspace: WorkspaceConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    All,
    Terminal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub max_length_dev_mm: f64,
    pub max_angle_dev_deg: f64,
    pub target: Target,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            max_length_dev_mm: 0.5,
            max_angle_dev_deg: 0.5,
            target: Target::All,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub position_std_mm: f64,
    pub axis_std_deg: f64,
    pub cloud_axial_std_mm: f64,
    pub cloud_lateral_std_mm: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            position_std_mm: 0.008,
            axis_std_deg: 0.014,
            cloud_axial_std_mm: 0.0092,
            cloud_lateral_std_mm: 0.025,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtConfig {
    pub p_mb: [f64; 3],
    pub r_mb_deg: [f64; 3],
}

impl Default for CtConfig {
    fn default() -> Self {
        Self {
            p_mb: [12.0, -4.0, 30.0],
            r_mb_deg: [10.0, -5.0, 3.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tip {
    Flat,
    Rounded,
    Blob,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub calibration_poses: usize,
    pub validation_poses: usize,
    /// Poses rendered as point clouds (repeatability strategy).
    pub cloud_poses: usize,
    pub clouds_per_pose: usize,
    pub tip: Tip,
    pub blob_radius_mm: f64,
    pub perturbation: PerturbationConfig,
    pub noise: NoiseConfig,
    pub ct: CtConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            calibration_poses: 30,
            validation_poses: 30,
            cloud_poses: 1,
            clouds_per_pose: 4,
            tip: Tip::Flat,
            blob_radius_mm: 0.9,
            perturbation: PerturbationConfig::default(),
            noise: NoiseConfig::default(),
            ct: CtConfig::default(),
        }
    }
}

/// `"default"`, `"all"`, `"ct"` or an explicit list of parameter names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FreeSet {
    Preset(String),
    Names(Vec<String>),
}

impl FreeSet {
    pub fn mask(&self) -> Result<ParamMask, CliError> {
        match self {
            FreeSet::Preset(p) => match p.as_str() {
                "default" => Ok(ParamMask::default_free()),
                "all" => Ok(ParamMask::all()),
                "ct" => Ok(ParamMask::ct_only()),
                other => Err(CliError::Input(format!("unknown free-set preset {other:?}"))),
            },
            FreeSet::Names(names) => {
                let mut idx = Vec::with_capacity(names.len());
                for n in names {
                    let i = (0..PARAM_COUNT)
                        .find(|&i| param_name(i) == n)
                        .ok_or_else(|| CliError::Input(format!("unknown calibration parameter {n:?}")))?;
                    idx.push(i);
                }
                Ok(ParamMask::from_indices(idx))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub w: f64,
    pub observability_threshold: f64,
    pub free: FreeSet,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            w: rcmkit::calibration::DEFAULT_WEIGHT,
            observability_threshold: 1e-6,
            free: FreeSet::Preset("default".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    /// Intensity threshold; Otsu when absent.
    pub threshold: Option<f64>,
    /// Tip-feature discard distance (mm); automatic when absent.
    pub discard_threshold_mm: Option<f64>,
    pub window: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            threshold: None,
            discard_threshold_mm: None,
            window: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceConfig {
    /// Angle ranges in degrees: `"v"` or `"start:stop:step"`.
    pub theta12_deg: String,
    pub theta13_deg: String,
    pub theta35_deg: String,
    /// Tilt of the target semi-sphere from the leg base axis (deg).
    pub tilt_deg: f64,
    pub required_coverage: f64,
    pub min_arc_sum_deg: f64,
    pub r_in: f64,
    pub r_out: f64,
    pub k_q: [f64; 2],
    pub stiffness_scale: f64,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self {
            theta12_deg: "0".into(),
            theta13_deg: "5:90:5".into(),
            theta35_deg: "5:90:5".into(),
            tilt_deg: 0.0,
            required_coverage: 1.0,
            min_arc_sum_deg: 10.0,
            r_in: 0.0,
            r_out: 1.0,
            k_q: [1.0, 1.0],
            stiffness_scale: 1.0,
        }
    }
}

/// Parses `"v"` or `"start:stop:step"` (inclusive stop) into values.
pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Input(format!("bad range {s:?}; expected \"v\" or \"start:stop:step\""));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [v] => Ok(vec![*v]),
        [a, b, step] if *step > 0.0 && b >= a => {
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| a + step * k as f64).collect())
        }
        _ => Err(bad()),
    }
}

impl ExperimentConfig {
    /// Reads `path`, resolving relative file references against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(m) = &cfg.robot_model {
            if m.is_relative() {
                cfg.robot_model = Some(base.join(m));
            }
        }
        if let Some(o) = &cfg.output_dir {
            if o.is_relative() {
                cfg.output_dir = Some(base.join(o));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(m) = &self.robot_model {
            if !m.is_file() {
                return Err(CliError::Input(format!("robot model {} does not exist", m.display())));
            }
        }
        self.calibration.free.mask()?;
        for r in [&self.workspace.theta12_deg, &self.workspace.theta13_deg, &self.workspace.theta35_deg] {
            parse_range(r)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialization of the resolved config.
    ///
    /// The output directory is left out: it names where results go, not what they are.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let text = toml::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let back: ExperimentConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("sed = 3").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[simulate]\nposes = 3").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn ranges_parse() {
        assert_eq!(parse_range("60").unwrap(), vec![60.0]);
        assert_eq!(parse_range("5:20:5").unwrap(), vec![5.0, 10.0, 15.0, 20.0]);
        assert_eq!(parse_range("5:90:5").unwrap().len(), 18);
        assert!(parse_range("5:1:1").is_err());
        assert!(parse_range("a").is_err());
        assert!(parse_range("1:2").is_err());
    }

    #[test]
    fn free_sets_resolve() {
        assert_eq!(FreeSet::Preset("all".into()).mask().unwrap(), ParamMask::all());
        let m = FreeSet::Names(vec!["link4.a".into()]).mask().unwrap();
        assert_eq!(m.count(), 1);
        assert!(FreeSet::Names(vec!["link9.a".into()]).mask().is_err());
        assert!(FreeSet::Preset("most".into()).mask().is_err());
    }
}
