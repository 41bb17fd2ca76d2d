//! JSON input files: project config, sensitivity ranges, and simulation
//! plans. All three carry `"schema_version": 1`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use kdlca::accounting::AllocationPolicy;
use kdlca::sensitivity::{ParamRange, SweepParameter};
use kdlca::units::{Device, EmissionParams, SystemRole};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Declares one named system and its role in the comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemDecl {
    pub name: String,
    pub role: SystemRole,
    #[serde(default)]
    pub kd_method: Option<String>,
    #[serde(default)]
    pub params_millions: Option<f64>,
}

/// The functional unit the reports answer: a served token volume over a
/// labeled horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalUnit {
    pub volume_tokens: u64,
    #[serde(default = "default_horizon")]
    pub horizon_label: String,
}

fn default_horizon() -> String {
    "one year".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    #[serde(default = "default_resamples")]
    pub n: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_resamples() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n: default_resamples(),
            level: default_level(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub schema_version: u32,
    pub params: EmissionParams,
    pub devices: Vec<Device>,
    /// How teacher training is attributed to KD students. Teacher and No-KD
    /// systems always carry their own training in full.
    #[serde(default)]
    pub allocation: AllocationPolicy,
    pub functional_unit: FunctionalUnit,
    #[serde(default)]
    pub target_quality: Option<f64>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    pub systems: Vec<SystemDecl>,
}

impl ProjectConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_schema_version(self.schema_version, "config")?;
        self.params.validate().map_err(CliError::data)?;
        self.allocation.validate().map_err(CliError::data)?;
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return Err(CliError::Data(format!(
                "bootstrap level must lie in (0, 1), got {}",
                self.bootstrap.level
            )));
        }
        if self.bootstrap.n < 1 {
            return Err(CliError::Data("bootstrap n must be at least 1".to_string()));
        }
        for dev in &self.devices {
            dev.validate().map_err(CliError::data)?;
        }
        if self.systems.is_empty() {
            return Err(CliError::Data("config declares no systems".to_string()));
        }
        let mut names: Vec<&str> = self.systems.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Data(
                "duplicate system names in config".to_string(),
            ));
        }
        for sys in &self.systems {
            if sys.role == SystemRole::Teacher && sys.kd_method.is_some() {
                return Err(CliError::Data(format!(
                    "teacher system '{}' must not declare a kd_method",
                    sys.name
                )));
            }
        }
        Ok(())
    }

    pub fn device_map(&self) -> kdlca::units::DeviceMap {
        self.devices
            .iter()
            .map(|d| (d.id.clone(), d.clone()))
            .collect()
    }

    pub fn system(&self, name: &str) -> Option<&SystemDecl> {
        self.systems.iter().find(|s| s.name == name)
    }
}

/// Sensitivity ranges file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangesFile {
    pub schema_version: u32,
    pub ranges: Vec<ParamRange>,
}

impl RangesFile {
    pub fn validate(&self) -> Result<(), CliError> {
        check_schema_version(self.schema_version, "ranges")?;
        for r in &self.ranges {
            r.validate().map_err(CliError::data)?;
        }
        Ok(())
    }
}

/// Illustrative fallback ranges used when no ranges file is supplied. Not
/// measured values; reports flag them as such.
pub fn builtin_ranges(params: &EmissionParams) -> Vec<ParamRange> {
    let train_aur = params
        .aur_by_phase
        .get(&kdlca::units::Phase::TeacherTrain)
        .copied()
        .unwrap_or(0.8);
    vec![
        ParamRange {
            parameter: SweepParameter::GridIntensity,
            low: 0.02,
            baseline: params.grid_kgco2e_per_kwh,
            high: 0.5,
        },
        ParamRange {
            parameter: SweepParameter::Pue,
            low: 1.1,
            baseline: params.pue,
            high: 1.6,
        },
        ParamRange {
            parameter: SweepParameter::Aur,
            low: 0.2,
            baseline: train_aur,
            high: 1.0,
        },
        ParamRange {
            parameter: SweepParameter::LifetimeHours,
            low: 3.0 * 8_760.0,
            baseline: 5.0 * 8_760.0,
            high: 7.0 * 8_760.0,
        },
        ParamRange {
            parameter: SweepParameter::ManufacturingFootprint,
            low: 100.0,
            baseline: 150.0,
            high: 300.0,
        },
    ]
}

/// KD method simulated by a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanMethod {
    /// Train directly on the references (No-KD or teacher baselines).
    #[serde(rename = "none")]
    None,
    #[serde(rename = "word-kd")]
    WordKd,
    #[serde(rename = "seq-kd")]
    SeqKd,
}

/// Token-selection block for word-level plans.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "strategy")]
pub enum PlanSelection {
    #[serde(rename = "all")]
    All,
    #[serde(rename = "hardest_fraction")]
    HardestFraction { r: f64 },
    #[serde(rename = "teacher_top1")]
    TeacherTop1 { r: f64 },
}

/// Target policy for sequence-level plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSeqPolicy {
    Plain,
    Inter,
    Rep,
}

/// A desk-scale pipeline simulation: which toy scorer fixture to drive,
/// which KD method, and the constants that turn counted token steps into
/// measurement records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KdPlan {
    pub schema_version: u32,
    /// System name stamped on the emitted records.
    pub system: String,
    pub fixture: String,
    pub method: PlanMethod,
    #[serde(default = "default_beam")]
    pub beam: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub length_penalty: f64,
    #[serde(default)]
    pub selection: Option<PlanSelection>,
    #[serde(default)]
    pub seq_policy: Option<PlanSeqPolicy>,
    #[serde(default = "default_rep_threshold")]
    pub rep_threshold: f64,
    pub device_id: String,
    pub teacher_kwh_per_step: f64,
    pub student_kwh_per_step: f64,
    pub throughput_steps_per_hour: f64,
    /// Optional served volume; emits an infer-phase record of that many
    /// student token steps.
    #[serde(default)]
    pub infer_tokens: Option<u64>,
    #[serde(default)]
    pub sources: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub refs: Option<Vec<Vec<usize>>>,
}

fn default_beam() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.5
}

fn default_epochs() -> u32 {
    1
}

fn default_max_len() -> usize {
    8
}

fn default_rep_threshold() -> f64 {
    0.5
}

impl KdPlan {
    pub fn validate(&self) -> Result<(), CliError> {
        check_schema_version(self.schema_version, "plan")?;
        if self.beam < 1 {
            return Err(CliError::Data("plan beam must be at least 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CliError::Data(format!(
                "plan alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.epochs < 1 {
            return Err(CliError::Data("plan epochs must be at least 1".to_string()));
        }
        if self.max_len < 1 {
            return Err(CliError::Data(
                "plan max_len must be at least 1".to_string(),
            ));
        }
        for (name, v) in [
            ("teacher_kwh_per_step", self.teacher_kwh_per_step),
            ("student_kwh_per_step", self.student_kwh_per_step),
            ("throughput_steps_per_hour", self.throughput_steps_per_hour),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(CliError::Data(format!(
                    "plan {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn check_schema_version(found: u32, what: &str) -> Result<(), CliError> {
    if found != SCHEMA_VERSION {
        return Err(CliError::Data(format!(
            "{what} schema_version {found} does not match supported version {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Data(format!("cannot read {what} file '{}': {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Data(format!(
            "{what} file '{}' line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

pub fn load_config(path: &Path) -> Result<ProjectConfig, CliError> {
    let config: ProjectConfig = read_json(path, "config")?;
    config.validate()?;
    Ok(config)
}

pub fn load_ranges(path: &Path) -> Result<RangesFile, CliError> {
    let ranges: RangesFile = read_json(path, "ranges")?;
    ranges.validate()?;
    Ok(ranges)
}

pub fn load_plan(path: &Path) -> Result<KdPlan, CliError> {
    let plan: KdPlan = read_json(path, "plan")?;
    plan.validate()?;
    Ok(plan)
}
