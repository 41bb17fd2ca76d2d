//! Domain types shared by every other module: phases, devices, measurement
//! records, emission parameters, per-phase footprints, system profiles, and
//! token distributions.
//!
//! Unit discipline: every public quantity carries its unit in its name. All
//! emissions are kgCO2e internally; [`kgco2e_to_gco2e`] is the only
//! display-layer conversion. Hours are the canonical time unit; lifetimes
//! quoted in years convert at [`HOURS_PER_YEAR`] (a 5-year device is
//! 43,800 h).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hours in one (non-leap) year.
pub const HOURS_PER_YEAR: f64 = 8_760.0;

/// Tolerance for probability-vector normalization. Survives double-precision
/// summation over vocabularies up to 64k entries.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Relative disagreement between a measured energy counter and the
/// power-times-runtime estimate above which [`energy_discrepancy`] reports
/// a warning.
pub const ENERGY_DISCREPANCY_TOLERANCE: f64 = 0.01;

/// Display-layer conversion; internals stay in kgCO2e.
pub fn kgco2e_to_gco2e(kg: f64) -> f64 {
    kg * 1000.0
}

/// Compute phase of the pipeline. Every measurement maps to exactly one.
///
/// `TeacherTrain` is the train phase: the teacher's own training in a KD
/// pipeline, or the compact model's training for a No-KD baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "train")]
    TeacherTrain,
    #[serde(rename = "distill")]
    Distill,
    #[serde(rename = "infer")]
    Infer,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::TeacherTrain, Phase::Distill, Phase::Infer];

    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::TeacherTrain => "train",
            Phase::Distill => "distill",
            Phase::Infer => "infer",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Phase::TeacherTrain),
            "distill" => Ok(Phase::Distill),
            "infer" => Ok(Phase::Infer),
            other => Err(Error::InvalidParams {
                reason: format!("unknown phase '{other}' (expected train|distill|infer)"),
            }),
        }
    }
}

/// A compute device with its embodied-emission characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: String,
    pub manufacturing_footprint_kgco2e: f64,
    pub lifetime_hours: f64,
}

/// Rejects negatives and non-finite values (NaN or infinities parsed from
/// loose input files would otherwise poison sort comparators downstream).
pub(crate) fn check_nonnegative_finite(field: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::InvalidParams {
            reason: format!("{field} must be finite, got {value}"),
        });
    }
    if value < 0.0 {
        return Err(Error::NegativeValue { field, value });
    }
    Ok(())
}

impl Device {
    pub fn validate(&self) -> Result<()> {
        check_nonnegative_finite(
            "manufacturing_footprint_kgco2e",
            self.manufacturing_footprint_kgco2e,
        )?;
        if !self.lifetime_hours.is_finite() || self.lifetime_hours <= 0.0 {
            return Err(Error::InvalidParams {
                reason: format!(
                    "lifetime_hours must be positive, got {}",
                    self.lifetime_hours
                ),
            });
        }
        Ok(())
    }
}

/// Device table keyed by device id.
pub type DeviceMap = BTreeMap<String, Device>;

/// Look up a device, mapping absence to [`Error::UnknownDevice`].
pub fn lookup_device<'a>(devices: &'a DeviceMap, id: &str) -> Result<&'a Device> {
    devices.get(id).ok_or_else(|| Error::UnknownDevice {
        device_id: id.to_string(),
    })
}

/// One observed (phase, device, energy-or-power, runtime, tokens) sample
/// from a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub phase: Phase,
    pub device_id: String,
    pub energy_kwh: Option<f64>,
    pub avg_power_kw: Option<f64>,
    pub runtime_hours: f64,
    pub tokens_processed: Option<u64>,
    pub batch_size: Option<u32>,
    pub repeat_index: u32,
}

/// Checks every [`MeasurementRecord`] invariant.
pub fn validate_record(rec: &MeasurementRecord) -> Result<()> {
    if !rec.runtime_hours.is_finite() || rec.runtime_hours <= 0.0 {
        return Err(Error::NonPositiveRuntime {
            runtime_hours: rec.runtime_hours,
        });
    }
    if rec.energy_kwh.is_none() && rec.avg_power_kw.is_none() {
        return Err(Error::MissingEnergySource);
    }
    if let Some(e) = rec.energy_kwh {
        check_nonnegative_finite("energy_kwh", e)?;
    }
    if let Some(p) = rec.avg_power_kw {
        check_nonnegative_finite("avg_power_kw", p)?;
    }
    Ok(())
}

/// Energy drawn by the record's workload, in kWh.
///
/// A directly measured counter wins; otherwise the average power draw times
/// wall-clock runtime approximates it.
pub fn effective_energy_kwh(rec: &MeasurementRecord) -> f64 {
    match rec.energy_kwh {
        Some(e) => e,
        None => rec.avg_power_kw.unwrap_or(0.0) * rec.runtime_hours,
    }
}

/// Relative disagreement between the measured energy counter and the
/// power-times-runtime estimate, when both are present and the gap exceeds
/// [`ENERGY_DISCREPANCY_TOLERANCE`]. The measured counter stays
/// authoritative either way; this only feeds warnings.
pub fn energy_discrepancy(rec: &MeasurementRecord) -> Option<f64> {
    let (e, p) = (rec.energy_kwh?, rec.avg_power_kw?);
    let estimate = p * rec.runtime_hours;
    let rel = (e - estimate).abs() / e.max(1e-12);
    (rel > ENERGY_DISCREPANCY_TOLERANCE).then_some(rel)
}

/// The emission assumption set: PUE, grid intensity, per-phase AUR, and an
/// optional lifetime override that supersedes per-device lifetimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionParams {
    pub pue: f64,
    pub grid_kgco2e_per_kwh: f64,
    pub aur_by_phase: BTreeMap<Phase, f64>,
    #[serde(default)]
    pub lifetime_override_hours: Option<f64>,
}

impl EmissionParams {
    pub fn validate(&self) -> Result<()> {
        if !self.pue.is_finite() || self.pue < 1.0 {
            return Err(Error::InvalidParams {
                reason: format!("pue must be >= 1.0, got {}", self.pue),
            });
        }
        check_nonnegative_finite("grid_kgco2e_per_kwh", self.grid_kgco2e_per_kwh)?;
        for (phase, aur) in &self.aur_by_phase {
            if !aur.is_finite() || *aur <= 0.0 || *aur > 1.0 {
                return Err(Error::InvalidParams {
                    reason: format!("AUR for phase '{phase}' must lie in (0, 1], got {aur}"),
                });
            }
        }
        if let Some(h) = self.lifetime_override_hours {
            if !h.is_finite() || h <= 0.0 {
                return Err(Error::InvalidParams {
                    reason: format!("lifetime_override_hours must be positive, got {h}"),
                });
            }
        }
        Ok(())
    }

    /// Active-utilization rate for a phase.
    pub fn aur(&self, phase: Phase) -> Result<f64> {
        self.aur_by_phase
            .get(&phase)
            .copied()
            .ok_or(Error::MissingAur { phase })
    }
}

/// Computed operational + embodied kgCO2e for one (phase, device) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFootprint {
    pub phase: Phase,
    pub device_id: String,
    pub operational_kgco2e: f64,
    pub embodied_kgco2e: f64,
}

impl PhaseFootprint {
    pub fn total_kgco2e(&self) -> f64 {
        self.operational_kgco2e + self.embodied_kgco2e
    }
}

/// Role a system plays in the pipeline comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemRole {
    #[serde(rename = "teacher")]
    Teacher,
    #[serde(rename = "nokd")]
    NoKd,
    #[serde(rename = "kd-student")]
    KdStudent,
}

impl fmt::Display for SystemRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemRole::Teacher => "teacher",
            SystemRole::NoKd => "nokd",
            SystemRole::KdStudent => "kd-student",
        })
    }
}

/// A named pipeline (teacher / No-KD / KD variant) reduced to the three
/// quantities the amortization and frontier analyses need: one-time
/// production footprint, marginal inference cost, and per-document quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemProfile {
    pub name: String,
    pub role: SystemRole,
    #[serde(default)]
    pub kd_method: Option<String>,
    #[serde(default)]
    pub student_params_millions: Option<f64>,
    pub production_footprint_kgco2e: f64,
    pub infer_cost_kgco2e_per_token: f64,
    #[serde(default)]
    pub quality_scores: Vec<f64>,
}

impl SystemProfile {
    pub fn validate(&self) -> Result<()> {
        if self.role == SystemRole::Teacher && self.kd_method.is_some() {
            return Err(Error::InvalidParams {
                reason: format!("teacher profile '{}' must not carry a kd_method", self.name),
            });
        }
        check_nonnegative_finite(
            "production_footprint_kgco2e",
            self.production_footprint_kgco2e,
        )?;
        check_nonnegative_finite(
            "infer_cost_kgco2e_per_token",
            self.infer_cost_kgco2e_per_token,
        )?;
        if let Some(p) = self.student_params_millions {
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::InvalidParams {
                    reason: format!("student_params_millions must be positive, got {p}"),
                });
            }
        }
        Ok(())
    }

    /// Point estimate of quality: the mean of the per-document scores.
    pub fn mean_quality(&self) -> Result<f64> {
        if self.quality_scores.is_empty() {
            return Err(Error::MissingScores {
                system: self.name.clone(),
            });
        }
        Ok(self.quality_scores.iter().sum::<f64>() / self.quality_scores.len() as f64)
    }
}

/// A probability vector over a vocabulary; the unit of all KD-loss math.
///
/// Construction enforces nonnegativity and normalization to within
/// [`PROB_TOLERANCE`], so a value of this type is always a valid
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution {
                reason: "empty vocabulary".to_string(),
            });
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidDistribution {
                    reason: format!("entry {i} is {p}, expected >= 0"),
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::InvalidDistribution {
                reason: format!("probabilities sum to {sum}, expected 1 within {PROB_TOLERANCE}"),
            });
        }
        Ok(Self { probs })
    }

    /// Normalizes arbitrary nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution {
                reason: "empty vocabulary".to_string(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 || !sum.is_finite() || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidDistribution {
                reason: "weights must be nonnegative, finite, and not all zero".to_string(),
            });
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    /// Point mass on `index` over a `vocab_size`-entry vocabulary.
    pub fn one_hot(index: usize, vocab_size: usize) -> Result<Self> {
        if index >= vocab_size {
            return Err(Error::InvalidDistribution {
                reason: format!("one-hot index {index} outside vocabulary of size {vocab_size}"),
            });
        }
        let mut probs = vec![0.0; vocab_size];
        probs[index] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Index of the largest entry; ties break toward the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// True when a single entry holds all the mass.
    pub fn is_one_hot(&self) -> bool {
        self.probs.iter().filter(|p| **p > 0.0).count() == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_record(power_kw: f64, runtime_hours: f64) -> MeasurementRecord {
        MeasurementRecord {
            phase: Phase::TeacherTrain,
            device_id: "gpu0".to_string(),
            energy_kwh: None,
            avg_power_kw: Some(power_kw),
            runtime_hours,
            tokens_processed: None,
            batch_size: None,
            repeat_index: 0,
        }
    }

    #[test]
    fn validate_accepts_power_and_runtime() {
        assert!(validate_record(&power_record(0.25, 10.0)).is_ok());
    }

    #[test]
    fn validate_rejects_missing_energy_source() {
        let mut rec = power_record(0.25, 10.0);
        rec.avg_power_kw = None;
        assert_eq!(validate_record(&rec), Err(Error::MissingEnergySource));
    }

    #[test]
    fn validate_rejects_zero_runtime() {
        let mut rec = power_record(0.25, 0.0);
        rec.energy_kwh = Some(2.5);
        assert_eq!(
            validate_record(&rec),
            Err(Error::NonPositiveRuntime { runtime_hours: 0.0 })
        );
    }

    #[test]
    fn validate_rejects_negative_energy() {
        let mut rec = power_record(0.25, 1.0);
        rec.energy_kwh = Some(-1.0);
        assert!(matches!(
            validate_record(&rec),
            Err(Error::NegativeValue { .. })
        ));
    }

    #[test]
    fn validate_rejects_non_finite_inputs() {
        for bad in [f64::NAN, f64::INFINITY] {
            let mut rec = power_record(0.25, 1.0);
            rec.energy_kwh = Some(bad);
            assert!(validate_record(&rec).is_err(), "energy {bad}");

            let rec = power_record(0.25, bad);
            assert!(validate_record(&rec).is_err(), "runtime {bad}");

            let mut params = EmissionParams {
                pue: 1.24,
                grid_kgco2e_per_kwh: 0.033,
                aur_by_phase: BTreeMap::from([(Phase::TeacherTrain, 0.8)]),
                lifetime_override_hours: None,
            };
            params.grid_kgco2e_per_kwh = bad;
            assert!(params.validate().is_err(), "grid {bad}");
        }
    }

    #[test]
    fn effective_energy_prefers_measured_counter() {
        let mut rec = power_record(0.25, 10.0);
        rec.energy_kwh = Some(3.0);
        assert_eq!(effective_energy_kwh(&rec), 3.0);
    }

    #[test]
    fn effective_energy_falls_back_to_power_times_runtime() {
        // 0.25 kW for 10 h is 2.5 kWh by hand.
        assert_eq!(effective_energy_kwh(&power_record(0.25, 10.0)), 2.5);
    }

    #[test]
    fn effective_energy_zero_power() {
        assert_eq!(effective_energy_kwh(&power_record(0.0, 5.0)), 0.0);
    }

    #[test]
    fn discrepancy_reported_only_when_both_present_and_large() {
        let mut rec = power_record(0.25, 10.0);
        assert_eq!(energy_discrepancy(&rec), None);
        rec.energy_kwh = Some(2.5);
        assert_eq!(energy_discrepancy(&rec), None);
        rec.energy_kwh = Some(5.0); // twice the 2.5 kWh estimate
        let rel = energy_discrepancy(&rec).unwrap();
        assert!((rel - 0.5).abs() < 1e-12);
    }

    #[test]
    fn params_domain_checks() {
        let mut params = EmissionParams {
            pue: 1.24,
            grid_kgco2e_per_kwh: 0.033,
            aur_by_phase: BTreeMap::from([
                (Phase::TeacherTrain, 0.8),
                (Phase::Distill, 0.8),
                (Phase::Infer, 0.2),
            ]),
            lifetime_override_hours: None,
        };
        assert!(params.validate().is_ok());
        params.pue = 0.9;
        assert!(params.validate().is_err());
        params.pue = 1.24;
        params.aur_by_phase.insert(Phase::Infer, 0.0);
        assert!(params.validate().is_err());
    }

    #[test]
    fn aur_missing_phase_is_an_error() {
        let params = EmissionParams {
            pue: 1.0,
            grid_kgco2e_per_kwh: 0.0,
            aur_by_phase: BTreeMap::from([(Phase::TeacherTrain, 0.8)]),
            lifetime_override_hours: None,
        };
        assert_eq!(
            params.aur(Phase::Infer),
            Err(Error::MissingAur {
                phase: Phase::Infer
            })
        );
    }

    #[test]
    fn teacher_profile_must_not_carry_kd_method() {
        let profile = SystemProfile {
            name: "teacher".to_string(),
            role: SystemRole::Teacher,
            kd_method: Some("word-kd".to_string()),
            student_params_millions: None,
            production_footprint_kgco2e: 1.0,
            infer_cost_kgco2e_per_token: 1e-9,
            quality_scores: vec![0.8],
        };
        assert!(profile.validate().is_err());
    }

    #[test]
    fn distribution_normalization_enforced() {
        assert!(TokenDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(TokenDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(TokenDistribution::new(vec![1.5, -0.5]).is_err());
        let d = TokenDistribution::from_weights(&[2.0, 2.0, 4.0]).unwrap();
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() <= PROB_TOLERANCE);
        assert_eq!(d.argmax(), 2);
    }

    #[test]
    fn one_hot_has_unit_mass_at_index() {
        let d = TokenDistribution::one_hot(2, 4).unwrap();
        assert_eq!(d.prob(2), 1.0);
        assert!(d.is_one_hot());
        assert_eq!(d.argmax(), 2);
    }

    #[test]
    fn display_unit_conversion_is_exactly_a_thousandfold() {
        assert_eq!(kgco2e_to_gco2e(2.5), 2500.0);
        assert!((kgco2e_to_gco2e(4.092) - 4092.0).abs() < 1e-9);
    }

    #[test]
    fn phase_round_trips_through_strings() {
        for phase in Phase::ALL {
            assert_eq!(phase.as_str().parse::<Phase>().unwrap(), phase);
        }
        assert!("evaluation".parse::<Phase>().is_err());
    }
}
