//! Shared pipeline assembly: grouping measurement rows into per-system
//! ledgers and reducing those to system profiles with production footprints
//! and per-token inference costs.

use std::collections::BTreeMap;

use kdlca::accounting::{aggregate_ledger, production_footprint, AllocationPolicy, SystemLedger};
use kdlca::units::{MeasurementRecord, Phase, SystemProfile, SystemRole};

use crate::config::ProjectConfig;
use crate::records::SystemRecord;
use crate::CliError;

/// Ledgers for every declared system, with the teacher singled out.
#[derive(Debug)]
pub struct Pipeline {
    /// Ledgers in config declaration order.
    pub ledgers: Vec<SystemLedger>,
    pub teacher_name: Option<String>,
}

impl Pipeline {
    pub fn ledger(&self, name: &str) -> Option<&SystemLedger> {
        self.ledgers.iter().find(|l| l.system_name == name)
    }

    pub fn teacher_ledger(&self) -> Option<&SystemLedger> {
        self.teacher_name.as_deref().and_then(|n| self.ledger(n))
    }
}

/// Groups records by system and aggregates each group under the role's
/// allocation policy: the configured policy for KD students, full
/// allocation for systems that train themselves.
pub fn build_pipeline(
    records: &[SystemRecord],
    config: &ProjectConfig,
) -> Result<Pipeline, CliError> {
    let mut grouped: BTreeMap<&str, Vec<MeasurementRecord>> = BTreeMap::new();
    for sr in records {
        if config.system(&sr.system).is_none() {
            return Err(CliError::Data(format!(
                "records reference system '{}' which the config does not declare",
                sr.system
            )));
        }
        grouped
            .entry(sr.system.as_str())
            .or_default()
            .push(sr.record.clone());
    }

    let devices = config.device_map();
    let mut ledgers = Vec::new();
    let mut teacher_name = None;
    for decl in &config.systems {
        let recs = grouped.get(decl.name.as_str()).ok_or_else(|| {
            CliError::Data(format!(
                "config declares system '{}' but the records contain no rows for it",
                decl.name
            ))
        })?;
        let allocation = match decl.role {
            SystemRole::KdStudent => config.allocation,
            _ => AllocationPolicy::FullAllocation,
        };
        let ledger = aggregate_ledger(&decl.name, recs, &devices, &config.params, allocation)
            .map_err(CliError::data)?;
        if decl.role == SystemRole::Teacher {
            if teacher_name.is_some() {
                return Err(CliError::Data(
                    "config declares more than one teacher system".to_string(),
                ));
            }
            teacher_name = Some(decl.name.clone());
        }
        ledgers.push(ledger);
    }
    Ok(Pipeline {
        ledgers,
        teacher_name,
    })
}

/// Per-token inference cost from the ledger's infer-phase rows: total infer
/// footprint over total infer tokens. Zero when the system has no infer
/// rows.
pub fn infer_cost_per_token(ledger: &SystemLedger) -> Result<f64, CliError> {
    let infer_total = ledger.phase_total_kgco2e(Phase::Infer);
    if !ledger.has_phase(Phase::Infer) {
        return Ok(0.0);
    }
    let tokens: u64 = ledger
        .records()
        .iter()
        .filter(|r| r.phase == Phase::Infer)
        .map(|r| r.tokens_processed.unwrap_or(0))
        .sum();
    if tokens == 0 {
        return Err(CliError::Data(format!(
            "system '{}' has infer rows without token counts; a per-token cost needs them",
            ledger.system_name
        )));
    }
    Ok(infer_total / tokens as f64)
}

/// Reduces the pipeline to profiles, attaching quality scores when given.
pub fn build_profiles(
    pipeline: &Pipeline,
    config: &ProjectConfig,
    scores: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<Vec<SystemProfile>, CliError> {
    let teacher = pipeline.teacher_ledger();
    let mut profiles = Vec::new();
    for ledger in &pipeline.ledgers {
        let decl = config
            .system(&ledger.system_name)
            .expect("pipeline built from config");
        let teacher_for = match decl.role {
            SystemRole::KdStudent => teacher,
            _ => None,
        };
        let production = production_footprint(ledger, teacher_for).map_err(CliError::data)?;
        let quality_scores = match scores {
            Some(map) => map.get(&ledger.system_name).cloned().unwrap_or_default(),
            None => Vec::new(),
        };
        let profile = SystemProfile {
            name: ledger.system_name.clone(),
            role: decl.role,
            kd_method: decl.kd_method.clone(),
            student_params_millions: decl.params_millions,
            production_footprint_kgco2e: production,
            infer_cost_kgco2e_per_token: infer_cost_per_token(ledger)?,
            quality_scores,
        };
        profile.validate().map_err(CliError::data)?;
        profiles.push(profile);
    }
    Ok(profiles)
}

/// Footprint decomposition of one system at a served volume.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Decomposition {
    pub system: String,
    pub role: SystemRole,
    /// The system's own train-phase footprint (teacher and No-KD training).
    pub train_kgco2e: f64,
    /// Teacher training attributed through the allocation policy (KD
    /// students only).
    pub teacher_share_kgco2e: f64,
    pub distill_kgco2e: f64,
    pub production_kgco2e: f64,
    pub infer_cost_kgco2e_per_token: f64,
    pub infer_at_volume_kgco2e: f64,
    pub total_at_volume_kgco2e: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_quality: Option<f64>,
}

/// Splits each system's production footprint into own-training, allocated
/// teacher share, and distillation overhead, then adds inference at the
/// volume.
pub fn decompose(
    pipeline: &Pipeline,
    config: &ProjectConfig,
    volume_tokens: u64,
    scores: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<Vec<Decomposition>, CliError> {
    let teacher = pipeline.teacher_ledger();
    let mut rows = Vec::new();
    for ledger in &pipeline.ledgers {
        let decl = config
            .system(&ledger.system_name)
            .expect("pipeline built from config");
        let own_train = ledger.phase_total_kgco2e(Phase::TeacherTrain);
        let distill = ledger.phase_total_kgco2e(Phase::Distill);
        let share = ledger.allocation.teacher_share();
        let teacher_share = match decl.role {
            SystemRole::KdStudent if !ledger.has_phase(Phase::TeacherTrain) && share > 0.0 => {
                let t = teacher.ok_or_else(|| {
                    CliError::Data(format!(
                        "KD student '{}' needs a teacher system for its allocated share",
                        ledger.system_name
                    ))
                })?;
                share * t.phase_total_kgco2e(Phase::TeacherTrain)
            }
            _ => 0.0,
        };
        // Mirrors production_footprint: the allocation share scales the
        // train-phase total whichever ledger supplied it. Non-students are
        // always on full allocation.
        let production = own_train * share + teacher_share + distill;
        let infer_cost = infer_cost_per_token(ledger)?;
        let infer_at_volume = infer_cost * volume_tokens as f64;
        let mean_quality = scores
            .and_then(|map| map.get(&ledger.system_name))
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64);
        rows.push(Decomposition {
            system: ledger.system_name.clone(),
            role: decl.role,
            train_kgco2e: own_train,
            teacher_share_kgco2e: teacher_share,
            distill_kgco2e: distill,
            production_kgco2e: production,
            infer_cost_kgco2e_per_token: infer_cost,
            infer_at_volume_kgco2e: infer_at_volume,
            total_at_volume_kgco2e: production + infer_at_volume,
            mean_quality,
        });
    }
    Ok(rows)
}
