//! CSV ingestion and emission.
//!
//! records.csv columns: system,phase,device_id,energy_kwh,avg_power_kw,
//! runtime_hours,tokens,batch_size,repeat. scores.csv columns:
//! system,doc_id,score. Empty cells mean absent optionals.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use kdlca::units::{energy_discrepancy, validate_record, MeasurementRecord, Phase};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordRow {
    system: String,
    phase: String,
    device_id: String,
    energy_kwh: Option<f64>,
    avg_power_kw: Option<f64>,
    runtime_hours: f64,
    tokens: Option<u64>,
    batch_size: Option<u32>,
    repeat: u32,
}

/// A measurement attributed to a named system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRecord {
    pub system: String,
    pub record: MeasurementRecord,
}

fn csv_position(err: &csv::Error) -> String {
    match err.position() {
        Some(pos) => format!("line {}", pos.line()),
        None => "unknown position".to_string(),
    }
}

/// Parses and validates records.csv. Energy/power disagreements beyond the
/// tolerance are returned as warning strings, not errors.
pub fn read_records(path: &Path) -> Result<(Vec<SystemRecord>, Vec<String>), CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        CliError::Data(format!(
            "cannot read records file '{}': {e}",
            path.display()
        ))
    })?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for row in reader.deserialize::<RecordRow>() {
        let row = row.map_err(|e| {
            CliError::Data(format!(
                "records file '{}' {}: {e}",
                path.display(),
                csv_position(&e)
            ))
        })?;
        let phase: Phase = row
            .phase
            .parse()
            .map_err(|e| CliError::Data(format!("records file '{}': {e}", path.display())))?;
        let record = MeasurementRecord {
            phase,
            device_id: row.device_id,
            energy_kwh: row.energy_kwh,
            avg_power_kw: row.avg_power_kw,
            runtime_hours: row.runtime_hours,
            tokens_processed: row.tokens,
            batch_size: row.batch_size,
            repeat_index: row.repeat,
        };
        validate_record(&record).map_err(|e| {
            CliError::Data(format!(
                "records file '{}', system '{}': {e}",
                path.display(),
                row.system
            ))
        })?;
        if let Some(rel) = energy_discrepancy(&record) {
            warnings.push(format!(
                "system '{}': measured energy and power x runtime disagree by {:.1}%; \
                 using the measured counter",
                row.system,
                rel * 100.0
            ));
        }
        records.push(SystemRecord {
            system: row.system,
            record,
        });
    }
    if records.is_empty() {
        return Err(CliError::Data(format!(
            "records file '{}' contains no measurement rows",
            path.display()
        )));
    }
    Ok((records, warnings))
}

/// Renders records.csv as a string. Floats serialize at full round-trip
/// precision.
pub fn write_records_string(records: &[SystemRecord]) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for sr in records {
        let row = RecordRow {
            system: sr.system.clone(),
            phase: sr.record.phase.as_str().to_string(),
            device_id: sr.record.device_id.clone(),
            energy_kwh: sr.record.energy_kwh,
            avg_power_kw: sr.record.avg_power_kw,
            runtime_hours: sr.record.runtime_hours,
            tokens: sr.record.tokens_processed,
            batch_size: sr.record.batch_size,
            repeat: sr.record.repeat_index,
        };
        writer
            .serialize(row)
            .map_err(|e| CliError::Data(format!("cannot render records: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Data(format!("cannot render records: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Data(format!("cannot render records: {e}")))
}

/// Writes records.csv.
pub fn write_records(path: &Path, records: &[SystemRecord]) -> Result<(), CliError> {
    let content = write_records_string(records)?;
    std::fs::write(path, content).map_err(|e| {
        CliError::Data(format!(
            "cannot write records file '{}': {e}",
            path.display()
        ))
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScoreRow {
    system: String,
    doc_id: String,
    score: f64,
}

/// Per-system document scores, aligned by sorted doc id. Every system must
/// cover the same document set.
pub fn read_scores(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        CliError::Data(format!("cannot read scores file '{}': {e}", path.display()))
    })?;
    let mut by_system: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for row in reader.deserialize::<ScoreRow>() {
        let row = row.map_err(|e| {
            CliError::Data(format!(
                "scores file '{}' {}: {e}",
                path.display(),
                csv_position(&e)
            ))
        })?;
        if !row.score.is_finite() {
            return Err(CliError::Data(format!(
                "scores file '{}': score for (system '{}', doc '{}') must be finite, got {}",
                path.display(),
                row.system,
                row.doc_id,
                row.score
            )));
        }
        if by_system
            .entry(row.system.clone())
            .or_default()
            .insert(row.doc_id.clone(), row.score)
            .is_some()
        {
            return Err(CliError::Data(format!(
                "scores file '{}': duplicate (system '{}', doc '{}')",
                path.display(),
                row.system,
                row.doc_id
            )));
        }
    }
    if by_system.is_empty() {
        return Err(CliError::Data(format!(
            "scores file '{}' contains no score rows",
            path.display()
        )));
    }
    let reference_docs: Vec<&String> = by_system.values().next().unwrap().keys().collect();
    for (system, docs) in &by_system {
        let these: Vec<&String> = docs.keys().collect();
        if these != reference_docs {
            return Err(CliError::Data(format!(
                "scores file '{}': system '{system}' covers {} documents but {} were expected \
                 (every system must score the same document set)",
                path.display(),
                these.len(),
                reference_docs.len()
            )));
        }
    }
    Ok(by_system
        .into_iter()
        .map(|(system, docs)| (system, docs.into_values().collect()))
        .collect())
}

/// Writes scores.csv with synthetic doc ids (doc0001, ...) when emitting
/// fixtures.
pub fn write_scores(path: &Path, scores: &BTreeMap<String, Vec<f64>>) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| {
        CliError::Data(format!(
            "cannot write scores file '{}': {e}",
            path.display()
        ))
    })?;
    for (system, values) in scores {
        for (i, score) in values.iter().enumerate() {
            writer
                .serialize(ScoreRow {
                    system: system.clone(),
                    doc_id: format!("doc{:04}", i + 1),
                    score: *score,
                })
                .map_err(|e| {
                    CliError::Data(format!(
                        "cannot write scores file '{}': {e}",
                        path.display()
                    ))
                })?;
        }
    }
    writer.flush().map_err(|e| {
        CliError::Data(format!(
            "cannot write scores file '{}': {e}",
            path.display()
        ))
    })?;
    Ok(())
}
