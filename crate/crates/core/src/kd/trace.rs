//! Token-step compute counters and their conversion into measurement
//! records for the accounting pipeline.

use serde::{Deserialize, Serialize};

use crate::units::{MeasurementRecord, Phase};

/// Counts of teacher- and student-side token steps accumulated during a run.
/// Counters only grow; concurrent workers keep private traces and merge them
/// at the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeTrace {
    pub teacher_token_steps: u64,
    pub student_token_steps: u64,
    pub phase: Phase,
}

impl ComputeTrace {
    pub fn new(phase: Phase) -> Self {
        Self {
            teacher_token_steps: 0,
            student_token_steps: 0,
            phase,
        }
    }

    pub fn add_teacher_steps(&mut self, steps: u64) {
        self.teacher_token_steps += steps;
    }

    pub fn add_student_steps(&mut self, steps: u64) {
        self.student_token_steps += steps;
    }

    /// Folds a worker's private trace into this one. Both traces must count
    /// the same phase.
    pub fn merge(&mut self, other: &ComputeTrace) {
        assert_eq!(
            self.phase, other.phase,
            "traces from different phases cannot merge"
        );
        self.teacher_token_steps += other.teacher_token_steps;
        self.student_token_steps += other.student_token_steps;
    }
}

/// Energy drawn per token step on each side of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEnergy {
    pub teacher_kwh_per_step: f64,
    pub student_kwh_per_step: f64,
}

/// Converts counted token steps into synthetic measurement records: energy
/// is steps times the per-step constant, runtime is steps over throughput.
/// Sides with zero steps produce no record.
pub fn trace_to_records(
    trace: &ComputeTrace,
    energy: &StepEnergy,
    device_id: &str,
    throughput_steps_per_hour: f64,
) -> Vec<MeasurementRecord> {
    assert!(
        energy.teacher_kwh_per_step > 0.0,
        "per-step energy must be positive"
    );
    assert!(
        energy.student_kwh_per_step > 0.0,
        "per-step energy must be positive"
    );
    assert!(
        throughput_steps_per_hour > 0.0,
        "throughput must be positive"
    );

    let mut records = Vec::new();
    let mut push = |steps: u64, kwh_per_step: f64| {
        if steps > 0 {
            records.push(MeasurementRecord {
                phase: trace.phase,
                device_id: device_id.to_string(),
                energy_kwh: Some(steps as f64 * kwh_per_step),
                avg_power_kw: None,
                runtime_hours: steps as f64 / throughput_steps_per_hour,
                tokens_processed: Some(steps),
                batch_size: None,
                repeat_index: 0,
            });
        }
    };
    push(trace.teacher_token_steps, energy.teacher_kwh_per_step);
    push(trace.student_token_steps, energy.student_kwh_per_step);
    records
}
