//! Per-(phase, device) and per-system carbon footprints.
//!
//! The emission model splits each measurement into an operational term
//! (electricity drawn, scaled by data-center PUE and converted with the grid
//! emission factor) and an embodied term (the device's manufacturing
//! footprint amortized over its lifetime, proportional to usage time and
//! adjusted by the phase's active-utilization rate):
//!
//! ```text
//! operational = PUE * E_kwh * EGM
//! embodied    = F_prod * t_hours / (t_life * AUR)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{
    effective_energy_kwh, lookup_device, validate_record, Device, DeviceMap, EmissionParams,
    MeasurementRecord, Phase, PhaseFootprint, SystemProfile,
};

/// How the teacher's training footprint is attributed to a derived system.
///
/// The share applies to the train-phase total only; distillation overhead is
/// never shared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AllocationPolicy {
    /// The full teacher training cost is charged to the student.
    #[default]
    #[serde(rename = "full")]
    FullAllocation,
    /// Teacher training is amortized across `k` students; each carries 1/k.
    #[serde(rename = "shared")]
    SharedAcrossK { k: u32 },
    /// Teacher training is treated as sunk and excluded.
    #[serde(rename = "sunk")]
    SunkTeacher,
}

impl AllocationPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            AllocationPolicy::SharedAcrossK { k } if *k < 1 => Err(Error::InvalidParams {
                reason: "shared allocation needs k >= 1".to_string(),
            }),
            _ => Ok(()),
        }
    }

    /// Fraction of the train-phase total charged to the system.
    pub fn teacher_share(&self) -> f64 {
        match self {
            AllocationPolicy::FullAllocation => 1.0,
            AllocationPolicy::SharedAcrossK { k } => 1.0 / f64::from(*k),
            AllocationPolicy::SunkTeacher => 0.0,
        }
    }
}

/// Aggregated footprints for one named system, with the raw records retained
/// so sensitivity sweeps can recompute under perturbed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemLedger {
    pub system_name: String,
    /// One aggregate entry per (phase, device_id), sorted by that key.
    pub per_phase: Vec<PhaseFootprint>,
    pub allocation: AllocationPolicy,
    records: Vec<MeasurementRecord>,
}

impl SystemLedger {
    pub fn records(&self) -> &[MeasurementRecord] {
        &self.records
    }

    // The + 0.0 normalizes the -0.0 that empty float sums produce.

    pub fn total_kgco2e(&self) -> f64 {
        self.per_phase
            .iter()
            .map(PhaseFootprint::total_kgco2e)
            .sum::<f64>()
            + 0.0
    }

    pub fn phase_total_kgco2e(&self, phase: Phase) -> f64 {
        self.per_phase
            .iter()
            .filter(|fp| fp.phase == phase)
            .map(PhaseFootprint::total_kgco2e)
            .sum::<f64>()
            + 0.0
    }

    pub fn phase_operational_kgco2e(&self, phase: Phase) -> f64 {
        self.per_phase
            .iter()
            .filter(|fp| fp.phase == phase)
            .map(|fp| fp.operational_kgco2e)
            .sum::<f64>()
            + 0.0
    }

    pub fn phase_embodied_kgco2e(&self, phase: Phase) -> f64 {
        self.per_phase
            .iter()
            .filter(|fp| fp.phase == phase)
            .map(|fp| fp.embodied_kgco2e)
            .sum::<f64>()
            + 0.0
    }

    pub fn has_phase(&self, phase: Phase) -> bool {
        self.per_phase.iter().any(|fp| fp.phase == phase)
    }
}

/// Operational + embodied kgCO2e of one record on one device.
pub fn phase_footprint(
    rec: &MeasurementRecord,
    dev: &Device,
    params: &EmissionParams,
) -> Result<PhaseFootprint> {
    validate_record(rec)?;
    dev.validate()?;
    params.validate()?;
    let aur = params.aur(rec.phase)?;
    let lifetime_hours = params.lifetime_override_hours.unwrap_or(dev.lifetime_hours);
    let operational_kgco2e = params.pue * effective_energy_kwh(rec) * params.grid_kgco2e_per_kwh;
    let embodied_kgco2e =
        dev.manufacturing_footprint_kgco2e * rec.runtime_hours / (lifetime_hours * aur);
    Ok(PhaseFootprint {
        phase: rec.phase,
        device_id: dev.id.clone(),
        operational_kgco2e,
        embodied_kgco2e,
    })
}

/// Sums record-level footprints into one entry per (phase, device).
pub fn aggregate_ledger(
    system_name: &str,
    records: &[MeasurementRecord],
    devices: &DeviceMap,
    params: &EmissionParams,
    allocation: AllocationPolicy,
) -> Result<SystemLedger> {
    allocation.validate()?;
    let mut by_key: std::collections::BTreeMap<(Phase, String), PhaseFootprint> =
        std::collections::BTreeMap::new();
    for rec in records {
        let dev = lookup_device(devices, &rec.device_id)?;
        let fp = phase_footprint(rec, dev, params)?;
        by_key
            .entry((fp.phase, fp.device_id.clone()))
            .and_modify(|acc| {
                acc.operational_kgco2e += fp.operational_kgco2e;
                acc.embodied_kgco2e += fp.embodied_kgco2e;
            })
            .or_insert(fp);
    }
    Ok(SystemLedger {
        system_name: system_name.to_string(),
        per_phase: by_key.into_values().collect(),
        allocation,
        records: records.to_vec(),
    })
}

/// One-time footprint of producing the system: the allocation share of the
/// train-phase total plus the full distillation overhead, excluding
/// inference.
///
/// The train-phase total comes from the ledger's own train rows when present
/// (teacher and No-KD systems train themselves), otherwise from
/// `teacher_ledger`. A ledger with distillation overhead but no train rows
/// needs a teacher ledger unless the policy charges no teacher share.
pub fn production_footprint(
    ledger: &SystemLedger,
    teacher_ledger: Option<&SystemLedger>,
) -> Result<f64> {
    let distill = ledger.phase_total_kgco2e(Phase::Distill);
    let share = ledger.allocation.teacher_share();
    let train_total = if ledger.has_phase(Phase::TeacherTrain) {
        ledger.phase_total_kgco2e(Phase::TeacherTrain)
    } else if let Some(teacher) = teacher_ledger {
        teacher.phase_total_kgco2e(Phase::TeacherTrain)
    } else if ledger.has_phase(Phase::Distill) && share > 0.0 {
        return Err(Error::MissingTeacherLedger {
            system: ledger.system_name.clone(),
        });
    } else {
        0.0
    };
    Ok(share * train_total + distill)
}

/// Total life-cycle emissions at a served token volume:
/// `I(X) = I_prod + X * c_infer`.
pub fn total_at_volume(profile: &SystemProfile, x_tokens: u64) -> f64 {
    profile.production_footprint_kgco2e + x_tokens as f64 * profile.infer_cost_kgco2e_per_token
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::SystemRole;
    use std::collections::BTreeMap;

    fn test_params() -> EmissionParams {
        EmissionParams {
            pue: 1.24,
            grid_kgco2e_per_kwh: 0.033,
            aur_by_phase: BTreeMap::from([
                (Phase::TeacherTrain, 0.8),
                (Phase::Distill, 0.8),
                (Phase::Infer, 0.2),
            ]),
            lifetime_override_hours: None,
        }
    }

    fn gpu() -> Device {
        Device {
            id: "v100".to_string(),
            manufacturing_footprint_kgco2e: 150.0,
            lifetime_hours: 43_800.0, // 5 years
        }
    }

    fn devices() -> DeviceMap {
        DeviceMap::from([("v100".to_string(), gpu())])
    }

    fn energy_record(phase: Phase, energy_kwh: f64, runtime_hours: f64) -> MeasurementRecord {
        MeasurementRecord {
            phase,
            device_id: "v100".to_string(),
            energy_kwh: Some(energy_kwh),
            avg_power_kw: None,
            runtime_hours,
            tokens_processed: None,
            batch_size: None,
            repeat_index: 0,
        }
    }

    #[test]
    fn operational_term_matches_hand_calculation() {
        // 1.24 * 100 kWh * 0.033 kgCO2e/kWh = 4.092 kgCO2e, by hand.
        let fp = phase_footprint(
            &energy_record(Phase::TeacherTrain, 100.0, 1.0),
            &gpu(),
            &test_params(),
        )
        .unwrap();
        assert!((fp.operational_kgco2e - 4.092).abs() < 1e-12);
    }

    #[test]
    fn embodied_term_matches_hand_calculation() {
        // 150 * 100 / (43800 * 0.8) = 0.4280821917808219, by hand.
        let fp = phase_footprint(
            &energy_record(Phase::TeacherTrain, 0.0, 100.0),
            &gpu(),
            &test_params(),
        )
        .unwrap();
        assert!((fp.embodied_kgco2e - 0.428_082_191_780_821_9).abs() < 1e-12);
    }

    #[test]
    fn zero_energy_isolates_embodied_term() {
        let fp = phase_footprint(
            &energy_record(Phase::Distill, 0.0, 1.0),
            &gpu(),
            &test_params(),
        )
        .unwrap();
        assert_eq!(fp.operational_kgco2e, 0.0);
        assert!(fp.embodied_kgco2e > 0.0);
    }

    #[test]
    fn lifetime_override_supersedes_device_lifetime() {
        let mut params = test_params();
        params.lifetime_override_hours = Some(gpu().lifetime_hours / 2.0);
        let base = phase_footprint(
            &energy_record(Phase::TeacherTrain, 0.0, 100.0),
            &gpu(),
            &test_params(),
        )
        .unwrap();
        let halved = phase_footprint(
            &energy_record(Phase::TeacherTrain, 0.0, 100.0),
            &gpu(),
            &params,
        )
        .unwrap();
        assert!((halved.embodied_kgco2e - 2.0 * base.embodied_kgco2e).abs() < 1e-12);
    }

    #[test]
    fn operational_is_linear_in_pue_egm_and_energy() {
        let rec = energy_record(Phase::TeacherTrain, 42.0, 7.0);
        let base = phase_footprint(&rec, &gpu(), &test_params()).unwrap();

        let mut p = test_params();
        p.pue *= 2.0;
        let double_pue = phase_footprint(&rec, &gpu(), &p).unwrap();
        assert!((double_pue.operational_kgco2e - 2.0 * base.operational_kgco2e).abs() < 1e-12);
        assert_eq!(double_pue.embodied_kgco2e, base.embodied_kgco2e);

        let mut p = test_params();
        p.grid_kgco2e_per_kwh *= 2.0;
        let double_egm = phase_footprint(&rec, &gpu(), &p).unwrap();
        assert!((double_egm.operational_kgco2e - 2.0 * base.operational_kgco2e).abs() < 1e-12);
        assert_eq!(double_egm.embodied_kgco2e, base.embodied_kgco2e);

        let mut r = rec.clone();
        r.energy_kwh = Some(84.0);
        let double_energy = phase_footprint(&r, &gpu(), &test_params()).unwrap();
        assert!((double_energy.operational_kgco2e - 2.0 * base.operational_kgco2e).abs() < 1e-12);
        assert_eq!(double_energy.embodied_kgco2e, base.embodied_kgco2e);
    }

    #[test]
    fn embodied_ignores_egm_and_pue_operational_ignores_amortization_inputs() {
        let rec = energy_record(Phase::Infer, 10.0, 3.0);
        let base = phase_footprint(&rec, &gpu(), &test_params()).unwrap();

        let mut p = test_params();
        p.aur_by_phase.insert(Phase::Infer, 0.4);
        p.lifetime_override_hours = Some(10_000.0);
        let perturbed_embodied_inputs = phase_footprint(&rec, &gpu(), &p).unwrap();
        assert_eq!(
            perturbed_embodied_inputs.operational_kgco2e,
            base.operational_kgco2e
        );

        let mut dev = gpu();
        dev.manufacturing_footprint_kgco2e = 300.0;
        let heavier = phase_footprint(&rec, &dev, &test_params()).unwrap();
        assert_eq!(heavier.operational_kgco2e, base.operational_kgco2e);
        assert!((heavier.embodied_kgco2e - 2.0 * base.embodied_kgco2e).abs() < 1e-12);
    }

    #[test]
    fn empty_ledger_totals_zero() {
        let ledger = aggregate_ledger(
            "empty",
            &[],
            &devices(),
            &test_params(),
            AllocationPolicy::FullAllocation,
        )
        .unwrap();
        assert_eq!(ledger.total_kgco2e(), 0.0);
        assert!(ledger.per_phase.is_empty());
    }

    #[test]
    fn two_identical_records_double_the_total() {
        let rec = energy_record(Phase::Distill, 10.0, 5.0);
        let single = aggregate_ledger(
            "s",
            std::slice::from_ref(&rec),
            &devices(),
            &test_params(),
            AllocationPolicy::FullAllocation,
        )
        .unwrap();
        let double = aggregate_ledger(
            "s",
            &[rec.clone(), rec],
            &devices(),
            &test_params(),
            AllocationPolicy::FullAllocation,
        )
        .unwrap();
        assert!((double.total_kgco2e() - 2.0 * single.total_kgco2e()).abs() < 1e-12);
        assert_eq!(double.per_phase.len(), 1);
    }

    #[test]
    fn embodied_ratio_across_phases_follows_aur() {
        // Equal runtimes at AUR 0.8 (train) vs 0.2 (infer): the amortization
        // denominator shrinks fourfold, so infer:train embodied is 4:1.
        let ledger = aggregate_ledger(
            "mixed",
            &[
                energy_record(Phase::TeacherTrain, 0.0, 10.0),
                energy_record(Phase::Infer, 0.0, 10.0),
            ],
            &devices(),
            &test_params(),
            AllocationPolicy::FullAllocation,
        )
        .unwrap();
        let train = ledger.phase_embodied_kgco2e(Phase::TeacherTrain);
        let infer = ledger.phase_embodied_kgco2e(Phase::Infer);
        assert!((infer / train - 4.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_is_additive_over_record_lists() {
        let a = vec![
            energy_record(Phase::TeacherTrain, 5.0, 2.0),
            energy_record(Phase::Infer, 1.0, 1.0),
        ];
        let b = vec![energy_record(Phase::Distill, 3.0, 4.0)];
        let mut both = a.clone();
        both.extend(b.clone());

        let params = test_params();
        let la = aggregate_ledger(
            "x",
            &a,
            &devices(),
            &params,
            AllocationPolicy::FullAllocation,
        )
        .unwrap();
        let lb = aggregate_ledger(
            "x",
            &b,
            &devices(),
            &params,
            AllocationPolicy::FullAllocation,
        )
        .unwrap();
        let lab = aggregate_ledger(
            "x",
            &both,
            &devices(),
            &params,
            AllocationPolicy::FullAllocation,
        )
        .unwrap();
        assert!((lab.total_kgco2e() - (la.total_kgco2e() + lb.total_kgco2e())).abs() < 1e-12);
    }

    #[test]
    fn aggregate_additivity_holds_on_random_record_lists() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let params = test_params();
        for _ in 0..50 {
            let random_records = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
                (0..n)
                    .map(|_| {
                        let phase = match rng.random_range(0..3) {
                            0 => Phase::TeacherTrain,
                            1 => Phase::Distill,
                            _ => Phase::Infer,
                        };
                        energy_record(
                            phase,
                            rng.random_range(0.0..100.0),
                            rng.random_range(0.001..50.0),
                        )
                    })
                    .collect::<Vec<_>>()
            };
            let n_a = rng.random_range(0..8);
            let n_b = rng.random_range(1..8);
            let a = random_records(&mut rng, n_a);
            let b = random_records(&mut rng, n_b);
            let mut both = a.clone();
            both.extend(b.clone());
            let total = |recs: &[MeasurementRecord]| {
                aggregate_ledger("x", recs, &devices(), &params, AllocationPolicy::default())
                    .unwrap()
                    .total_kgco2e()
            };
            let (ta, tb, tab) = (total(&a), total(&b), total(&both));
            assert!((tab - (ta + tb)).abs() <= 1e-12 * tab.max(1.0));
        }
    }

    #[test]
    fn unknown_device_rejected() {
        let mut rec = energy_record(Phase::Infer, 1.0, 1.0);
        rec.device_id = "tpu9".to_string();
        let err = aggregate_ledger(
            "x",
            &[rec],
            &devices(),
            &test_params(),
            AllocationPolicy::FullAllocation,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::UnknownDevice {
                device_id: "tpu9".to_string()
            }
        );
    }

    fn ledger_of(
        name: &str,
        records: &[MeasurementRecord],
        allocation: AllocationPolicy,
    ) -> SystemLedger {
        aggregate_ledger(name, records, &devices(), &test_params(), allocation).unwrap()
    }

    #[test]
    fn nokd_production_is_its_own_training_total() {
        let ledger = ledger_of(
            "nokd",
            &[energy_record(Phase::TeacherTrain, 50.0, 10.0)],
            AllocationPolicy::FullAllocation,
        );
        let expected = ledger.phase_total_kgco2e(Phase::TeacherTrain);
        assert_eq!(production_footprint(&ledger, None).unwrap(), expected);
    }

    #[test]
    fn full_allocation_adds_teacher_total_to_distill() {
        let teacher = ledger_of(
            "teacher",
            &[energy_record(Phase::TeacherTrain, 500.0, 100.0)],
            AllocationPolicy::FullAllocation,
        );
        let student = ledger_of(
            "kd",
            &[energy_record(Phase::Distill, 80.0, 20.0)],
            AllocationPolicy::FullAllocation,
        );
        let t = teacher.phase_total_kgco2e(Phase::TeacherTrain);
        let d = student.phase_total_kgco2e(Phase::Distill);
        let got = production_footprint(&student, Some(&teacher)).unwrap();
        assert!((got - (t + d)).abs() < 1e-12);
    }

    #[test]
    fn shared_allocation_divides_teacher_total() {
        let teacher = ledger_of(
            "teacher",
            &[energy_record(Phase::TeacherTrain, 500.0, 100.0)],
            AllocationPolicy::FullAllocation,
        );
        let student = ledger_of(
            "kd",
            &[energy_record(Phase::Distill, 80.0, 20.0)],
            AllocationPolicy::SharedAcrossK { k: 4 },
        );
        let t = teacher.phase_total_kgco2e(Phase::TeacherTrain);
        let d = student.phase_total_kgco2e(Phase::Distill);
        let got = production_footprint(&student, Some(&teacher)).unwrap();
        assert!((got - (t / 4.0 + d)).abs() < 1e-12);
    }

    #[test]
    fn sunk_teacher_drops_teacher_share_and_needs_no_ledger() {
        let student = ledger_of(
            "kd",
            &[energy_record(Phase::Distill, 80.0, 20.0)],
            AllocationPolicy::SunkTeacher,
        );
        let d = student.phase_total_kgco2e(Phase::Distill);
        assert_eq!(production_footprint(&student, None).unwrap(), d);
    }

    #[test]
    fn missing_teacher_ledger_is_an_error_when_share_positive() {
        let student = ledger_of(
            "kd",
            &[energy_record(Phase::Distill, 80.0, 20.0)],
            AllocationPolicy::FullAllocation,
        );
        assert_eq!(
            production_footprint(&student, None),
            Err(Error::MissingTeacherLedger {
                system: "kd".to_string()
            })
        );
    }

    #[test]
    fn allocation_is_monotone_in_shared_fraction() {
        let teacher = ledger_of(
            "teacher",
            &[energy_record(Phase::TeacherTrain, 321.0, 55.0)],
            AllocationPolicy::FullAllocation,
        );
        let distill_records = [energy_record(Phase::Distill, 17.0, 3.0)];
        let full = production_footprint(
            &ledger_of("kd", &distill_records, AllocationPolicy::FullAllocation),
            Some(&teacher),
        )
        .unwrap();
        let sunk = production_footprint(
            &ledger_of("kd", &distill_records, AllocationPolicy::SunkTeacher),
            Some(&teacher),
        )
        .unwrap();
        let mut prev = full;
        for k in 1..=10 {
            let shared = production_footprint(
                &ledger_of(
                    "kd",
                    &distill_records,
                    AllocationPolicy::SharedAcrossK { k },
                ),
                Some(&teacher),
            )
            .unwrap();
            assert!(sunk <= shared + 1e-15 && shared <= full + 1e-15);
            assert!(shared <= prev + 1e-15, "share must shrink as k grows");
            prev = shared;
        }
    }

    #[test]
    fn total_at_volume_examples() {
        let profile = SystemProfile {
            name: "s".to_string(),
            role: SystemRole::KdStudent,
            kd_method: Some("word-kd".to_string()),
            student_params_millions: Some(65.0),
            production_footprint_kgco2e: 10.0,
            infer_cost_kgco2e_per_token: 1e-6,
            quality_scores: vec![],
        };
        assert_eq!(total_at_volume(&profile, 0), 10.0);
        assert!((total_at_volume(&profile, 1_000_000) - 11.0).abs() < 1e-12);
    }

    #[test]
    fn student_intercept_exceeds_teacher_whenever_distill_positive() {
        let teacher = ledger_of(
            "teacher",
            &[energy_record(Phase::TeacherTrain, 500.0, 100.0)],
            AllocationPolicy::FullAllocation,
        );
        let student = ledger_of(
            "kd",
            &[energy_record(Phase::Distill, 1.0, 0.5)],
            AllocationPolicy::FullAllocation,
        );
        let teacher_prod = production_footprint(&teacher, None).unwrap();
        let student_prod = production_footprint(&student, Some(&teacher)).unwrap();
        assert!(student_prod > teacher_prod);
    }
}
