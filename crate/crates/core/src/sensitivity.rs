//! One-way sensitivity analysis: production footprints recomputed with a
//! single emission parameter moved to the low and high end of its plausible
//! range, everything else held at baseline.

use serde::{Deserialize, Serialize};

use crate::accounting::{aggregate_ledger, production_footprint, SystemLedger};
use crate::error::{Error, Result};
use crate::units::{DeviceMap, EmissionParams, Phase};

/// Emission parameter swept by the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    GridIntensity,
    Pue,
    Aur,
    LifetimeHours,
    ManufacturingFootprint,
}

impl SweepParameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParameter::GridIntensity => "grid_intensity",
            SweepParameter::Pue => "pue",
            SweepParameter::Aur => "aur",
            SweepParameter::LifetimeHours => "lifetime_hours",
            SweepParameter::ManufacturingFootprint => "manufacturing_footprint",
        }
    }
}

/// A plausible range for one parameter, bracketing its baseline value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub parameter: SweepParameter,
    pub low: f64,
    pub high: f64,
    pub baseline: f64,
}

impl ParamRange {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("low", self.low),
            ("baseline", self.baseline),
            ("high", self.high),
        ] {
            if !v.is_finite() {
                return Err(Error::RangeViolatesDomain {
                    reason: format!(
                        "{}: {name} must be finite, got {v}",
                        self.parameter.as_str()
                    ),
                });
            }
        }
        if !(self.low <= self.baseline && self.baseline <= self.high) {
            return Err(Error::RangeViolatesDomain {
                reason: format!(
                    "{}: low {} <= baseline {} <= high {} must hold",
                    self.parameter.as_str(),
                    self.low,
                    self.baseline,
                    self.high
                ),
            });
        }
        let domain_ok = match self.parameter {
            SweepParameter::GridIntensity => self.low >= 0.0,
            SweepParameter::Pue => self.low >= 1.0,
            SweepParameter::Aur => self.low > 0.0 && self.high <= 1.0,
            SweepParameter::LifetimeHours => self.low > 0.0,
            SweepParameter::ManufacturingFootprint => self.low >= 0.0,
        };
        if !domain_ok {
            return Err(Error::RangeViolatesDomain {
                reason: format!(
                    "{}: range [{}, {}] leaves the parameter's domain",
                    self.parameter.as_str(),
                    self.low,
                    self.high
                ),
            });
        }
        Ok(())
    }
}

/// Footprint deviations for one (system, parameter) pair, measured against
/// the same system's footprint under the baseline parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub system_name: String,
    pub parameter: ParamRange,
    pub delta_low_kgco2e: f64,
    pub delta_high_kgco2e: f64,
}

/// Baseline parameters with exactly one parameter replaced.
///
/// The AUR sweep applies its value uniformly to every phase; production
/// footprints only touch the train and distill phases, so the infer AUR is
/// inert here. The lifetime sweep uses the override that supersedes
/// per-device lifetimes, and the manufacturing sweep rewrites every device.
fn apply_parameter(
    params: &EmissionParams,
    devices: &DeviceMap,
    parameter: SweepParameter,
    value: f64,
) -> (EmissionParams, DeviceMap) {
    let mut params = params.clone();
    let mut devices = devices.clone();
    match parameter {
        SweepParameter::GridIntensity => params.grid_kgco2e_per_kwh = value,
        SweepParameter::Pue => params.pue = value,
        SweepParameter::Aur => {
            for phase in Phase::ALL {
                params.aur_by_phase.insert(phase, value);
            }
        }
        SweepParameter::LifetimeHours => params.lifetime_override_hours = Some(value),
        SweepParameter::ManufacturingFootprint => {
            for dev in devices.values_mut() {
                dev.manufacturing_footprint_kgco2e = value;
            }
        }
    }
    (params, devices)
}

fn recompute_production(
    ledger: &SystemLedger,
    teacher: Option<&SystemLedger>,
    devices: &DeviceMap,
    params: &EmissionParams,
) -> Result<f64> {
    let re = aggregate_ledger(
        &ledger.system_name,
        ledger.records(),
        devices,
        params,
        ledger.allocation,
    )?;
    let re_teacher = match teacher {
        Some(t) if t.system_name != ledger.system_name => Some(aggregate_ledger(
            &t.system_name,
            t.records(),
            devices,
            params,
            t.allocation,
        )?),
        _ => None,
    };
    production_footprint(&re, re_teacher.as_ref())
}

/// For each range and each system, recomputes the production footprint with
/// only that parameter set to its low and high values and reports the
/// deltas. The optional shared teacher ledger is recomputed under the same
/// perturbation.
pub fn one_way_sweep(
    ledgers: &[SystemLedger],
    teacher: Option<&SystemLedger>,
    devices: &DeviceMap,
    base_params: &EmissionParams,
    ranges: &[ParamRange],
) -> Result<Vec<SensitivityRow>> {
    for range in ranges {
        range.validate()?;
    }
    base_params.validate()?;

    let baselines: Vec<f64> = ledgers
        .iter()
        .map(|l| recompute_production(l, teacher, devices, base_params))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(ranges.len() * ledgers.len());
    for range in ranges {
        let (low_params, low_devices) =
            apply_parameter(base_params, devices, range.parameter, range.low);
        let (high_params, high_devices) =
            apply_parameter(base_params, devices, range.parameter, range.high);
        for (ledger, baseline) in ledgers.iter().zip(&baselines) {
            let at_low = recompute_production(ledger, teacher, &low_devices, &low_params)?;
            let at_high = recompute_production(ledger, teacher, &high_devices, &high_params)?;
            rows.push(SensitivityRow {
                system_name: ledger.system_name.clone(),
                parameter: range.clone(),
                delta_low_kgco2e: at_low - baseline,
                delta_high_kgco2e: at_high - baseline,
            });
        }
    }
    Ok(rows)
}

/// Which end of a range an ordering was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepExtreme {
    Low,
    High,
}

/// Rank order of systems at one parameter extreme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingEntry {
    pub parameter: SweepParameter,
    pub extreme: SweepExtreme,
    /// System names sorted by ascending production footprint.
    pub order: Vec<String>,
    pub matches_baseline: bool,
}

/// Whether the relative ordering of systems survives every parameter
/// extreme. This is checked, never assumed: it holds for some measurement
/// sets and not others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub baseline_order: Vec<String>,
    pub entries: Vec<OrderingEntry>,
    pub stable: bool,
}

fn rank_order(totals: &[(String, f64)]) -> Vec<String> {
    let mut sorted = totals.to_vec();
    sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    sorted.into_iter().map(|(name, _)| name).collect()
}

/// Compares the system rank order at every (parameter, extreme) against the
/// baseline order implied by `baseline_totals`.
pub fn ordering_report(
    rows: &[SensitivityRow],
    baseline_totals: &std::collections::BTreeMap<String, f64>,
) -> OrderingReport {
    let baseline: Vec<(String, f64)> = baseline_totals
        .iter()
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let baseline_order = rank_order(&baseline);

    // Group by the full range, not just the parameter kind: two ranges over
    // the same parameter must not pool their rows into one ordering.
    let mut ranges: Vec<&ParamRange> = Vec::new();
    for row in rows {
        if !ranges.contains(&&row.parameter) {
            ranges.push(&row.parameter);
        }
    }

    let mut entries = Vec::new();
    for range in ranges {
        for extreme in [SweepExtreme::Low, SweepExtreme::High] {
            let totals: Vec<(String, f64)> = rows
                .iter()
                .filter(|r| r.parameter == *range)
                .map(|r| {
                    let delta = match extreme {
                        SweepExtreme::Low => r.delta_low_kgco2e,
                        SweepExtreme::High => r.delta_high_kgco2e,
                    };
                    let base = baseline_totals.get(&r.system_name).copied().unwrap_or(0.0);
                    (r.system_name.clone(), base + delta)
                })
                .collect();
            let order = rank_order(&totals);
            let matches_baseline = order == baseline_order;
            entries.push(OrderingEntry {
                parameter: range.parameter,
                extreme,
                order,
                matches_baseline,
            });
        }
    }
    let stable = entries.iter().all(|e| e.matches_baseline);
    OrderingReport {
        baseline_order,
        entries,
        stable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::AllocationPolicy;
    use crate::units::{Device, MeasurementRecord};
    use std::collections::BTreeMap;

    fn params() -> EmissionParams {
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

    fn devices() -> DeviceMap {
        DeviceMap::from([(
            "v100".to_string(),
            Device {
                id: "v100".to_string(),
                manufacturing_footprint_kgco2e: 150.0,
                lifetime_hours: 43_800.0,
            },
        )])
    }

    fn record(phase: Phase, energy_kwh: f64, runtime_hours: f64) -> MeasurementRecord {
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

    fn ledger(name: &str, records: &[MeasurementRecord]) -> SystemLedger {
        aggregate_ledger(
            name,
            records,
            &devices(),
            &params(),
            AllocationPolicy::FullAllocation,
        )
        .unwrap()
    }

    fn range(parameter: SweepParameter, low: f64, baseline: f64, high: f64) -> ParamRange {
        ParamRange {
            parameter,
            low,
            high,
            baseline,
        }
    }

    #[test]
    fn degenerate_range_produces_zero_deltas() {
        let l = ledger("sys", &[record(Phase::TeacherTrain, 100.0, 10.0)]);
        let r = range(SweepParameter::GridIntensity, 0.033, 0.033, 0.033);
        let rows = one_way_sweep(&[l], None, &devices(), &params(), &[r]).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].delta_low_kgco2e.abs() < 1e-12);
        assert!(rows[0].delta_high_kgco2e.abs() < 1e-12);
    }

    #[test]
    fn doubling_grid_intensity_adds_exactly_the_operational_component() {
        let l = ledger("sys", &[record(Phase::TeacherTrain, 100.0, 10.0)]);
        let operational = l.phase_operational_kgco2e(Phase::TeacherTrain);
        let r = range(SweepParameter::GridIntensity, 0.033, 0.033, 0.066);
        let rows = one_way_sweep(&[l], None, &devices(), &params(), &[r]).unwrap();
        assert!((rows[0].delta_high_kgco2e - operational).abs() < 1e-12);
        assert!(rows[0].delta_low_kgco2e.abs() < 1e-12);
    }

    #[test]
    fn halving_aur_doubles_exactly_the_embodied_component() {
        let l = ledger("sys", &[record(Phase::TeacherTrain, 100.0, 10.0)]);
        let embodied = l.phase_embodied_kgco2e(Phase::TeacherTrain);
        let r = range(SweepParameter::Aur, 0.4, 0.8, 0.8);
        let rows = one_way_sweep(&[l], None, &devices(), &params(), &[r]).unwrap();
        assert!((rows[0].delta_low_kgco2e - embodied).abs() < 1e-12);
        assert!(rows[0].delta_high_kgco2e.abs() < 1e-12);
    }

    #[test]
    fn sweeps_touch_only_their_component() {
        // Operational-side parameters leave the embodied component fixed and
        // vice versa: recompute each component under both extremes.
        let recs = [record(Phase::TeacherTrain, 100.0, 10.0)];
        let base = ledger("sys", &recs);
        let op = base.phase_operational_kgco2e(Phase::TeacherTrain);
        let emb = base.phase_embodied_kgco2e(Phase::TeacherTrain);

        let cases = [
            (SweepParameter::GridIntensity, 0.02, 0.033, 0.5, true),
            (SweepParameter::Pue, 1.1, 1.24, 1.6, true),
            (SweepParameter::Aur, 0.2, 0.8, 1.0, false),
            (
                SweepParameter::LifetimeHours,
                26_280.0,
                43_800.0,
                61_320.0,
                false,
            ),
            (
                SweepParameter::ManufacturingFootprint,
                100.0,
                150.0,
                300.0,
                false,
            ),
        ];
        for (parameter, low, baseline, high, is_operational) in cases {
            for value in [low, high] {
                let (p, d) = apply_parameter(&params(), &devices(), parameter, value);
                let re = aggregate_ledger("sys", &recs, &d, &p, AllocationPolicy::FullAllocation)
                    .unwrap();
                if is_operational {
                    assert_eq!(re.phase_embodied_kgco2e(Phase::TeacherTrain), emb);
                } else {
                    assert_eq!(re.phase_operational_kgco2e(Phase::TeacherTrain), op);
                }
            }
            // And the one-way sweep itself stays within domain.
            let r = range(parameter, low, baseline, high);
            assert!(r.validate().is_ok());
        }
    }

    #[test]
    fn symmetric_linear_ranges_give_antisymmetric_deltas() {
        let l = ledger("sys", &[record(Phase::TeacherTrain, 100.0, 10.0)]);
        let r = range(SweepParameter::GridIntensity, 0.023, 0.033, 0.043);
        let rows = one_way_sweep(&[l], None, &devices(), &params(), &[r]).unwrap();
        assert!(
            (rows[0].delta_low_kgco2e + rows[0].delta_high_kgco2e).abs() < 1e-12,
            "grid intensity enters linearly"
        );
    }

    #[test]
    fn teacher_ledger_is_recomputed_under_the_same_perturbation() {
        let teacher = ledger("teacher", &[record(Phase::TeacherTrain, 500.0, 100.0)]);
        let student = ledger("kd", &[record(Phase::Distill, 80.0, 20.0)]);
        let r = range(SweepParameter::GridIntensity, 0.033, 0.033, 0.066);
        let rows = one_way_sweep(&[student], Some(&teacher), &devices(), &params(), &[r]).unwrap();
        // Doubling EGM adds the operational component of teacher + distill.
        let expected = teacher.phase_operational_kgco2e(Phase::TeacherTrain)
            + ledger("kd", &[record(Phase::Distill, 80.0, 20.0)])
                .phase_operational_kgco2e(Phase::Distill);
        assert!((rows[0].delta_high_kgco2e - expected).abs() < 1e-12);
    }

    #[test]
    fn range_domain_violations_rejected() {
        assert!(range(SweepParameter::Pue, 0.9, 1.24, 1.6)
            .validate()
            .is_err());
        assert!(range(SweepParameter::Aur, 0.2, 0.8, 1.2)
            .validate()
            .is_err());
        assert!(range(SweepParameter::GridIntensity, 0.05, 0.033, 0.5)
            .validate()
            .is_err());
        assert!(
            range(SweepParameter::LifetimeHours, 0.0, 43_800.0, 61_320.0)
                .validate()
                .is_err()
        );
    }

    #[test]
    fn common_scaling_preserves_order() {
        // Pure-operational fixture: an EGM sweep scales every system by the
        // same factor, so the rank order cannot change.
        let mut params_no_embodied = params();
        params_no_embodied.aur_by_phase = params().aur_by_phase;
        let mut devs = devices();
        devs.get_mut("v100").unwrap().manufacturing_footprint_kgco2e = 0.0;

        let mk = |name: &str, kwh: f64| {
            aggregate_ledger(
                name,
                &[record(Phase::TeacherTrain, kwh, 1.0)],
                &devs,
                &params_no_embodied,
                AllocationPolicy::FullAllocation,
            )
            .unwrap()
        };
        let ledgers = vec![mk("small", 10.0), mk("large", 100.0), mk("medium", 50.0)];
        let r = range(SweepParameter::GridIntensity, 0.02, 0.033, 0.5);
        let rows = one_way_sweep(&ledgers, None, &devs, &params_no_embodied, &[r]).unwrap();
        let baselines: BTreeMap<String, f64> = ledgers
            .iter()
            .map(|l| {
                (
                    l.system_name.clone(),
                    production_footprint(l, None).unwrap(),
                )
            })
            .collect();
        let report = ordering_report(&rows, &baselines);
        assert!(report.stable);
        assert_eq!(report.baseline_order, vec!["small", "medium", "large"]);
    }

    #[test]
    fn embodied_vs_operational_mix_can_reorder() {
        // System A is embodied-heavy (long runtime, no energy), system B is
        // operational-heavy (much energy, short runtime). The baseline
        // crossing EGM solves 1.24 * 100 * g + eps = 150*1000/(43800*0.8),
        // about 0.0345; sweeping EGM to 0.5 pushes B far above A while the
        // low end keeps B below.
        let a = ledger(
            "embodied-heavy",
            &[record(Phase::TeacherTrain, 0.0, 1_000.0)],
        );
        let b = ledger(
            "operational-heavy",
            &[record(Phase::TeacherTrain, 100.0, 1.0)],
        );
        let base_a = production_footprint(&a, None).unwrap();
        let base_b = production_footprint(&b, None).unwrap();
        assert!(
            base_b < base_a,
            "at EGM 0.033 the operational system is cheaper"
        );

        let r = range(SweepParameter::GridIntensity, 0.001, 0.033, 0.5);
        let rows = one_way_sweep(&[a, b], None, &devices(), &params(), &[r]).unwrap();
        let baselines = BTreeMap::from([
            ("embodied-heavy".to_string(), base_a),
            ("operational-heavy".to_string(), base_b),
        ]);
        let report = ordering_report(&rows, &baselines);
        assert!(!report.stable, "the EGM sweep must flag the reordering");
        let high_entry = report
            .entries
            .iter()
            .find(|e| e.extreme == SweepExtreme::High)
            .unwrap();
        assert_eq!(
            high_entry.order,
            vec!["embodied-heavy", "operational-heavy"]
        );
        assert!(!high_entry.matches_baseline);
    }

    #[test]
    fn single_system_is_trivially_stable() {
        let l = ledger("only", &[record(Phase::TeacherTrain, 100.0, 10.0)]);
        let base = production_footprint(&l, None).unwrap();
        let r = range(SweepParameter::Pue, 1.1, 1.24, 1.6);
        let rows = one_way_sweep(&[l], None, &devices(), &params(), &[r]).unwrap();
        let report = ordering_report(&rows, &BTreeMap::from([("only".to_string(), base)]));
        assert!(report.stable);
    }

    #[test]
    fn two_ranges_over_one_parameter_stay_separate() {
        let a = ledger("a", &[record(Phase::TeacherTrain, 100.0, 10.0)]);
        let b = ledger("b", &[record(Phase::TeacherTrain, 50.0, 5.0)]);
        let base_a = production_footprint(&a, None).unwrap();
        let base_b = production_footprint(&b, None).unwrap();
        let ranges = [
            range(SweepParameter::GridIntensity, 0.02, 0.033, 0.1),
            range(SweepParameter::GridIntensity, 0.02, 0.033, 0.5),
        ];
        let rows = one_way_sweep(&[a, b], None, &devices(), &params(), &ranges).unwrap();
        let baselines = BTreeMap::from([("a".to_string(), base_a), ("b".to_string(), base_b)]);
        let report = ordering_report(&rows, &baselines);
        assert_eq!(report.entries.len(), 4, "two ranges, two extremes each");
        for entry in &report.entries {
            assert_eq!(
                entry.order.len(),
                2,
                "each ordering covers each system once"
            );
        }
    }
}
