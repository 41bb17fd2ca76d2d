//! Inference-volume amortization: break-even points between system pairs and
//! batch-size-dependent inference cost fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::SystemProfile;

/// A fitted line `footprint = intercept + slope * tokens`.
///
/// `fit_sse` is the sum of squared errors over *all* points, including the
/// one the winning leave-one-out candidate excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCostModel {
    pub intercept_kgco2e: f64,
    pub slope_kgco2e_per_token: f64,
    pub fit_sse: f64,
    pub excluded_point_index: Option<usize>,
}

impl LinearCostModel {
    pub fn predict(&self, tokens: f64) -> f64 {
        self.intercept_kgco2e + self.slope_kgco2e_per_token * tokens
    }

    /// Emissions cannot decrease with more tokens; negative-slope fits are
    /// flagged rather than used.
    pub fn is_accepted(&self) -> bool {
        self.slope_kgco2e_per_token >= 0.0
    }
}

/// How two amortization lines relate over X >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakEvenRelation {
    /// The lines cross at a nonnegative volume.
    CrossesAt,
    /// System A is at or below system B for every volume.
    NeverCrossesADominates,
    /// System B is at or below system A for every volume.
    NeverCrossesBDominates,
    /// Same intercept and same slope.
    Identical,
}

/// Solution of `I_a + X c_a = I_b + X c_b` over X >= 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakEvenResult {
    pub system_a: String,
    pub system_b: String,
    /// Present iff `relation == CrossesAt`.
    pub breakeven_tokens: Option<f64>,
    pub relation: BreakEvenRelation,
}

/// Solves for the served volume at which two total-emission lines meet.
///
/// A crossing at X = 0 (equal intercepts, different slopes) counts as
/// `CrossesAt`; the lower-slope system is cheaper for all X > 0.
pub fn break_even(a: &SystemProfile, b: &SystemProfile) -> BreakEvenResult {
    let d_intercept = a.production_footprint_kgco2e - b.production_footprint_kgco2e;
    let d_slope = b.infer_cost_kgco2e_per_token - a.infer_cost_kgco2e_per_token;

    let (relation, breakeven_tokens) = if d_intercept == 0.0 && d_slope == 0.0 {
        (BreakEvenRelation::Identical, None)
    } else if d_slope == 0.0 {
        if d_intercept < 0.0 {
            (BreakEvenRelation::NeverCrossesADominates, None)
        } else {
            (BreakEvenRelation::NeverCrossesBDominates, None)
        }
    } else {
        let x = d_intercept / d_slope;
        if x >= 0.0 {
            // Normalize -0.0 from a zero intercept difference.
            (
                BreakEvenRelation::CrossesAt,
                Some(if x == 0.0 { 0.0 } else { x }),
            )
        } else if d_intercept < 0.0 {
            (BreakEvenRelation::NeverCrossesADominates, None)
        } else {
            (BreakEvenRelation::NeverCrossesBDominates, None)
        }
    };

    BreakEvenResult {
        system_a: a.name.clone(),
        system_b: b.name.clone(),
        breakeven_tokens,
        relation,
    }
}

/// Ordinary least squares through `points`, skipping the index in `exclude`.
/// Returns `None` when the remaining token values are all identical.
fn ols_excluding(points: &[(u64, f64)], exclude: usize) -> Option<(f64, f64)> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != exclude)
        .map(|(_, &(x, y))| (x as f64, y))
        .collect();
    let n = kept.len() as f64;
    let mean_x = kept.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = kept.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = kept.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = kept.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    Some((mean_y - slope * mean_x, slope))
}

fn sse_over_all(points: &[(u64, f64)], intercept: f64, slope: f64) -> f64 {
    points
        .iter()
        .map(|&(x, y)| {
            let r = y - (intercept + slope * x as f64);
            r * r
        })
        .sum()
}

/// All leave-one-out candidates, one per excluded index. Each candidate's
/// `fit_sse` records its error over the full point set. Candidates whose
/// remaining token values are degenerate are omitted.
pub fn loo_candidates(points: &[(u64, f64)]) -> Result<Vec<LinearCostModel>> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let mut candidates = Vec::with_capacity(points.len());
    for exclude in 0..points.len() {
        if let Some((intercept, slope)) = ols_excluding(points, exclude) {
            candidates.push(LinearCostModel {
                intercept_kgco2e: intercept,
                slope_kgco2e_per_token: slope,
                fit_sse: sse_over_all(points, intercept, slope),
                excluded_point_index: Some(exclude),
            });
        }
    }
    if candidates.is_empty() {
        return Err(Error::DegenerateFit);
    }
    Ok(candidates)
}

fn sse_excluding(points: &[(u64, f64)], intercept: f64, slope: f64, exclude: usize) -> f64 {
    points
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != exclude)
        .map(|(_, &(x, y))| {
            let r = y - (intercept + slope * x as f64);
            r * r
        })
        .sum()
}

/// Leave-one-out-robust linear fit.
///
/// Candidates are selected by the SSE over the points each one was trained
/// on, which is what makes a single gross outlier droppable: scoring on the
/// full set instead would let the outlier's residual dominate every
/// candidate and favor fits dragged toward it. The winner still reports its
/// `fit_sse` over all points. Ties break toward the smallest excluded index.
pub fn loo_robust_fit(points: &[(u64, f64)]) -> Result<LinearCostModel> {
    let candidates = loo_candidates(points)?;
    Ok(candidates
        .into_iter()
        .min_by(|a, b| {
            let sa = sse_excluding(
                points,
                a.intercept_kgco2e,
                a.slope_kgco2e_per_token,
                a.excluded_point_index
                    .expect("candidates record their exclusion"),
            );
            let sb = sse_excluding(
                points,
                b.intercept_kgco2e,
                b.slope_kgco2e_per_token,
                b.excluded_point_index
                    .expect("candidates record their exclusion"),
            );
            sa.partial_cmp(&sb).expect("SSE is finite")
        })
        .expect("candidates nonempty"))
}

/// One row of the break-even table: a system's crossing volume against the
/// teacher at each batch size, `None` where the lines never cross.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub system: String,
    pub cells: Vec<Option<f64>>,
}

/// Break-even tokens vs the teacher across batch sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub batch_sizes: Vec<u64>,
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    /// Cell text with the dash convention for non-crossing systems.
    pub fn cell_text(cell: Option<f64>) -> String {
        match cell {
            Some(tokens) => format_token_count(tokens),
            None => "\u{2014}".to_string(),
        }
    }
}

/// Combines per-(system, batch size) fitted inference slopes with production
/// footprints and solves each system's break-even against the teacher at the
/// same batch size.
///
/// Every fit must be accepted (nonnegative slope) and the teacher needs a
/// fit at every batch size used by any listed system.
pub fn scaling_table(
    profiles: &[SystemProfile],
    fits: &BTreeMap<(String, u64), LinearCostModel>,
    teacher: &SystemProfile,
) -> Result<ScalingTable> {
    for ((system, batch_size), fit) in fits {
        if !fit.is_accepted() {
            return Err(Error::NegativeSlopeFit {
                system: system.clone(),
                batch_size: *batch_size,
            });
        }
    }

    let mut batch_sizes: Vec<u64> = fits
        .keys()
        .filter(|(system, _)| profiles.iter().any(|p| &p.name == system))
        .map(|(_, b)| *b)
        .collect();
    batch_sizes.sort_unstable();
    batch_sizes.dedup();

    let mut rows = Vec::new();
    for profile in profiles {
        if profile.name == teacher.name {
            continue;
        }
        let mut cells = Vec::with_capacity(batch_sizes.len());
        for &batch_size in &batch_sizes {
            let fit = match fits.get(&(profile.name.clone(), batch_size)) {
                Some(f) => f,
                None => {
                    cells.push(None);
                    continue;
                }
            };
            let teacher_fit = fits
                .get(&(teacher.name.clone(), batch_size))
                .ok_or(Error::MissingTeacherFit { batch_size })?;

            let mut sys = profile.clone();
            sys.infer_cost_kgco2e_per_token = fit.slope_kgco2e_per_token;
            let mut tch = teacher.clone();
            tch.infer_cost_kgco2e_per_token = teacher_fit.slope_kgco2e_per_token;

            let result = break_even(&sys, &tch);
            cells.push(match result.relation {
                BreakEvenRelation::CrossesAt => result.breakeven_tokens,
                _ => None,
            });
        }
        rows.push(ScalingRow {
            system: profile.name.clone(),
            cells,
        });
    }

    Ok(ScalingTable { batch_sizes, rows })
}

/// Token counts with K/M/B suffixes at two decimals, e.g. `285.07M`, `1.28B`.
pub fn format_token_count(tokens: f64) -> String {
    let t = tokens.abs();
    let sign = if tokens < 0.0 { "-" } else { "" };
    if t >= 1e9 {
        format!("{sign}{:.2}B", t / 1e9)
    } else if t >= 1e6 {
        format!("{sign}{:.2}M", t / 1e6)
    } else if t >= 1e3 {
        format!("{sign}{:.2}K", t / 1e3)
    } else {
        format!("{sign}{t:.0}")
    }
}
