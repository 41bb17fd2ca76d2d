//! Footprint/quality Pareto frontier extraction, paired bootstrap confidence
//! intervals over per-document quality scores, and the deployment decision
//! procedure built on both.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amortization::{break_even, BreakEvenRelation};
use crate::error::{Error, Result};
use crate::units::{SystemProfile, SystemRole};

/// Confidence level used wherever an operation does not take one explicitly.
pub const DEFAULT_CONFIDENCE_LEVEL: f64 = 0.95;

/// One system (or checkpoint) in footprint/quality space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub system_name: String,
    pub production_footprint_kgco2e: f64,
    pub mean_quality: f64,
    pub quality_ci: (f64, f64),
    pub on_frontier: bool,
}

impl FrontierPoint {
    pub fn new(
        system_name: &str,
        production_footprint_kgco2e: f64,
        mean_quality: f64,
        quality_ci: (f64, f64),
    ) -> Result<Self> {
        if !(quality_ci.0 <= mean_quality && mean_quality <= quality_ci.1) {
            return Err(Error::InvalidParams {
                reason: format!(
                    "quality CI ({}, {}) must bracket the mean {mean_quality}",
                    quality_ci.0, quality_ci.1
                ),
            });
        }
        if production_footprint_kgco2e < 0.0 {
            return Err(Error::NegativeValue {
                field: "production_footprint_kgco2e",
                value: production_footprint_kgco2e,
            });
        }
        Ok(Self {
            system_name: system_name.to_string(),
            production_footprint_kgco2e,
            mean_quality,
            quality_ci,
            on_frontier: false,
        })
    }
}

/// True when `q` dominates `p`: at least as good on both axes, strictly
/// better on one.
fn dominates(q: &FrontierPoint, p: &FrontierPoint) -> bool {
    q.mean_quality >= p.mean_quality
        && q.production_footprint_kgco2e <= p.production_footprint_kgco2e
        && (q.mean_quality > p.mean_quality
            || q.production_footprint_kgco2e < p.production_footprint_kgco2e)
}

/// Marks every nondominated point, returning all points sorted by ascending
/// footprint. Exact ties on both axes stay on the frontier together. Along
/// the sorted output, frontier quality is nondecreasing.
pub fn pareto_frontier(points: Vec<FrontierPoint>) -> Vec<FrontierPoint> {
    let mut sorted = points;
    sorted.sort_by(|a, b| {
        a.production_footprint_kgco2e
            .partial_cmp(&b.production_footprint_kgco2e)
            .unwrap()
            .then(a.mean_quality.partial_cmp(&b.mean_quality).unwrap())
            .then(a.system_name.cmp(&b.system_name))
    });
    let snapshot = sorted.clone();
    for p in &mut sorted {
        p.on_frontier = !snapshot.iter().any(|q| dominates(q, p));
    }
    sorted
}

/// Drops checkpoints that do not improve quality: within each system's
/// sequence ordered by footprint, a point falls away when an earlier
/// (lower-footprint) checkpoint of the same system already reaches its
/// quality. Intended as a pre-filter before [`pareto_frontier`] when several
/// points share a system name.
pub fn deduplicate_checkpoints(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let mut out = Vec::with_capacity(points.len());
    let mut names: Vec<&str> = points.iter().map(|p| p.system_name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    for name in names {
        let mut group: Vec<&FrontierPoint> =
            points.iter().filter(|p| p.system_name == name).collect();
        group.sort_by(|a, b| {
            a.production_footprint_kgco2e
                .partial_cmp(&b.production_footprint_kgco2e)
                .unwrap()
                .then(b.mean_quality.partial_cmp(&a.mean_quality).unwrap())
        });
        let mut best_quality = f64::NEG_INFINITY;
        for p in group {
            if p.mean_quality > best_quality {
                best_quality = p.mean_quality;
                out.push(p.clone());
            }
        }
    }
    out
}

/// Validates the score matrix shape shared by the bootstrap operations.
fn check_matrix(score_matrix: &[Vec<f64>]) -> Result<usize> {
    let first = score_matrix.first().ok_or(Error::InvalidParams {
        reason: "score matrix needs at least one system".to_string(),
    })?;
    let n_docs = first.len();
    if n_docs == 0 {
        return Err(Error::InvalidParams {
            reason: "score matrix needs at least one document".to_string(),
        });
    }
    for row in score_matrix {
        if row.len() != n_docs {
            return Err(Error::RaggedMatrix {
                expected: n_docs,
                got: row.len(),
            });
        }
        if row.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParams {
                reason: "score matrix entries must be finite".to_string(),
            });
        }
    }
    Ok(n_docs)
}

/// Paired bootstrap percentile intervals for each system's mean score.
///
/// Draws `n_resamples` document-index vectors with replacement from one
/// seeded stream and applies the *same* vectors to every system, which is
/// what makes downstream comparisons paired. Each system's interval is the
/// k-th smallest and k-th largest of its sorted resample means under the
/// nearest-rank rule, k = ceil((1 - level)/2 * n_resamples); at N = 1000 and
/// level 0.95 the bounds are the 25th and 976th order statistics.
pub fn paired_bootstrap_ci(
    score_matrix: &[Vec<f64>],
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let n_docs = check_matrix(score_matrix)?;
    if n_resamples < 1 {
        return Err(Error::InvalidParams {
            reason: "n_resamples must be >= 1".to_string(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParams {
            reason: format!("confidence level must lie in (0, 1), got {level}"),
        });
    }

    let n_systems = score_matrix.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resample_means = vec![Vec::with_capacity(n_resamples); n_systems];
    let mut indices = vec![0usize; n_docs];
    for _ in 0..n_resamples {
        for slot in indices.iter_mut() {
            *slot = rng.random_range(0..n_docs);
        }
        for (system, row) in score_matrix.iter().enumerate() {
            let sum: f64 = indices.iter().map(|&i| row[i]).sum();
            resample_means[system].push(sum / n_docs as f64);
        }
    }

    let alpha = (1.0 - level) / 2.0;
    // Snap before ceiling: exact multiples like 0.025 * 1000 must not round
    // up on floating error, or every rank shifts by one.
    let k = (((alpha * n_resamples as f64 - 1e-9).ceil() as usize).max(1)).min(n_resamples);
    let mut intervals = Vec::with_capacity(n_systems);
    for means in &mut resample_means {
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        intervals.push((means[k - 1], means[n_resamples - k]));
    }
    Ok(intervals)
}

/// True iff the paired bootstrap intervals of the two score vectors are
/// disjoint and `a` has the higher mean, at [`DEFAULT_CONFIDENCE_LEVEL`].
pub fn significant_improvement(
    a_scores: &[f64],
    b_scores: &[f64],
    n_resamples: usize,
    seed: u64,
) -> Result<bool> {
    let matrix = [a_scores.to_vec(), b_scores.to_vec()];
    let cis = paired_bootstrap_ci(&matrix, n_resamples, DEFAULT_CONFIDENCE_LEVEL, seed)?;
    let (a_ci, b_ci) = (cis[0], cis[1]);
    let disjoint = a_ci.0 > b_ci.1 || b_ci.0 > a_ci.1;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(disjoint && mean(a_scores) > mean(b_scores))
}

/// Deployment verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    UseTeacher,
    UseNoKd,
    UseKdStudent(String),
}

/// Output of the decision procedure, with every rule firing recorded in
/// order. Each rationale entry names the procedure step it applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub verdict: Verdict,
    pub rationale: Vec<String>,
    pub breakeven_tokens_vs_teacher: Option<f64>,
    /// Whether the recommended system's quality improvement over the No-KD
    /// baseline is statistically significant (false for the baseline itself).
    pub quality_gap_significant: bool,
}

/// Applies the decision procedure:
///
/// 1. the functional unit fixes the expected served volume;
/// 2. if the No-KD baseline already meets the quality target, use it;
/// 3. otherwise keep only KD students that meet the target with a
///    statistically significant gain over the baseline;
/// 4. of the survivors on the Pareto frontier, take the lowest production
///    footprint — then fall back to the teacher when that pick cannot
///    amortize its overhead within the expected volume.
pub fn recommend(
    profiles: &[SystemProfile],
    target_quality: f64,
    expected_volume_tokens: u64,
    n_resamples: usize,
    seed: u64,
) -> Result<Recommendation> {
    let teachers: Vec<&SystemProfile> = profiles
        .iter()
        .filter(|p| p.role == SystemRole::Teacher)
        .collect();
    let teacher = match teachers.len() {
        0 => return Err(Error::NoTeacherProfile),
        1 => teachers[0],
        _ => return Err(Error::MultipleTeacherProfiles),
    };
    for p in profiles {
        p.validate()?;
        if p.quality_scores.is_empty() {
            return Err(Error::MissingScores {
                system: p.name.clone(),
            });
        }
    }

    let mut baselines: Vec<&SystemProfile> = profiles
        .iter()
        .filter(|p| p.role == SystemRole::NoKd)
        .collect();
    if baselines.is_empty() {
        return Err(Error::NoBaselineProfile);
    }
    baselines.sort_by(|a, b| {
        b.mean_quality()
            .unwrap()
            .partial_cmp(&a.mean_quality().unwrap())
            .unwrap()
            .then(a.name.cmp(&b.name))
    });
    let baseline = baselines[0];
    let baseline_quality = baseline.mean_quality()?;

    let mut rationale = Vec::new();

    if baseline_quality >= target_quality {
        rationale.push(format!(
            "step 2: No-KD baseline '{}' (mean quality {baseline_quality:.4}) meets the target \
             {target_quality:.4}; no distillation needed",
            baseline.name
        ));
        return Ok(Recommendation {
            verdict: Verdict::UseNoKd,
            rationale,
            breakeven_tokens_vs_teacher: None,
            quality_gap_significant: false,
        });
    }
    rationale.push(format!(
        "step 2: No-KD baseline '{}' (mean quality {baseline_quality:.4}) misses the target \
         {target_quality:.4}; distillation considered",
        baseline.name
    ));

    let mut candidates: Vec<&SystemProfile> = Vec::new();
    for p in profiles.iter().filter(|p| p.role == SystemRole::KdStudent) {
        if p.mean_quality()? < target_quality {
            continue;
        }
        if significant_improvement(
            &p.quality_scores,
            &baseline.quality_scores,
            n_resamples,
            seed,
        )? {
            candidates.push(p);
        }
    }
    rationale.push(format!(
        "step 3: {} KD student(s) meet the target with a statistically significant gain over \
         the baseline",
        candidates.len()
    ));

    if candidates.is_empty() {
        rationale.push(
            "step 3: no qualifying student; the teacher is the only system meeting the target"
                .to_string(),
        );
        let teacher_significant = significant_improvement(
            &teacher.quality_scores,
            &baseline.quality_scores,
            n_resamples,
            seed,
        )?;
        return Ok(Recommendation {
            verdict: Verdict::UseTeacher,
            rationale,
            breakeven_tokens_vs_teacher: None,
            quality_gap_significant: teacher_significant,
        });
    }

    // Bootstrap CIs over the full profile set (one shared set of resample
    // index vectors) so the frontier points carry comparable uncertainty.
    let matrix: Vec<Vec<f64>> = profiles.iter().map(|p| p.quality_scores.clone()).collect();
    let cis = paired_bootstrap_ci(&matrix, n_resamples, DEFAULT_CONFIDENCE_LEVEL, seed)?;
    let ci_of = |name: &str| {
        profiles
            .iter()
            .position(|p| p.name == name)
            .map(|i| cis[i])
            .expect("candidate comes from profiles")
    };

    let points: Vec<FrontierPoint> = candidates
        .iter()
        .map(|p| {
            Ok(FrontierPoint {
                system_name: p.name.clone(),
                production_footprint_kgco2e: p.production_footprint_kgco2e,
                mean_quality: p.mean_quality()?,
                quality_ci: ci_of(&p.name),
                on_frontier: false,
            })
        })
        .collect::<Result<_>>()?;
    let marked = pareto_frontier(points);
    let pick_point = marked
        .iter()
        .find(|p| p.on_frontier)
        .expect("a nonempty set has a frontier");
    let pick = candidates
        .iter()
        .find(|p| p.name == pick_point.system_name)
        .expect("frontier point maps back to a candidate");
    rationale.push(format!(
        "step 4: '{}' is the minimum-footprint Pareto-optimal qualifying student \
         ({:.4} kgCO2e production)",
        pick.name, pick.production_footprint_kgco2e
    ));

    let be = break_even(pick, teacher);
    match be.relation {
        BreakEvenRelation::CrossesAt => {
            let x_star = be.breakeven_tokens.expect("crossing carries a volume");
            if x_star > expected_volume_tokens as f64 {
                rationale.push(format!(
                    "step 1: expected volume {expected_volume_tokens} tokens sits below the \
                     break-even of {x_star:.0} tokens vs the teacher; distillation does not \
                     amortize",
                ));
                Ok(Recommendation {
                    verdict: Verdict::UseTeacher,
                    rationale,
                    breakeven_tokens_vs_teacher: Some(x_star),
                    quality_gap_significant: true,
                })
            } else {
                rationale.push(format!(
                    "step 1: expected volume {expected_volume_tokens} tokens clears the \
                     break-even of {x_star:.0} tokens vs the teacher",
                ));
                Ok(Recommendation {
                    verdict: Verdict::UseKdStudent(pick.name.clone()),
                    rationale,
                    breakeven_tokens_vs_teacher: Some(x_star),
                    quality_gap_significant: true,
                })
            }
        }
        BreakEvenRelation::NeverCrossesADominates | BreakEvenRelation::Identical => {
            rationale.push(
                "step 1: the student is never costlier than the teacher at any volume".to_string(),
            );
            Ok(Recommendation {
                verdict: Verdict::UseKdStudent(pick.name.clone()),
                rationale,
                breakeven_tokens_vs_teacher: None,
                quality_gap_significant: true,
            })
        }
        BreakEvenRelation::NeverCrossesBDominates => {
            rationale.push(
                "step 1: the student never becomes cheaper than the teacher at any volume"
                    .to_string(),
            );
            Ok(Recommendation {
                verdict: Verdict::UseTeacher,
                rationale,
                breakeven_tokens_vs_teacher: None,
                quality_gap_significant: true,
            })
        }
    }
}
