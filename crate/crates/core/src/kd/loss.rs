//! Word-level distillation losses and token-selection strategies.

use crate::error::{Error, Result};
use crate::kd::PROB_FLOOR;
use crate::units::TokenDistribution;

fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Cross-entropy of a one-hot target against a prediction:
/// `-ln pred[target]`, with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy(target: &TokenDistribution, pred: &TokenDistribution) -> f64 {
    assert_eq!(
        target.vocab_size(),
        pred.vocab_size(),
        "target and prediction must share a vocabulary"
    );
    debug_assert!(
        target.is_one_hot(),
        "cross_entropy expects a one-hot target"
    );
    -floored_ln(pred.prob(target.argmax()))
}

/// KL divergence from the student to the teacher distribution:
/// `sum_v teacher[v] * (ln teacher[v] - ln student[v])`.
///
/// Terms where the teacher puts no mass contribute zero; student
/// probabilities are floored at [`PROB_FLOOR`] where the teacher has mass.
/// The result is clamped at zero to absorb rounding in near-equal pairs.
pub fn kl_divergence(teacher: &TokenDistribution, student: &TokenDistribution) -> f64 {
    assert_eq!(
        teacher.vocab_size(),
        student.vocab_size(),
        "teacher and student must share a vocabulary"
    );
    let mut sum = 0.0;
    for (t, s) in teacher.probs().iter().zip(student.probs()) {
        if *t > 0.0 {
            sum += t * (t.ln() - floored_ln(*s));
        }
    }
    sum.max(0.0)
}

/// Interpolated word-level distillation loss over a sequence:
/// `(1 - alpha) * sum_t CE(ref_t, student_t) + alpha * sum_{t in mask}
/// KL(teacher_t, student_t)`. An absent mask selects every position; the
/// mask applies to the distillation term only.
pub fn word_kd_loss(
    refs: &[TokenDistribution],
    teacher_dists: &[TokenDistribution],
    student_dists: &[TokenDistribution],
    alpha: f64,
    mask: Option<&[bool]>,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha { alpha });
    }
    let len = refs.len();
    if teacher_dists.len() != len {
        return Err(Error::LengthMismatch {
            expected: len,
            got: teacher_dists.len(),
        });
    }
    if student_dists.len() != len {
        return Err(Error::LengthMismatch {
            expected: len,
            got: student_dists.len(),
        });
    }
    if let Some(m) = mask {
        if m.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                got: m.len(),
            });
        }
    }

    let ce_sum: f64 = refs
        .iter()
        .zip(student_dists)
        .map(|(r, s)| cross_entropy(r, s))
        .sum();
    let kd_sum: f64 = teacher_dists
        .iter()
        .zip(student_dists)
        .enumerate()
        .filter(|(t, _)| mask.is_none_or(|m| m[*t]))
        .map(|(_, (t, s))| kl_divergence(t, s))
        .sum();
    Ok((1.0 - alpha) * ce_sum + alpha * kd_sum)
}

/// Which token positions receive distillation supervision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionStrategy {
    /// Supervise every position.
    All,
    /// Supervise the fraction `r` of positions where the student's
    /// cross-entropy against the reference is highest (a difficulty proxy).
    HardestFraction(f64),
    /// Supervise the fraction `r` of positions where the teacher's top-1
    /// probability is largest (its most confident predictions).
    TeacherTop1Margin(f64),
}

/// Builds the distillation mask for [`word_kd_loss`]. Fractions select
/// `ceil(r * T)` positions; ties break toward the earliest position.
pub fn selection_mask(
    strategy: SelectionStrategy,
    refs: &[TokenDistribution],
    teacher_dists: &[TokenDistribution],
    student_dists: &[TokenDistribution],
) -> Vec<bool> {
    let len = refs.len();
    let top_fraction = |r: f64, keys: Vec<f64>| -> Vec<bool> {
        assert!(r > 0.0 && r <= 1.0, "selection fraction must lie in (0, 1]");
        let keep = ((r * len as f64).ceil() as usize).min(len);
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| keys[b].partial_cmp(&keys[a]).unwrap().then(a.cmp(&b)));
        let mut mask = vec![false; len];
        for &i in order.iter().take(keep) {
            mask[i] = true;
        }
        mask
    };

    match strategy {
        SelectionStrategy::All => vec![true; len],
        SelectionStrategy::HardestFraction(r) => {
            let keys: Vec<f64> = refs
                .iter()
                .zip(student_dists)
                .map(|(rf, s)| cross_entropy(rf, s))
                .collect();
            top_fraction(r, keys)
        }
        SelectionStrategy::TeacherTop1Margin(r) => {
            let keys: Vec<f64> = teacher_dists.iter().map(|t| t.prob(t.argmax())).collect();
            top_fraction(r, keys)
        }
    }
}
