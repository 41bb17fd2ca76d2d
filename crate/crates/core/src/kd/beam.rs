//! Beam-search decoding over an abstract next-token scorer.

use crate::kd::trace::ComputeTrace;
use crate::kd::PROB_FLOOR;
use crate::units::TokenDistribution;

pub type TokenId = usize;

/// An abstract next-token model: given source tokens and a generated prefix,
/// it yields the distribution over the next token. Implementations must be
/// deterministic and usable from concurrent workers.
pub trait Scorer: Sync {
    fn vocab_size(&self) -> usize;
    /// Token that terminates a hypothesis.
    fn eos_token(&self) -> TokenId;
    fn next_token(&self, source: &[TokenId], prefix: &[TokenId]) -> TokenDistribution;
    /// Relative compute cost of one token step on this model.
    fn per_token_cost_units(&self) -> f64 {
        1.0
    }
}

/// One partial or completed decoding hypothesis. `log_prob` accumulates the
/// per-step log probabilities of its tokens (floored at [`PROB_FLOOR`]), so
/// it is never positive. The end-of-sequence token, when emitted, is part of
/// `tokens` and of the length used by the penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Length-penalized score `log_prob / len^penalty`; a penalty of zero
    /// ranks by raw log probability.
    pub fn score(&self, length_penalty: f64) -> f64 {
        let len = self.tokens.len().max(1) as f64;
        self.log_prob / len.powf(length_penalty)
    }
}

/// Decoding controls shared by [`beam_search`] and corpus construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub beam_width: usize,
    pub max_len: usize,
    pub length_penalty: f64,
}

/// In-search ranking: accumulated log probability, ties broken toward the
/// lexicographically smallest token sequence.
fn by_log_prob(a: &Hypothesis, b: &Hypothesis) -> std::cmp::Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .expect("log probs are finite")
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Final ranking: completed hypotheses first, then by length-penalized
/// score, same lexicographic tie-break.
fn by_final_score(length_penalty: f64) -> impl Fn(&Hypothesis, &Hypothesis) -> std::cmp::Ordering {
    move |a, b| {
        b.finished
            .cmp(&a.finished)
            .then_with(|| {
                b.score(length_penalty)
                    .partial_cmp(&a.score(length_penalty))
                    .expect("scores are finite")
            })
            .then_with(|| a.tokens.cmp(&b.tokens))
    }
}

/// Runs beam search and returns the final beam, best hypothesis first.
///
/// Each step expands every unfinished hypothesis over the full vocabulary
/// and keeps the top `beam_width` candidates by accumulated log probability;
/// hypotheses that emit the end-of-sequence token freeze and keep competing
/// for beam slots. The search stops when the whole beam is frozen or
/// `max_len` is reached.
///
/// Compute accounting on `trace`: one teacher step per source token for the
/// encoder pass, then `beam_width` teacher steps per expansion step.
pub fn beam_search_candidates<S: Scorer + ?Sized>(
    scorer: &S,
    source: &[TokenId],
    params: DecodeParams,
    trace: &mut ComputeTrace,
) -> Vec<Hypothesis> {
    assert!(params.beam_width >= 1, "beam width must be at least 1");
    assert!(params.max_len >= 1, "max_len must be at least 1");

    trace.add_teacher_steps(source.len() as u64);

    let eos = scorer.eos_token();
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];

    for _ in 0..params.max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        trace.add_teacher_steps(params.beam_width as u64);

        let mut candidates: Vec<Hypothesis> = beam.iter().filter(|h| h.finished).cloned().collect();
        for hyp in beam.iter().filter(|h| !h.finished) {
            let dist = scorer.next_token(source, &hyp.tokens);
            debug_assert_eq!(dist.vocab_size(), scorer.vocab_size());
            for (token, &p) in dist.probs().iter().enumerate() {
                let mut tokens = hyp.tokens.clone();
                tokens.push(token);
                candidates.push(Hypothesis {
                    tokens,
                    log_prob: hyp.log_prob + p.max(PROB_FLOOR).ln(),
                    finished: token == eos,
                });
            }
        }
        candidates.sort_by(by_log_prob);
        candidates.truncate(params.beam_width);
        beam = candidates;
    }

    beam.sort_by(by_final_score(params.length_penalty));
    beam
}

/// Returns the highest-scoring completed hypothesis, or, when nothing
/// completes within `max_len`, the best unfinished one with
/// `finished == false` as the warning flag.
pub fn beam_search<S: Scorer + ?Sized>(
    scorer: &S,
    source: &[TokenId],
    params: DecodeParams,
    trace: &mut ComputeTrace,
) -> Hypothesis {
    beam_search_candidates(scorer, source, params, trace)
        .into_iter()
        .next()
        .expect("beam is nonempty")
}
