//! Desk-scale knowledge-distillation math: word-level losses over token
//! distributions, beam-search decoding for synthetic targets, token-selection
//! variants, and compute counters that turn decoding/training structure into
//! measurement records for the accounting pipeline.

mod beam;
mod corpus;
mod loss;
mod trace;

pub use beam::{beam_search, beam_search_candidates, DecodeParams, Hypothesis, Scorer, TokenId};
pub use corpus::{build_seq_kd_corpus, token_f1, SeqKdPolicy, SyntheticCorpus};
pub use loss::{cross_entropy, kl_divergence, selection_mask, word_kd_loss, SelectionStrategy};
pub use trace::{trace_to_records, ComputeTrace, StepEnergy};

/// Probability floor applied inside logarithms. Keeps losses and hypothesis
/// scores finite on degenerate inputs while perturbing well-conditioned
/// values below test tolerances.
pub const PROB_FLOOR: f64 = 1e-12;
