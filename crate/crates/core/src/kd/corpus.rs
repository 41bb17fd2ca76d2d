//! Synthetic-corpus construction for sequence-level distillation.

use crate::error::{Error, Result};
use crate::kd::beam::{beam_search_candidates, DecodeParams, Scorer, TokenId};
use crate::kd::trace::ComputeTrace;

/// How the teacher's beam output becomes a training target.
pub enum SeqKdPolicy<'a> {
    /// Take the best beam hypothesis as-is.
    Plain,
    /// Among the final beam candidates, take the one most similar to the
    /// reference.
    Inter {
        refs: &'a [Vec<TokenId>],
        sim: &'a dyn Fn(&[TokenId], &[TokenId]) -> f64,
    },
    /// Replace the beam output with the reference when its quality falls
    /// below the threshold.
    Rep {
        refs: &'a [Vec<TokenId>],
        quality: &'a dyn Fn(&[TokenId], &[TokenId]) -> f64,
        threshold: f64,
    },
}

/// Source/target token-id pairs produced by teacher decoding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticCorpus {
    pub pairs: Vec<(Vec<TokenId>, Vec<TokenId>)>,
}

impl SyntheticCorpus {
    /// Total token count over sources and targets.
    pub fn token_count(&self) -> u64 {
        self.pairs
            .iter()
            .map(|(s, t)| (s.len() + t.len()) as u64)
            .sum()
    }

    /// Line-oriented text form: one pair per line, source and target
    /// space-joined and separated by a tab.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (source, target) in &self.pairs {
            let s: Vec<String> = source.iter().map(ToString::to_string).collect();
            let t: Vec<String> = target.iter().map(ToString::to_string).collect();
            out.push_str(&s.join(" "));
            out.push('\t');
            out.push_str(&t.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (src, tgt) = line.split_once('\t').ok_or_else(|| Error::InvalidParams {
                reason: format!("corpus line {} has no tab separator", line_no + 1),
            })?;
            let parse = |side: &str| -> Result<Vec<TokenId>> {
                side.split_whitespace()
                    .map(|tok| {
                        tok.parse::<TokenId>().map_err(|_| Error::InvalidParams {
                            reason: format!("bad token id '{tok}' on line {}", line_no + 1),
                        })
                    })
                    .collect()
            };
            pairs.push((parse(src)?, parse(tgt)?));
        }
        Ok(Self { pairs })
    }
}

/// Bag-of-tokens F1 between two sequences; 1.0 for identical bags. A cheap
/// stand-in for sentence-level overlap metrics in desk-scale fixtures.
pub fn token_f1(a: &[TokenId], b: &[TokenId]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::BTreeMap::new();
    for &t in a {
        *counts.entry(t).or_insert(0i64) += 1;
    }
    let mut overlap = 0i64;
    for &t in b {
        if let Some(c) = counts.get_mut(&t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    let precision = overlap as f64 / b.len() as f64;
    let recall = overlap as f64 / a.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn strip_eos(mut tokens: Vec<TokenId>, eos: TokenId) -> Vec<TokenId> {
    if tokens.last() == Some(&eos) {
        tokens.pop();
    }
    tokens
}

/// Decodes every source with the teacher and applies the policy to pick the
/// training target. Targets are stored without the trailing end-of-sequence
/// token. All teacher decoding cost lands on `trace`.
pub fn build_seq_kd_corpus<S: Scorer + ?Sized>(
    scorer: &S,
    sources: &[Vec<TokenId>],
    decode: DecodeParams,
    policy: &SeqKdPolicy<'_>,
    trace: &mut ComputeTrace,
) -> Result<SyntheticCorpus> {
    let refs_for = |refs: &[Vec<TokenId>]| -> Result<()> {
        if refs.len() != sources.len() {
            return Err(Error::MissingReferences {
                expected: sources.len(),
                got: refs.len(),
            });
        }
        Ok(())
    };
    match policy {
        SeqKdPolicy::Plain => {}
        SeqKdPolicy::Inter { refs, .. } => refs_for(refs)?,
        SeqKdPolicy::Rep { refs, .. } => refs_for(refs)?,
    }

    let eos = scorer.eos_token();
    let mut pairs = Vec::with_capacity(sources.len());
    for (i, source) in sources.iter().enumerate() {
        let candidates = beam_search_candidates(scorer, source, decode, trace);
        let target = match policy {
            SeqKdPolicy::Plain => strip_eos(candidates[0].tokens.clone(), eos),
            SeqKdPolicy::Inter { refs, sim } => {
                let reference = &refs[i];
                candidates
                    .iter()
                    .map(|hyp| strip_eos(hyp.tokens.clone(), eos))
                    .max_by(|a, b| {
                        sim(a, reference)
                            .partial_cmp(&sim(b, reference))
                            .expect("similarities are finite")
                            // Ties keep the higher-ranked beam candidate.
                            .then(std::cmp::Ordering::Less)
                    })
                    .expect("beam is nonempty")
            }
            SeqKdPolicy::Rep {
                refs,
                quality,
                threshold,
            } => {
                let reference = &refs[i];
                let best = strip_eos(candidates[0].tokens.clone(), eos);
                if quality(&best, reference) < *threshold {
                    reference.clone()
                } else {
                    best
                }
            }
        };
        pairs.push((source.clone(), target));
    }
    Ok(SyntheticCorpus { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kd::beam::beam_search;
    use crate::units::{Phase, TokenDistribution};

    fn trace() -> ComputeTrace {
        ComputeTrace::new(Phase::Distill)
    }

    fn decode(beam_width: usize) -> DecodeParams {
        DecodeParams {
            beam_width,
            max_len: 6,
            length_penalty: 0.0,
        }
    }

    /// Emits tokens 1, 2 with fixed bias, then end-of-sequence at depth 2.
    struct TwoStep;

    impl Scorer for TwoStep {
        fn vocab_size(&self) -> usize {
            3
        }
        fn eos_token(&self) -> TokenId {
            0
        }
        fn next_token(&self, _source: &[TokenId], prefix: &[TokenId]) -> TokenDistribution {
            if prefix.len() >= 2 {
                TokenDistribution::new(vec![0.98, 0.01, 0.01]).unwrap()
            } else {
                TokenDistribution::new(vec![0.02, 0.59, 0.39]).unwrap()
            }
        }
    }

    #[test]
    fn plain_policy_takes_the_beam_output() {
        let sources = vec![vec![1, 2]];
        let mut t = trace();
        let corpus =
            build_seq_kd_corpus(&TwoStep, &sources, decode(2), &SeqKdPolicy::Plain, &mut t)
                .unwrap();
        assert_eq!(corpus.pairs.len(), 1);
        let mut t2 = trace();
        let best = beam_search(&TwoStep, &sources[0], decode(2), &mut t2);
        assert_eq!(corpus.pairs[0].1, strip_eos(best.tokens, 0));
    }

    #[test]
    fn inter_policy_prefers_the_reference_matching_candidate() {
        // [1, 1] is a valid but non-best beam candidate; with it as the
        // reference, any sane similarity must pick it over [1, 2]/[2, 1].
        let sources = vec![vec![1, 2]];
        let refs = vec![vec![1, 1]];
        let mut t = trace();
        let corpus = build_seq_kd_corpus(
            &TwoStep,
            &sources,
            decode(4),
            &SeqKdPolicy::Inter {
                refs: &refs,
                sim: &token_f1,
            },
            &mut t,
        )
        .unwrap();
        assert_eq!(corpus.pairs[0].1, vec![1, 1]);
    }

    #[test]
    fn rep_policy_replaces_everything_under_a_high_threshold() {
        let sources = vec![vec![1, 2], vec![2, 1]];
        let refs = vec![vec![9, 9], vec![8, 8]];
        let mut t = trace();
        let corpus = build_seq_kd_corpus(
            &TwoStep,
            &sources,
            decode(2),
            &SeqKdPolicy::Rep {
                refs: &refs,
                quality: &token_f1,
                threshold: 2.0,
            },
            &mut t,
        )
        .unwrap();
        let targets: Vec<Vec<TokenId>> = corpus.pairs.iter().map(|(_, t)| t.clone()).collect();
        assert_eq!(targets, refs);
    }

    #[test]
    fn missing_references_rejected() {
        let sources = vec![vec![1], vec![2]];
        let refs = vec![vec![1]];
        let mut t = trace();
        let err = build_seq_kd_corpus(
            &TwoStep,
            &sources,
            decode(2),
            &SeqKdPolicy::Inter {
                refs: &refs,
                sim: &token_f1,
            },
            &mut t,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::MissingReferences {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn corpus_round_trips_through_tsv() {
        let corpus = SyntheticCorpus {
            pairs: vec![(vec![1, 2, 3], vec![4, 5]), (vec![7], vec![])],
        };
        let text = corpus.to_tsv();
        assert_eq!(SyntheticCorpus::from_tsv(&text).unwrap(), corpus);
    }

    #[test]
    fn token_f1_extremes() {
        assert_eq!(token_f1(&[1, 2, 3], &[1, 2, 3]), 1.0);
        assert_eq!(token_f1(&[1, 2], &[3, 4]), 0.0);
        assert!(token_f1(&[1, 2, 3], &[1, 2, 4]) > 0.5);
    }

    #[test]
    fn concurrent_workers_with_private_traces_match_sequential_build() {
        // Each worker decodes a slice of the sources with its own trace;
        // merging afterwards must reproduce the sequential counts and the
        // same corpus regardless of scheduling.
        let sources: Vec<Vec<TokenId>> =
            (0..8).map(|i| vec![1 + (i % 2), 2, 1 + (i % 3)]).collect();
        let mut sequential_trace = trace();
        let sequential = build_seq_kd_corpus(
            &TwoStep,
            &sources,
            decode(3),
            &SeqKdPolicy::Plain,
            &mut sequential_trace,
        )
        .unwrap();

        let scorer = &TwoStep;
        let (left, right) = sources.split_at(4);
        let (left_out, right_out) = std::thread::scope(|s| {
            let worker = |chunk: &[Vec<TokenId>]| {
                let mut t = trace();
                let corpus =
                    build_seq_kd_corpus(scorer, chunk, decode(3), &SeqKdPolicy::Plain, &mut t)
                        .unwrap();
                (corpus, t)
            };
            let lh = s.spawn(move || worker(left));
            let rh = s.spawn(move || worker(right));
            (lh.join().unwrap(), rh.join().unwrap())
        });

        let mut merged_trace = left_out.1;
        merged_trace.merge(&right_out.1);
        assert_eq!(merged_trace, sequential_trace);

        let mut merged_pairs = left_out.0.pairs;
        merged_pairs.extend(right_out.0.pairs);
        assert_eq!(merged_pairs, sequential.pairs);
    }

    #[test]
    fn trace_counts_accumulate_per_sentence() {
        let sources = vec![vec![1, 2], vec![2, 1], vec![1, 1, 1]];
        let mut whole = trace();
        build_seq_kd_corpus(
            &TwoStep,
            &sources,
            decode(3),
            &SeqKdPolicy::Plain,
            &mut whole,
        )
        .unwrap();
        let mut summed = 0;
        for s in &sources {
            let mut per = trace();
            build_seq_kd_corpus(
                &TwoStep,
                std::slice::from_ref(s),
                decode(3),
                &SeqKdPolicy::Plain,
                &mut per,
            )
            .unwrap();
            summed += per.teacher_token_steps;
        }
        assert_eq!(whole.teacher_token_steps, summed);
    }
}
