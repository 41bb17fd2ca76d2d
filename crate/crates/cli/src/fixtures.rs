//! Named toy scorer fixtures for the simulate command. Deterministic
//! parametric functions, no trained models: enough to exercise every loss
//! and decoding path with countable compute.

use kdlca::kd::{Scorer, TokenId};
use kdlca::units::TokenDistribution;

use crate::CliError;

pub const VOCAB_SIZE: usize = 6;
pub const EOS: TokenId = 0;

/// Concentrates `peak` mass on one source-dependent token per step and
/// emits end-of-sequence once the prefix reaches the source length, so the
/// generated length tracks the source length.
pub struct PeakedScorer {
    pub peak: f64,
    pub cost_units: f64,
}

impl PeakedScorer {
    fn favored(&self, source: &[TokenId], step: usize) -> TokenId {
        let h: usize = source
            .iter()
            .fold(0usize, |acc, &t| acc.wrapping_mul(31).wrapping_add(t + 1));
        1 + (h + step * 7) % (VOCAB_SIZE - 1)
    }
}

impl Scorer for PeakedScorer {
    fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    fn eos_token(&self) -> TokenId {
        EOS
    }

    fn next_token(&self, source: &[TokenId], prefix: &[TokenId]) -> TokenDistribution {
        let mut weights = vec![0.0; VOCAB_SIZE];
        if prefix.len() >= source.len().max(1) {
            weights[EOS] = self.peak;
            for w in weights.iter_mut().skip(1) {
                *w = (1.0 - self.peak) / (VOCAB_SIZE - 1) as f64;
            }
        } else {
            let favored = self.favored(source, prefix.len());
            let rest = (1.0 - self.peak) / (VOCAB_SIZE - 1) as f64;
            for (i, w) in weights.iter_mut().enumerate() {
                *w = if i == favored {
                    self.peak
                } else if i == EOS {
                    rest * 0.2
                } else {
                    rest
                };
            }
        }
        TokenDistribution::from_weights(&weights).unwrap()
    }

    fn per_token_cost_units(&self) -> f64 {
        self.cost_units
    }
}

/// Uniform over non-terminal tokens until the source length is reached,
/// then certain end-of-sequence. Exercises tie-breaking.
pub struct UniformScorer {
    pub cost_units: f64,
}

impl Scorer for UniformScorer {
    fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    fn eos_token(&self) -> TokenId {
        EOS
    }

    fn next_token(&self, source: &[TokenId], prefix: &[TokenId]) -> TokenDistribution {
        let mut weights = vec![0.0; VOCAB_SIZE];
        if prefix.len() >= source.len().max(1) {
            weights[EOS] = 1.0;
        } else {
            for w in weights.iter_mut().skip(1) {
                *w = 1.0;
            }
        }
        TokenDistribution::from_weights(&weights).unwrap()
    }

    fn per_token_cost_units(&self) -> f64 {
        self.cost_units
    }
}

/// Teacher and student scorers plus a default parallel corpus.
pub struct Fixture {
    pub teacher: Box<dyn Scorer>,
    pub student: Box<dyn Scorer>,
    pub sources: Vec<Vec<TokenId>>,
    pub refs: Vec<Vec<TokenId>>,
}

fn default_corpus() -> (Vec<Vec<TokenId>>, Vec<Vec<TokenId>>) {
    let sources = vec![vec![1, 2, 3], vec![4, 5], vec![2, 2, 4, 1]];
    let refs = vec![vec![3, 1, 2], vec![5, 4], vec![1, 4, 2, 2]];
    (sources, refs)
}

/// Resolves a fixture by name. The teacher is sharper than the student so
/// distillation losses and selection masks have structure to act on.
pub fn load_fixture(name: &str) -> Result<Fixture, CliError> {
    let (sources, refs) = default_corpus();
    match name {
        "peaked" => Ok(Fixture {
            teacher: Box::new(PeakedScorer {
                peak: 0.85,
                cost_units: 4.0,
            }),
            student: Box::new(PeakedScorer {
                peak: 0.55,
                cost_units: 1.0,
            }),
            sources,
            refs,
        }),
        "uniform" => Ok(Fixture {
            teacher: Box::new(UniformScorer { cost_units: 4.0 }),
            student: Box::new(UniformScorer { cost_units: 1.0 }),
            sources,
            refs,
        }),
        other => Err(CliError::Data(format!(
            "unknown fixture '{other}' (available: peaked, uniform)"
        ))),
    }
}
