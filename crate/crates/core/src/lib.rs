//! Life-cycle carbon accounting for knowledge-distillation pipelines.
//!
//! The crate converts phase-level compute measurements into operational plus
//! embodied carbon footprints, amortizes them over served inference volume,
//! extracts footprint/quality Pareto frontiers with bootstrap uncertainty,
//! runs one-way sensitivity sweeps over the emission parameters, and
//! reproduces the distillation loss/decoding math at desk scale to generate
//! verifiable compute traces.

pub mod accounting;
pub mod amortization;
pub mod error;
pub mod frontier;
pub mod kd;
pub mod sensitivity;
pub mod units;

pub use error::{Error, Result};
