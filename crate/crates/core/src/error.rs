//! Crate-wide error type.

use std::fmt;

use crate::units::Phase;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by accounting, fitting, selection, and decoding operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A measurement carries neither a direct energy reading nor an average power draw.
    MissingEnergySource,
    /// Wall-clock runtime must be strictly positive.
    NonPositiveRuntime { runtime_hours: f64 },
    /// A field that must be nonnegative was negative.
    NegativeValue { field: &'static str, value: f64 },
    /// A record references a device id absent from the device table.
    UnknownDevice { device_id: String },
    /// No active-utilization rate configured for this phase.
    MissingAur { phase: Phase },
    /// Emission parameters violate their domain (PUE >= 1, AUR in (0, 1], ...).
    InvalidParams { reason: String },
    /// The allocation policy needs a teacher ledger that was not supplied.
    MissingTeacherLedger { system: String },
    /// Fewer points than the fit requires.
    TooFewPoints { needed: usize, got: usize },
    /// Every leave-one-out candidate had identical token values; no line is determined.
    DegenerateFit,
    /// No teacher fit available at this batch size.
    MissingTeacherFit { batch_size: u64 },
    /// A negative-slope fit cannot enter the scaling table.
    NegativeSlopeFit { system: String, batch_size: u64 },
    /// Score rows do not all cover the same document set.
    RaggedMatrix { expected: usize, got: usize },
    /// A profile participates in quality comparisons without scores.
    MissingScores { system: String },
    /// Recommendation requires exactly one teacher profile.
    NoTeacherProfile,
    /// More than one profile claims the teacher role.
    MultipleTeacherProfiles,
    /// Recommendation requires at least one No-KD baseline.
    NoBaselineProfile,
    /// A sensitivity range violates the parameter's domain.
    RangeViolatesDomain { reason: String },
    /// Sequence lengths disagree.
    LengthMismatch { expected: usize, got: usize },
    /// Corpus policy needs one reference per source sentence.
    MissingReferences { expected: usize, got: usize },
    /// Interpolation weight outside [0, 1].
    InvalidAlpha { alpha: f64 },
    /// A probability vector failed normalization or positivity checks.
    InvalidDistribution { reason: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MissingEnergySource => {
                write!(f, "record has neither energy_kwh nor avg_power_kw")
            }
            Error::NonPositiveRuntime { runtime_hours } => {
                write!(f, "runtime must be positive, got {runtime_hours} h")
            }
            Error::NegativeValue { field, value } => {
                write!(f, "{field} must be nonnegative, got {value}")
            }
            Error::UnknownDevice { device_id } => write!(f, "unknown device id '{device_id}'"),
            Error::MissingAur { phase } => {
                write!(
                    f,
                    "no active-utilization rate configured for phase '{phase}'"
                )
            }
            Error::InvalidParams { reason } => write!(f, "invalid emission parameters: {reason}"),
            Error::MissingTeacherLedger { system } => {
                write!(
                    f,
                    "system '{system}' needs a teacher ledger for its allocation policy"
                )
            }
            Error::TooFewPoints { needed, got } => {
                write!(f, "fit needs at least {needed} points, got {got}")
            }
            Error::DegenerateFit => {
                write!(f, "all token values identical; no linear fit is determined")
            }
            Error::MissingTeacherFit { batch_size } => {
                write!(f, "no teacher fit at batch size {batch_size}")
            }
            Error::NegativeSlopeFit { system, batch_size } => {
                write!(
                    f,
                    "fit for '{system}' at batch size {batch_size} has negative slope"
                )
            }
            Error::RaggedMatrix { expected, got } => {
                write!(
                    f,
                    "score matrix is ragged: expected {expected} documents, got {got}"
                )
            }
            Error::MissingScores { system } => {
                write!(f, "system '{system}' has no quality scores")
            }
            Error::NoTeacherProfile => write!(f, "no teacher profile supplied"),
            Error::MultipleTeacherProfiles => write!(f, "more than one teacher profile supplied"),
            Error::NoBaselineProfile => write!(f, "no No-KD baseline profile supplied"),
            Error::RangeViolatesDomain { reason } => {
                write!(f, "sensitivity range violates parameter domain: {reason}")
            }
            Error::LengthMismatch { expected, got } => {
                write!(
                    f,
                    "sequence length mismatch: expected {expected}, got {got}"
                )
            }
            Error::MissingReferences { expected, got } => {
                write!(f, "policy needs {expected} references, got {got}")
            }
            Error::InvalidAlpha { alpha } => {
                write!(f, "interpolation weight must lie in [0, 1], got {alpha}")
            }
            Error::InvalidDistribution { reason } => {
                write!(f, "invalid token distribution: {reason}")
            }
        }
    }
}

impl std::error::Error for Error {}
