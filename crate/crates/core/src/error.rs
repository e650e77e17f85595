//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, engine evolution, and oracles.
#[derive(Debug, Error)]
pub enum Error {
    /// A spin position is on or outside the loop boundary, where the
    /// perpendicular-distance field model diverges or changes sign.
    #[error(
        "position ({x:.3e}, {y:.3e}) m is not strictly inside the loop (half-width {r0:.3e} m)"
    )]
    PositionOutsideLoop { x: f64, y: f64, r0: f64 },

    /// A quantity that must be strictly positive was not.
    #[error("{name} must be strictly positive, got {value:.6e}")]
    NonPositive { name: &'static str, value: f64 },

    /// A convention name did not match any known variant.
    #[error("unknown {kind} \"{value}\" (allowed: {allowed})")]
    UnknownConvention {
        kind: &'static str,
        value: String,
        allowed: &'static str,
    },

    /// A rate or other nonnegative quantity was negative.
    #[error("{name} must be nonnegative, got {value:.6e}")]
    Negative { name: &'static str, value: f64 },

    /// A probability left [0, 1] by more than the allowed slack.
    #[error("{name} = {value:.6e} is not a probability")]
    ProbabilityRange { name: &'static str, value: f64 },

    /// Thermal baseline already at or past the unpolarized point, so the
    /// polarization-gain ratio is undefined.
    #[error("thermal baseline p = {p_thermal:.6e} has no polarization contrast (must be < 1/2)")]
    NoBaselineContrast { p_thermal: f64 },

    /// An ensemble with zero spins cannot be evolved.
    #[error("ensemble must contain at least one spin")]
    EmptyEnsemble,

    /// Per-spin arrays disagree on the number of spins.
    #[error("{name}: expected length {expected}, got {got}")]
    LengthMismatch {
        name: &'static str,
        expected: usize,
        got: usize,
    },

    /// A spin or qubit index is out of range.
    #[error("{name} index {index} out of range for {len}")]
    IndexOutOfRange {
        name: &'static str,
        index: usize,
        len: usize,
    },

    /// A (j, m) label is not a valid angular-momentum sector for this
    /// ensemble size (stored as twice the quantum numbers).
    #[error("invalid sector for {m_spins} spins: 2j = {j2}, 2m = {m2}")]
    InvalidSector { m_spins: usize, j2: i64, m2: i64 },

    /// A matrix failed density-matrix validation.
    #[error("invalid density matrix: {reason}")]
    InvalidDensityMatrix { reason: String },

    /// A sector-population table failed validation.
    #[error("invalid sector state: {reason}")]
    InvalidSectorState { reason: String },

    /// An evolution schedule is inconsistent.
    #[error("invalid schedule: {reason}")]
    InvalidSchedule { reason: String },

    /// A runtime invariant (trace, positivity) was breached during a
    /// protocol run; the run aborts rather than reporting garbage.
    #[error("invariant breach at step {step}: {what}")]
    InvariantBreach { step: usize, what: String },

    /// A matrix that must be Hermitian is not.
    #[error("matrix is not Hermitian: max |A - A†| = {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },

    /// Evolution produced non-finite entries.
    #[error("non-finite values encountered in {context}")]
    NumericalOverflow { context: &'static str },

    /// The request is outside the supported domain of this routine.
    #[error("unsupported: {what}")]
    Unsupported { what: String },

    /// Input to a brute-force oracle is not confined to a single
    /// magnetization column.
    #[error("oracle input must be supported on a single magnetization column: {detail}")]
    NotSingleColumn { detail: String },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
