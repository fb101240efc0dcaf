//! Crate-wide error type.
//!
//! Diagnostic *violations* found by [`crate::TargetProblem::validate`] are a
//! separate type ([`crate::Violation`]): an invalid chain can be held in
//! memory and inspected, while the errors below are returned by operations
//! that refuse to run on unusable arguments.

use thiserror::Error;

/// Errors produced by constructors and operations in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A state index does not name a state.
    #[error("state {state} out of range for a chain with {n_states} states")]
    StateOutOfRange { state: usize, n_states: usize },

    /// A transition references a column outside the state space.
    #[error("row {row}: column {col} out of range for {n_states} states")]
    ColumnOutOfRange {
        row: usize,
        col: usize,
        n_states: usize,
    },

    /// The chain has no states at all.
    #[error("a chain needs at least one state")]
    NoStates,

    /// State indices are stored compactly; larger spaces are out of scope.
    #[error("state spaces with more than 2^32 - 1 states are not supported")]
    TooManyStates,

    /// Wrong number of rows, weights, or coordinates for the state count.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// Discount factor outside the open unit interval.
    #[error("discount factor must lie in (0, 1), got {0}")]
    InvalidBeta(f64),

    /// Resolution of an epsilon-cut must be positive and finite.
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),

    /// Grid width for exact keys must be non-negative and finite.
    #[error("delta must be non-negative and finite, got {0}")]
    InvalidDelta(f64),

    /// Probability vectors must have at least one coordinate.
    #[error("empty probability vector")]
    EmptyVector,

    /// Partitions may not contain empty blocks (or unused block labels).
    #[error("block {0} is empty")]
    EmptyBlock(usize),

    /// A state appeared in more than one block.
    #[error("state {0} appears in more than one block")]
    OverlappingBlocks(usize),

    /// A state is missing from every block.
    #[error("state {0} is not covered by any block")]
    UncoveredState(usize),

    /// Refinement schedule was empty.
    #[error("refinement schedule is empty")]
    EmptySchedule,

    /// Schedule entries must be positive, finite, and non-increasing, with
    /// `0` allowed only as the final entry.
    #[error(
        "schedule entry {position} ({value}) must be positive, finite, and not exceed its \
         predecessor (0 is allowed only as the final entry)"
    )]
    BadScheduleEntry { position: usize, value: f64 },

    /// A supposedly finer partition has a block straddling coarse blocks.
    #[error("fine block {fine_block} straddles more than one coarse block")]
    NotARefinement { fine_block: usize },

    /// Filtration steps must refine their predecessor with non-increasing
    /// epsilons over a fixed state space.
    #[error("filtration step {step}: {reason}")]
    BadFiltrationStep { step: usize, reason: &'static str },

    /// Filtration needs at least one step.
    #[error("filtration has no steps")]
    EmptyFiltration,

    /// Measure weights must be strictly positive and finite.
    #[error("measure weight {index} is {value}; weights must be positive and finite")]
    BadWeight { index: usize, value: f64 },

    /// Measure weights must sum to 1.
    #[error("measure weights sum to {sum}, expected 1 within 1e-12")]
    UnnormalizedMeasure { sum: f64 },

    /// Two chains that must share a discount factor do not.
    #[error("discount factors differ: {left} vs {right}")]
    BetaMismatch { left: f64, right: f64 },

    /// Tail tolerance for series truncation must be positive.
    #[error("tail tolerance must be positive and finite, got {0}")]
    InvalidTailTolerance(f64),

    /// Horizon of a hitting profile must be at least 1.
    #[error("horizon must be at least 1")]
    ZeroHorizon,

    /// The target set is not a union of partition blocks.
    #[error("target set is not a union of partition blocks")]
    TargetNotBlockUnion,

    /// The aggregated chain has no single block equal to the target set.
    #[error("no aggregated block coincides with the target set")]
    NoTargetBlock,

    /// Coupon-collector size outside the supported range.
    #[error("coupon count must lie in 2..=24, got {0}")]
    CouponCountRange(usize),

    /// A probability parameter is invalid.
    #[error("probability {index} is {value}; must be positive and finite")]
    BadProbability { index: usize, value: f64 },

    /// A probability vector that should sum to 1 does not.
    #[error("probabilities sum to {sum}, expected 1 within 1e-12")]
    UnnormalizedProbabilities { sum: f64 },

    /// A stochastic-matrix row does not sum to 1.
    #[error("row {row} sums to {sum}, expected 1 within 1e-12")]
    RowNotStochastic { row: usize, sum: f64 },

    /// Matrix entry outside [0, 1].
    #[error("row {row}, column {col}: entry {value} outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },

    /// Lifted chains require an absorbing target block.
    #[error("block matrix row 0 must keep all mass on block 0 (absorbing target)")]
    TargetRowNotAbsorbing,

    /// A block-lifting request needs at least the target and one more block.
    #[error("need at least two blocks (target and complement), got {0}")]
    TooFewBlocks(usize),

    /// Requested block size unusable.
    #[error("block size {index} is {size}; sizes must lie in 1..={max}")]
    BadBlockSize {
        index: usize,
        size: usize,
        max: usize,
    },

    /// Random-chain density outside (0, 1].
    #[error("density must lie in (0, 1], got {0}")]
    InvalidDensity(f64),

    /// Random-chain target size out of range.
    #[error("target size must satisfy 1 <= size < n_states, got {size} for {n_states} states")]
    InvalidTargetSize { size: usize, n_states: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
