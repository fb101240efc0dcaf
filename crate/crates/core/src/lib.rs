//! Compression of finite Markov target problems.
//!
//! A *target problem* is a finite row-stochastic chain together with a
//! distinguished absorbing target set `T` and a discount factor `beta` in
//! (0, 1). The question the chain answers is "with what probability am I in
//! the target n steps from now?", and two chains are close when those
//! probabilities are close for every start state, with step `n` discounted
//! by `beta^n`.
//!
//! The crate compresses such problems in three stages:
//!
//! 1. [`refinement`] — split the state space relative to `T` by grouping
//!    states whose block-restricted transition rows agree up to a dyadic
//!    epsilon-cut ([`equivalence`]). A non-increasing resolution schedule
//!    produces a filtration of partitions; a trailing resolution of `0`
//!    drives the partition to the coarsest exact fixpoint.
//! 2. [`aggregation`] — average the original rows over each block under a
//!    strictly positive state measure, producing a block-level chain.
//! 3. [`metrics`] — evaluate the discounted target pseudometric between the
//!    original chain and a block-level chain through the block map, together
//!    with a certified truncation bound for the series tail.
//!
//! [`generators`] builds the standard test families (coupon-collector
//! chains, block-lifted chains, seeded sparse random chains), and
//! [`chain`] holds the shared data types.

pub mod aggregation;
pub mod chain;
pub mod equivalence;
pub mod error;
pub mod generators;
pub mod metrics;
pub mod refinement;

pub use aggregation::{
    aggregate, geometric_block_measure, lift_partition, uniform_measure, AggregatedTargetProblem,
    DENSE_BLOCK_LIMIT,
};
pub use chain::{
    Filtration, FiltrationStep, Partition, StateMeasure, TargetProblem, Violation, ROW_SUM_TOL,
};
pub use equivalence::{exact_key, ClassKey, EpsilonCut};
pub use error::{Error, Result};
pub use generators::{coupon_collector, lifted_chain, random_chain};
pub use metrics::{
    distance_d, hitting_profile, hitting_profile_aggregated, state_pseudometric, tail_bound,
    truncation_horizon, tv_distance, DistanceReport, HittingProfile,
};
pub use refinement::{
    exact_fixpoint, initial_partition, is_compatible, refine_once, run_target_algorithm,
};
