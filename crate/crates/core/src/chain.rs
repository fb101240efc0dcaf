//! Shared data types: chains, partitions, filtrations, and state measures.
//!
//! A [`TargetProblem`] is a finite row-stochastic chain stored sparsely
//! (per-row `(column, probability)` pairs in strictly increasing column
//! order), a non-empty proper target set, and a discount factor in (0, 1).
//! Row sums must equal 1 within [`ROW_SUM_TOL`] and are never silently
//! renormalized; [`TargetProblem::validate`] reports every violation
//! instead, so invalid data can be held and inspected but the numeric
//! operations of this crate assume a valid problem.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Absolute tolerance on sums that must equal 1 (row sums, measure totals).
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A finite row-stochastic chain with a distinguished target set and a
/// discount factor.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetProblem {
    n_states: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    target: Vec<u32>,
    in_target: Vec<bool>,
    beta: f64,
}

impl TargetProblem {
    /// Builds a chain from sparse rows.
    ///
    /// Only structural soundness is enforced here (indices in range, one row
    /// per state); stochasticity, row ordering, and target shape are
    /// diagnosed by [`validate`](Self::validate). The target list is sorted
    /// and deduplicated.
    pub fn new(
        n_states: usize,
        rows: Vec<Vec<(usize, f64)>>,
        target: Vec<usize>,
        beta: f64,
    ) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::NoStates);
        }
        if n_states > u32::MAX as usize {
            return Err(Error::TooManyStates);
        }
        if rows.len() != n_states {
            return Err(Error::LengthMismatch {
                expected: n_states,
                got: rows.len(),
            });
        }
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n_states + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (x, row) in rows.into_iter().enumerate() {
            for (col, val) in row {
                if col >= n_states {
                    return Err(Error::ColumnOutOfRange {
                        row: x,
                        col,
                        n_states,
                    });
                }
                cols.push(col as u32);
                vals.push(val);
            }
            row_ptr.push(cols.len());
        }
        let mut target_sorted = Vec::with_capacity(target.len());
        for t in target {
            if t >= n_states {
                return Err(Error::StateOutOfRange {
                    state: t,
                    n_states,
                });
            }
            target_sorted.push(t as u32);
        }
        target_sorted.sort_unstable();
        target_sorted.dedup();
        let mut in_target = vec![false; n_states];
        for &t in &target_sorted {
            in_target[t as usize] = true;
        }
        Ok(Self {
            n_states,
            row_ptr,
            cols,
            vals,
            target: target_sorted,
            in_target,
            beta,
        })
    }

    /// Builds a chain from a dense matrix, dropping exact zeros.
    pub fn from_dense(matrix: &[Vec<f64>], target: &[usize], beta: f64) -> Result<Self> {
        let n = matrix.len();
        let mut rows = Vec::with_capacity(n);
        for row in matrix {
            if row.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            rows.push(
                row.iter()
                    .enumerate()
                    .filter(|&(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect(),
            );
        }
        Self::new(n, rows, target.to_vec(), beta)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Sorted target states.
    pub fn target(&self) -> &[u32] {
        &self.target
    }

    pub fn is_target(&self, x: usize) -> bool {
        self.in_target[x]
    }

    /// Sparse row of state `x` as parallel `(columns, probabilities)` slices.
    pub fn row(&self, x: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[x];
        let hi = self.row_ptr[x + 1];
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    /// Transition probability `P(x, {y})`; zero when the entry is absent.
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        let (cols, vals) = self.row(x);
        cols.iter()
            .position(|&c| c as usize == y)
            .map_or(0.0, |i| vals[i])
    }

    /// Number of stored transitions.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Reports every invariant violation: row sums off by more than
    /// [`ROW_SUM_TOL`], entries outside [0, 1], rows out of column order,
    /// an empty target or empty complement, and a discount factor outside
    /// (0, 1). Returns an empty list for a valid problem.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for x in 0..self.n_states {
            let (cols, vals) = self.row(x);
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                out.push(Violation::RowOrder { row: x });
            }
            let mut sum = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    out.push(Violation::EntryRange {
                        row: x,
                        col: c as usize,
                        value: v,
                    });
                }
                sum += v;
            }
            if !(sum - 1.0).abs().le(&ROW_SUM_TOL) {
                out.push(Violation::RowSum { row: x, sum });
            }
        }
        if self.target.is_empty() {
            out.push(Violation::EmptyTarget);
        } else if self.target.len() == self.n_states {
            out.push(Violation::EmptyComplement);
        }
        if !self.beta.is_finite() || self.beta <= 0.0 || self.beta >= 1.0 {
            out.push(Violation::BetaRange { beta: self.beta });
        }
        out
    }

    /// Row of `x` restricted to partition blocks: coordinate `j` is
    /// `P(x, block j)`, accumulated in column order.
    pub fn restrict_row(&self, x: usize, partition: &Partition) -> Result<Vec<f64>> {
        if x >= self.n_states {
            return Err(Error::StateOutOfRange {
                state: x,
                n_states: self.n_states,
            });
        }
        if partition.n_states() != self.n_states {
            return Err(Error::LengthMismatch {
                expected: self.n_states,
                got: partition.n_states(),
            });
        }
        let mut out = Vec::new();
        self.restrict_into(x, partition, &mut out);
        Ok(out)
    }

    /// Allocation-free core of [`restrict_row`](Self::restrict_row).
    pub(crate) fn restrict_into(&self, x: usize, partition: &Partition, out: &mut Vec<f64>) {
        out.clear();
        out.resize(partition.n_blocks(), 0.0);
        let (cols, vals) = self.row(x);
        for (&c, &v) in cols.iter().zip(vals) {
            out[partition.block_of(c as usize)] += v;
        }
    }

    /// Matrix-vector product `out = P v` (one backward step of the hitting
    /// recursion). Rows are processed independently, so results do not
    /// depend on the number of threads.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.n_states, "vector length mismatch");
        assert_eq!(out.len(), self.n_states, "output length mismatch");
        out.par_iter_mut().enumerate().for_each(|(x, o)| {
            let (cols, vals) = self.row(x);
            let mut acc = 0.0;
            for (&c, &p) in cols.iter().zip(vals) {
                acc += p * v[c as usize];
            }
            *o = acc;
        });
    }

    /// One-step hitting vector: entry `x` is `P(x, T)`.
    pub fn target_hit(&self) -> Vec<f64> {
        (0..self.n_states)
            .into_par_iter()
            .map(|x| {
                let (cols, vals) = self.row(x);
                let mut acc = 0.0;
                for (&c, &p) in cols.iter().zip(vals) {
                    if self.in_target[c as usize] {
                        acc += p;
                    }
                }
                acc
            })
            .collect()
    }
}

/// A single invariant violation found by [`TargetProblem::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Row sum differs from 1 by more than [`ROW_SUM_TOL`].
    RowSum { row: usize, sum: f64 },
    /// An entry lies outside [0, 1] (or is not finite).
    EntryRange { row: usize, col: usize, value: f64 },
    /// Columns of a row are not strictly increasing.
    RowOrder { row: usize },
    /// The target set is empty.
    EmptyTarget,
    /// The target set covers every state.
    EmptyComplement,
    /// Discount factor outside (0, 1).
    BetaRange { beta: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Violation::EntryRange { row, col, value } => {
                write!(f, "row {row}: transition to {col} has probability {value} outside [0, 1]")
            }
            Violation::RowOrder { row } => {
                write!(f, "row {row}: columns not strictly increasing")
            }
            Violation::EmptyTarget => write!(f, "target set is empty"),
            Violation::EmptyComplement => write!(f, "target complement is empty"),
            Violation::BetaRange { beta } => {
                write!(f, "discount factor {beta} outside (0, 1)")
            }
        }
    }
}

/// An ordered partition of `{0, .., n_states - 1}` into non-empty, disjoint,
/// covering blocks; each block is kept sorted ascending.
///
/// Partitions produced by the refinement algorithm are in *canonical order*:
/// the target block first, remaining blocks ascending by smallest member.
/// The type itself does not impose an order on blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<u32>>,
    block_of: Vec<u32>,
}

impl Partition {
    /// Builds a partition from block lists, sorting each block.
    pub fn new(blocks: Vec<Vec<usize>>, n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::NoStates);
        }
        if n_states > u32::MAX as usize {
            return Err(Error::TooManyStates);
        }
        let mut block_of = vec![u32::MAX; n_states];
        let mut sorted_blocks = Vec::with_capacity(blocks.len());
        for (b, block) in blocks.into_iter().enumerate() {
            if block.is_empty() {
                return Err(Error::EmptyBlock(b));
            }
            let mut converted = Vec::with_capacity(block.len());
            for x in block {
                if x >= n_states {
                    return Err(Error::StateOutOfRange {
                        state: x,
                        n_states,
                    });
                }
                if block_of[x] != u32::MAX {
                    return Err(Error::OverlappingBlocks(x));
                }
                block_of[x] = b as u32;
                converted.push(x as u32);
            }
            converted.sort_unstable();
            sorted_blocks.push(converted);
        }
        if let Some(x) = block_of.iter().position(|&b| b == u32::MAX) {
            return Err(Error::UncoveredState(x));
        }
        Ok(Self {
            blocks: sorted_blocks,
            block_of,
        })
    }

    /// Internal constructor for blocks already known to be sorted, disjoint,
    /// and covering.
    pub(crate) fn from_raw(blocks: Vec<Vec<u32>>, n_states: usize) -> Self {
        let mut block_of = vec![u32::MAX; n_states];
        for (b, block) in blocks.iter().enumerate() {
            debug_assert!(!block.is_empty());
            debug_assert!(block.windows(2).all(|w| w[0] < w[1]));
            for &x in block {
                debug_assert_eq!(block_of[x as usize], u32::MAX);
                block_of[x as usize] = b as u32;
            }
        }
        debug_assert!(block_of.iter().all(|&b| b != u32::MAX));
        Self { blocks, block_of }
    }

    /// The all-singletons partition.
    pub fn singletons(n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::NoStates);
        }
        if n_states > u32::MAX as usize {
            return Err(Error::TooManyStates);
        }
        let blocks = (0..n_states as u32).map(|x| vec![x]).collect();
        let block_of = (0..n_states as u32).collect();
        Ok(Self { blocks, block_of })
    }

    /// Rebuilds a partition from a flat state-to-block assignment. Labels
    /// must be dense: every label in `0..=max` must occur.
    pub fn from_block_of(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::NoStates);
        }
        let n_blocks = labels.iter().max().unwrap() + 1;
        let mut blocks = vec![Vec::new(); n_blocks];
        for (x, &b) in labels.iter().enumerate() {
            blocks[b].push(x);
        }
        if let Some(b) = blocks.iter().position(Vec::is_empty) {
            return Err(Error::EmptyBlock(b));
        }
        Self::new(blocks, labels.len())
    }

    pub fn n_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<u32>] {
        &self.blocks
    }

    /// States of block `b`, ascending.
    pub fn block(&self, b: usize) -> &[u32] {
        &self.blocks[b]
    }

    /// Block index of state `x`.
    pub fn block_of(&self, x: usize) -> usize {
        self.block_of[x] as usize
    }

    /// Flat state-to-block assignment.
    pub fn assignments(&self) -> &[u32] {
        &self.block_of
    }

    /// True when every block of `self` lies inside a single block of
    /// `coarser` (over the same state space).
    pub fn is_refinement_of(&self, coarser: &Partition) -> bool {
        if self.n_states() != coarser.n_states() {
            return false;
        }
        self.blocks.iter().all(|block| {
            let c = coarser.block_of(block[0] as usize);
            block[1..].iter().all(|&x| coarser.block_of(x as usize) == c)
        })
    }
}

/// One step of a refinement run: the resolution used and the partition it
/// produced. Step 0 records the initial partition with `epsilon = +inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiltrationStep {
    pub epsilon: f64,
    pub partition: Partition,
}

/// A refining sequence of partitions with non-increasing resolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtration {
    steps: Vec<FiltrationStep>,
    reached_fixpoint: bool,
}

impl Filtration {
    /// Validates and assembles a filtration: at least one step, a fixed
    /// state space, non-increasing epsilons, and every partition refining
    /// its predecessor.
    pub fn new(steps: Vec<FiltrationStep>, reached_fixpoint: bool) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptyFiltration);
        }
        for i in 0..steps.len() {
            let eps = steps[i].epsilon;
            if eps.is_nan() || eps < 0.0 {
                return Err(Error::BadFiltrationStep {
                    step: i,
                    reason: "epsilon must be non-negative (NaN not allowed)",
                });
            }
            if i == 0 {
                continue;
            }
            if eps > steps[i - 1].epsilon {
                return Err(Error::BadFiltrationStep {
                    step: i,
                    reason: "epsilon exceeds its predecessor",
                });
            }
            if steps[i].partition.n_states() != steps[i - 1].partition.n_states() {
                return Err(Error::BadFiltrationStep {
                    step: i,
                    reason: "state count changes between steps",
                });
            }
            if !steps[i].partition.is_refinement_of(&steps[i - 1].partition) {
                return Err(Error::BadFiltrationStep {
                    step: i,
                    reason: "partition does not refine its predecessor",
                });
            }
        }
        Ok(Self {
            steps,
            reached_fixpoint,
        })
    }

    pub fn steps(&self) -> &[FiltrationStep] {
        &self.steps
    }

    pub fn n_states(&self) -> usize {
        self.steps[0].partition.n_states()
    }

    pub fn final_partition(&self) -> &Partition {
        &self.steps.last().unwrap().partition
    }

    /// Whether the run verified that the final partition is exactly stable.
    pub fn reached_fixpoint(&self) -> bool {
        self.reached_fixpoint
    }
}

/// A strictly positive probability measure on states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMeasure {
    weights: Vec<f64>,
}

impl StateMeasure {
    /// Requires every weight positive and finite, and the total equal to 1
    /// within [`ROW_SUM_TOL`]. The total is evaluated with compensated
    /// summation so that large state spaces do not fail the check through
    /// accumulation noise alone.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::BadWeight { index: i, value: w });
            }
        }
        let sum = compensated_sum(&weights);
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::UnnormalizedMeasure { sum });
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, x: usize) -> f64 {
        self.weights[x]
    }
}

/// Neumaier-compensated sum; error stays at a few ulps regardless of length.
pub(crate) fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
