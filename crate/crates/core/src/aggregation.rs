//! Block-level chain construction from a partition and a state measure.
//!
//! Aggregation replaces the state-level transition matrix by its
//! measure-weighted block average: entry `(i, j)` of the aggregated matrix
//! is the mu-weighted mean of `restrict_row(x)[j]` over the states `x` of
//! block `i`. With the uniform measure this coincides exactly with the
//! projection-matrix product `(QᵀQ)⁻¹QᵀPQ` for the block indicator matrix
//! `Q`, but it is computed row by row in `O(nnz)` without materializing
//! `Q`.
//!
//! When the input partition is compatible with the chain at tolerance
//! `delta`, every state's restricted row is within `delta` of its block's
//! aggregated row, so the aggregated chain reproduces the original's
//! target dynamics at block level.

use rayon::prelude::*;

use crate::chain::{compensated_sum, Filtration, Partition, StateMeasure, TargetProblem};
use crate::error::{Error, Result};

/// Aggregated matrices with at most this many blocks are stored dense;
/// larger ones switch to a compressed sparse representation.
pub const DENSE_BLOCK_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    /// Row-major `n_blocks * n_blocks` matrix.
    Dense(Vec<f64>),
    /// Compressed sparse rows over the same index space.
    Sparse {
        row_ptr: Vec<usize>,
        cols: Vec<u32>,
        vals: Vec<f64>,
    },
}

/// A block-level target problem: the aggregated transition matrix, the
/// blocks that make up the target set, and the discount factor inherited
/// from the source chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedTargetProblem {
    n_blocks: usize,
    repr: Repr,
    target_blocks: Vec<u32>,
    beta: f64,
}

impl AggregatedTargetProblem {
    /// Builds an aggregated problem from an explicit dense matrix, checking
    /// every invariant. [`aggregate`] is the usual constructor; this one
    /// exists for matrices coming from files or written out by hand.
    pub fn new(matrix: Vec<Vec<f64>>, target_blocks: Vec<usize>, beta: f64) -> Result<Self> {
        let k = matrix.len();
        if k == 0 {
            return Err(Error::NoStates);
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != k {
                return Err(Error::LengthMismatch {
                    expected: k,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::EntryOutOfRange {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            let sum = compensated_sum(row);
            if (sum - 1.0).abs() > crate::chain::ROW_SUM_TOL {
                return Err(Error::RowNotStochastic { row: i, sum });
            }
        }
        if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
            return Err(Error::InvalidBeta(beta));
        }
        if target_blocks.is_empty() {
            return Err(Error::NoTargetBlock);
        }
        let mut targets: Vec<u32> = Vec::with_capacity(target_blocks.len());
        for b in target_blocks {
            if b >= k {
                return Err(Error::StateOutOfRange {
                    state: b,
                    n_states: k,
                });
            }
            targets.push(b as u32);
        }
        targets.sort_unstable();
        targets.dedup();
        let dense: Vec<f64> = matrix.into_iter().flatten().collect();
        Ok(Self {
            n_blocks: k,
            repr: compress(dense, k),
            target_blocks: targets,
            beta,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Blocks whose states form the target set, ascending.
    pub fn target_blocks(&self) -> &[u32] {
        &self.target_blocks
    }

    /// The single block equal to the target set, when there is exactly one.
    /// Partitions produced by the refinement run keep the target atomic, so
    /// for them this is `Some(0)`; a singleton partition of a multi-state
    /// target yields several target blocks and `None`.
    pub fn target_block(&self) -> Option<usize> {
        match self.target_blocks[..] {
            [b] => Some(b as usize),
            _ => None,
        }
    }

    pub fn is_target_block(&self, b: usize) -> bool {
        self.target_blocks.binary_search(&(b as u32)).is_ok()
    }

    /// Transition probability from block `i` to block `j`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n_blocks && j < self.n_blocks);
        match &self.repr {
            Repr::Dense(m) => m[i * self.n_blocks + j],
            Repr::Sparse { row_ptr, cols, vals } => {
                let lo = row_ptr[i];
                let hi = row_ptr[i + 1];
                match cols[lo..hi].binary_search(&(j as u32)) {
                    Ok(pos) => vals[lo + pos],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Nonzero entries of row `i` in ascending column order.
    pub fn row(&self, i: usize) -> Vec<(usize, f64)> {
        assert!(i < self.n_blocks);
        match &self.repr {
            Repr::Dense(m) => m[i * self.n_blocks..(i + 1) * self.n_blocks]
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect(),
            Repr::Sparse { row_ptr, cols, vals } => (row_ptr[i]..row_ptr[i + 1])
                .map(|e| (cols[e] as usize, vals[e]))
                .collect(),
        }
    }

    /// The full matrix as rows. Intended for writing out and for oracle
    /// comparisons; quadratic in the block count.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_blocks)
            .map(|i| match &self.repr {
                Repr::Dense(m) => m[i * self.n_blocks..(i + 1) * self.n_blocks].to_vec(),
                Repr::Sparse { .. } => {
                    let mut row = vec![0.0; self.n_blocks];
                    for (j, v) in self.row(i) {
                        row[j] = v;
                    }
                    row
                }
            })
            .collect()
    }

    /// One-step hitting probabilities of the target blocks.
    pub(crate) fn target_hit(&self) -> Vec<f64> {
        (0..self.n_blocks)
            .into_par_iter()
            .map(|i| {
                self.target_blocks
                    .iter()
                    .map(|&b| self.entry(i, b as usize))
                    .sum()
            })
            .collect()
    }

    /// Matrix-vector product `out = M v`, one deterministic accumulation
    /// per row.
    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.n_blocks, "vector length mismatch");
        assert_eq!(out.len(), self.n_blocks, "output length mismatch");
        let k = self.n_blocks;
        match &self.repr {
            Repr::Dense(m) => {
                out.par_iter_mut().enumerate().for_each(|(i, o)| {
                    *o = m[i * k..(i + 1) * k]
                        .iter()
                        .zip(v)
                        .map(|(a, b)| a * b)
                        .sum();
                });
            }
            Repr::Sparse { row_ptr, cols, vals } => {
                out.par_iter_mut().enumerate().for_each(|(i, o)| {
                    *o = (row_ptr[i]..row_ptr[i + 1])
                        .map(|e| vals[e] * v[cols[e] as usize])
                        .sum();
                });
            }
        }
    }
}

fn compress(dense: Vec<f64>, k: usize) -> Repr {
    if k <= DENSE_BLOCK_LIMIT {
        return Repr::Dense(dense);
    }
    let mut row_ptr = Vec::with_capacity(k + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for i in 0..k {
        for (j, &v) in dense[i * k..(i + 1) * k].iter().enumerate() {
            if v != 0.0 {
                cols.push(j as u32);
                vals.push(v);
            }
        }
        row_ptr.push(cols.len());
    }
    Repr::Sparse {
        row_ptr,
        cols,
        vals,
    }
}

/// The neutral measure: weight `1/N` on each of the problem's states.
pub fn uniform_measure(problem: &TargetProblem) -> StateMeasure {
    let n = problem.n_states();
    StateMeasure::new(vec![1.0 / n as f64; n]).expect("uniform weights form a measure")
}

/// A strictly positive measure adapted to a refinement run, mirroring a
/// geometric distribution over the refinement tree.
///
/// Walking the filtration from coarse to fine, each block passes its mass
/// to its children (in block order): child `c` of `k` receives the
/// fraction `2^{-(c+1)}`, except the last child, which receives the
/// remainder `2^{-(k-1)}`. Within each final block the same rule splits
/// the mass over member states in index order. Every state ends up with
/// strictly positive weight, and earlier blocks and states are heavier.
pub fn geometric_block_measure(filtration: &Filtration) -> StateMeasure {
    let steps = filtration.steps();
    let first = &steps[0].partition;
    let mut block_mass = split_mass(1.0, first.n_blocks());
    for pair in steps.windows(2) {
        let parent = &pair[0].partition;
        let child = &pair[1].partition;
        let mut children_per_parent = vec![0usize; parent.n_blocks()];
        for block in child.blocks() {
            children_per_parent[parent.block_of(block[0] as usize)] += 1;
        }
        let mut seen = vec![0usize; parent.n_blocks()];
        let mut next = Vec::with_capacity(child.n_blocks());
        for block in child.blocks() {
            let p = parent.block_of(block[0] as usize);
            let share = child_fraction(seen[p], children_per_parent[p]);
            seen[p] += 1;
            next.push(block_mass[p] * share);
        }
        block_mass = next;
    }
    let last = filtration.final_partition();
    let mut weights = vec![0.0; last.n_states()];
    for (b, block) in last.blocks().iter().enumerate() {
        for (c, &x) in block.iter().enumerate() {
            let w = block_mass[b] * child_fraction(c, block.len());
            weights[x as usize] = w.max(f64::MIN_POSITIVE);
        }
    }
    // In clean regimes the dyadic shares sum to exactly 1 and both fixups
    // below are no-ops; deep trees that underflow get renormalized.
    let total = compensated_sum(&weights);
    for w in &mut weights {
        *w /= total;
    }
    let residual = 1.0 - compensated_sum(&weights);
    let heaviest = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("partitions are never empty");
    weights[heaviest] += residual;
    StateMeasure::new(weights).expect("renormalized weights form a measure")
}

/// Fraction of the parent's mass given to child `c` of `k`.
fn child_fraction(c: usize, k: usize) -> f64 {
    debug_assert!(c < k);
    if c + 1 == k {
        (-((k as f64) - 1.0)).exp2()
    } else {
        (-(c as f64) - 1.0).exp2()
    }
}

fn split_mass(parent: f64, k: usize) -> Vec<f64> {
    (0..k).map(|c| parent * child_fraction(c, k)).collect()
}

/// Builds the block-level chain: entry `(i, j)` is the mu-weighted average
/// of `restrict_row(x, partition)[j]` over the states `x` of block `i`.
///
/// Requires the target set to be a union of blocks, so that the result is
/// itself a target problem.
pub fn aggregate(
    problem: &TargetProblem,
    partition: &Partition,
    mu: &StateMeasure,
) -> Result<AggregatedTargetProblem> {
    if partition.n_states() != problem.n_states() {
        return Err(Error::LengthMismatch {
            expected: problem.n_states(),
            got: partition.n_states(),
        });
    }
    if mu.len() != problem.n_states() {
        return Err(Error::LengthMismatch {
            expected: problem.n_states(),
            got: mu.len(),
        });
    }
    let mut target_blocks = Vec::new();
    for (b, block) in partition.blocks().iter().enumerate() {
        let in_target = problem.is_target(block[0] as usize);
        if block[1..]
            .iter()
            .any(|&x| problem.is_target(x as usize) != in_target)
        {
            return Err(Error::TargetNotBlockUnion);
        }
        if in_target {
            target_blocks.push(b as u32);
        }
    }
    if target_blocks.is_empty() {
        return Err(Error::NoTargetBlock);
    }
    let k = partition.n_blocks();
    let rows: Vec<Vec<f64>> = partition
        .blocks()
        .par_iter()
        .map_init(Vec::new, |row_buf, block| {
            let mut numerator = vec![0.0; k];
            let mut mass = 0.0;
            for &x in block {
                let w = mu.weight(x as usize);
                problem.restrict_into(x as usize, partition, row_buf);
                for (j, &r) in row_buf.iter().enumerate() {
                    numerator[j] += w * r;
                }
                mass += w;
            }
            assert!(mass > 0.0, "strictly positive measure gives positive block mass");
            for v in &mut numerator {
                *v /= mass;
            }
            numerator
        })
        .collect();
    let dense: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(AggregatedTargetProblem {
        n_blocks: k,
        repr: compress(dense, k),
        target_blocks,
        beta: problem.beta(),
    })
}

/// Maps each block of the finer partition to the block of the coarser one
/// containing it.
pub fn lift_partition(coarse: &Partition, fine: &Partition) -> Result<Vec<usize>> {
    if coarse.n_states() != fine.n_states() {
        return Err(Error::LengthMismatch {
            expected: coarse.n_states(),
            got: fine.n_states(),
        });
    }
    let mut map = Vec::with_capacity(fine.n_blocks());
    for (b, block) in fine.blocks().iter().enumerate() {
        let parent = coarse.block_of(block[0] as usize);
        if block[1..]
            .iter()
            .any(|&x| coarse.block_of(x as usize) != parent)
        {
            return Err(Error::NotARefinement { fine_block: b });
        }
        map.push(parent);
    }
    Ok(map)
}
