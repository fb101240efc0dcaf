//! Benchmark chain constructions.
//!
//! Three families with complementary roles: the coupon-collector embedding
//! (a structured chain whose compression behaviour is understood), lifted
//! chains (state-level chains built from a known block-level chain, so the
//! optimal compression is known by construction), and seeded sparse random
//! chains (adversarial inputs with exactly representable dyadic rows).
//!
//! Everything here is deterministic per seed and produces chains whose
//! `validate()` comes back empty.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{compensated_sum, Partition, TargetProblem, ROW_SUM_TOL};
use crate::error::{Error, Result};

/// Largest collection size: `2^24 - 1` states is the most the embedding
/// is allowed to materialize.
const MAX_COUPONS: usize = 24;

/// Largest per-block state count for [`lifted_chain`]; keeps the dyadic
/// within-block spread exact enough that block sums stay within
/// [`ROW_SUM_TOL`].
const MAX_BLOCK_SIZE: usize = 1000;

/// Hard cap on the nonzero entries per row of [`random_chain`]; also the
/// denominator of its dyadic weights.
const WEIGHT_GRAINS: usize = 1024;

/// The coupon-collector chain: states are the nonempty subsets of `n`
/// coupon types (state index = subset bitmask - 1), a draw adds coupon `i`
/// with probability `p[i]`, and the target is the completed collection.
///
/// Transitions never drop coupons, so the chain is a DAG plus self-loops
/// and the target (the full set) is absorbing.
pub fn coupon_collector(n: usize, p: &[f64], beta: f64) -> Result<TargetProblem> {
    if !(2..=MAX_COUPONS).contains(&n) {
        return Err(Error::CouponCountRange(n));
    }
    if p.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: p.len(),
        });
    }
    for (i, &w) in p.iter().enumerate() {
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::BadProbability { index: i, value: w });
        }
    }
    let sum = compensated_sum(p);
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::UnnormalizedProbabilities { sum });
    }
    if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
        return Err(Error::InvalidBeta(beta));
    }

    let n_states = (1usize << n) - 1;
    let full = n_states; // bitmask of the complete collection
    let mut rows = Vec::with_capacity(n_states);
    for mask in 1..=full {
        if mask == full {
            rows.push(vec![(full - 1, 1.0)]);
            continue;
        }
        // Drawing an owned coupon keeps the state: the self-loop gets the
        // owned mass. New coupons move to supersets, whose bitmasks (and
        // hence state indices) are strictly larger, in ascending order.
        let mut row = Vec::with_capacity(n - mask.count_ones() as usize + 1);
        let owned: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| p[i]).sum();
        row.push((mask - 1, owned));
        for (i, &draw) in p.iter().enumerate() {
            if mask >> i & 1 == 0 {
                row.push(((mask | 1 << i) - 1, draw));
            }
        }
        rows.push(row);
    }
    TargetProblem::new(n_states, rows, vec![full - 1], beta)
}

/// Expands a block-level chain into a state-level chain whose optimal
/// compression is the returned partition.
///
/// Block `i` of the result occupies `sizes[i]` consecutive states; block 0
/// must be absorbing and becomes the target. Every state of block `i`
/// sends exactly `block_matrix[i][j]` mass into block `j`, spread over the
/// member states by a seeded permutation of the dyadic weights
/// `1/2, 1/4, .., 1/2^{m-1}, 1/2^{m-1}` — so state-level rows differ while
/// block-restricted rows reproduce `block_matrix` (bit-exactly when its
/// entries have short binary expansions).
pub fn lifted_chain(
    block_matrix: &[Vec<f64>],
    sizes: &[usize],
    beta: f64,
    seed: u64,
) -> Result<(TargetProblem, Partition)> {
    let k = block_matrix.len();
    if k < 2 {
        return Err(Error::TooFewBlocks(k));
    }
    for (i, row) in block_matrix.iter().enumerate() {
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
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::RowNotStochastic { row: i, sum });
        }
    }
    if block_matrix[0][0] != 1.0 || block_matrix[0][1..].iter().any(|&v| v != 0.0) {
        return Err(Error::TargetRowNotAbsorbing);
    }
    if sizes.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: sizes.len(),
        });
    }
    for (i, &m) in sizes.iter().enumerate() {
        if m == 0 || m > MAX_BLOCK_SIZE {
            return Err(Error::BadBlockSize {
                index: i,
                size: m,
                max: MAX_BLOCK_SIZE,
            });
        }
    }
    if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
        return Err(Error::InvalidBeta(beta));
    }

    let mut offsets = Vec::with_capacity(k + 1);
    let mut total = 0usize;
    for &m in sizes {
        offsets.push(total);
        total += m;
    }
    offsets.push(total);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(total);
    for i in 0..k {
        for _ in 0..sizes[i] {
            let mut row = Vec::new();
            for j in 0..k {
                let mass = block_matrix[i][j];
                if mass == 0.0 {
                    continue;
                }
                let mut shares = dyadic_shares(sizes[j]);
                shares.shuffle(&mut rng);
                for (t, &s) in shares.iter().enumerate() {
                    // Power-of-two scaling: exact for every normal `mass`.
                    row.push((offsets[j] + t, mass * s));
                }
            }
            rows.push(row);
        }
    }
    let problem = TargetProblem::new(total, rows, (0..sizes[0]).collect(), beta)?;
    let blocks = (0..k)
        .map(|i| (offsets[i]..offsets[i + 1]).map(|x| x as u32).collect())
        .collect();
    Ok((problem, Partition::from_raw(blocks, total)))
}

/// The weights `1/2, 1/4, .., 1/2^{m-1}, 1/2^{m-1}`: `m` powers of two
/// summing to exactly 1.
fn dyadic_shares(m: usize) -> Vec<f64> {
    (0..m)
        .map(|c| {
            if c + 1 == m {
                (-((m as f64) - 1.0)).exp2()
            } else {
                (-(c as f64) - 1.0).exp2()
            }
        })
        .collect()
}

/// A seeded sparse chain with an absorbing target.
///
/// The last `target_size` states form the target, each with a unit
/// self-loop. Every other row draws `round(density * n_states)` distinct
/// columns (at least 1, at most 1024) and splits its mass over them in
/// multiples of `1/1024`, so row sums are exactly 1 and block sums are
/// exactly representable. Identical parameters give identical chains.
pub fn random_chain(
    n_states: usize,
    density: f64,
    target_size: usize,
    seed: u64,
    beta: f64,
) -> Result<TargetProblem> {
    if n_states == 0 {
        return Err(Error::NoStates);
    }
    if !density.is_finite() || density <= 0.0 || density > 1.0 {
        return Err(Error::InvalidDensity(density));
    }
    if target_size == 0 || target_size >= n_states {
        return Err(Error::InvalidTargetSize {
            size: target_size,
            n_states,
        });
    }
    if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
        return Err(Error::InvalidBeta(beta));
    }

    let support = ((density * n_states as f64).round() as usize)
        .clamp(1, n_states.min(WEIGHT_GRAINS));
    let first_target = n_states - target_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_states);
    let scale = 1.0 / WEIGHT_GRAINS as f64;
    for x in 0..n_states {
        if x >= first_target {
            rows.push(vec![(x, 1.0)]);
            continue;
        }
        let mut columns = rand::seq::index::sample(&mut rng, n_states, support).into_vec();
        columns.sort_unstable();
        // A uniform composition of 1024 into `support` positive parts:
        // cut points are a sorted sample of the interior, parts are the
        // gaps. Every weight is a multiple of 2^-10.
        let mut cuts =
            rand::seq::index::sample(&mut rng, WEIGHT_GRAINS - 1, support - 1).into_vec();
        cuts.sort_unstable();
        let mut row = Vec::with_capacity(support);
        let mut prev = 0usize;
        for (t, &col) in columns.iter().enumerate() {
            let next = if t + 1 == support {
                WEIGHT_GRAINS
            } else {
                cuts[t] + 1
            };
            row.push((col, (next - prev) as f64 * scale));
            prev = next;
        }
        rows.push(row);
    }
    TargetProblem::new(n_states, rows, (first_target..n_states).collect(), beta)
}
