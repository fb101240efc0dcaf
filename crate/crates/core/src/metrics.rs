//! Hitting-probability profiles and discounted target pseudometrics.
//!
//! The central quantity is `h[n][x] = P^n(x, T)`, the probability of
//! sitting in the target after exactly `n` steps. Profiles are computed by
//! the backward recursion `h[n+1] = P h[n]` — one sparse matrix-vector
//! product per step, never materializing matrix powers.
//!
//! The distance between a chain and its aggregation (and between two
//! states of one chain) is the discounted series
//! `sum_n beta^n |h1[n] - h2[n]|`, truncated at a horizon `H` chosen from
//! the requested tail tolerance. Every result carries its truncation
//! certificate: the geometric tail `2 beta^{H+1} / (1 - beta)` bounds
//! everything dropped, so the true distance lies within
//! `[value, value + tail_bound]`.

use rayon::prelude::*;

use crate::aggregation::AggregatedTargetProblem;
use crate::chain::{Partition, TargetProblem};
use crate::error::{Error, Result};

/// Hitting probabilities `h[n][x] = P^n(x, T)` for `n = 1..=horizon`.
///
/// Rows are steps, columns are states (or blocks, for profiles of an
/// aggregated chain).
#[derive(Debug, Clone, PartialEq)]
pub struct HittingProfile {
    values: Vec<Vec<f64>>,
}

impl HittingProfile {
    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// Number of states (or blocks) per step.
    pub fn n_points(&self) -> usize {
        self.values[0].len()
    }

    /// The vector `h[n]`; `n` is 1-based and at most the horizon.
    pub fn step(&self, n: usize) -> &[f64] {
        assert!(n >= 1 && n <= self.values.len(), "step out of range");
        &self.values[n - 1]
    }

    /// `P^n(x, T)`; `n` is 1-based.
    pub fn value(&self, n: usize, x: usize) -> f64 {
        self.step(n)[x]
    }
}

/// Hitting profile of a chain up to `horizon` steps.
pub fn hitting_profile(problem: &TargetProblem, horizon: usize) -> Result<HittingProfile> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let mut values = Vec::with_capacity(horizon);
    values.push(problem.target_hit());
    for n in 1..horizon {
        let mut next = vec![0.0; problem.n_states()];
        problem.apply(&values[n - 1], &mut next);
        values.push(next);
    }
    Ok(HittingProfile { values })
}

/// Block-level hitting profile of an aggregated chain.
pub fn hitting_profile_aggregated(
    aggregated: &AggregatedTargetProblem,
    horizon: usize,
) -> Result<HittingProfile> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let mut values = Vec::with_capacity(horizon);
    values.push(aggregated.target_hit());
    for n in 1..horizon {
        let mut next = vec![0.0; aggregated.n_blocks()];
        aggregated.apply(&values[n - 1], &mut next);
        values.push(next);
    }
    Ok(HittingProfile { values })
}

/// A truncated discounted distance together with its certificate: the true
/// value lies in `[value, value + tail_bound]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    /// The truncated series `sum_{n=1}^{horizon} beta^n |...|`.
    pub value: f64,
    /// Everything beyond the horizon is at most this.
    pub tail_bound: f64,
    /// Number of series terms evaluated.
    pub horizon: usize,
}

impl DistanceReport {
    /// The certified enclosure `[value, value + tail_bound]`.
    pub fn interval(&self) -> (f64, f64) {
        (self.value, self.value + self.tail_bound)
    }
}

/// A horizon `H` with `2 beta^{H+1} / (1 - beta) <= beta * tail_tol`
/// (never less than 1): solving `beta^H = tail_tol (1 - beta) / 2` in logs
/// and rounding up leaves a factor-`beta` margin on the certificate.
pub fn truncation_horizon(beta: f64, tail_tol: f64) -> Result<usize> {
    check_beta(beta)?;
    check_tail_tol(tail_tol)?;
    let needed = (tail_tol * (1.0 - beta) / 2.0).ln() / beta.ln();
    Ok(needed.ceil().max(1.0) as usize)
}

/// The geometric tail `2 beta^{horizon + 1} / (1 - beta)`: an upper bound
/// on every discounted hitting-difference series beyond the horizon.
pub fn tail_bound(beta: f64, horizon: usize) -> f64 {
    assert!(
        beta.is_finite() && beta > 0.0 && beta < 1.0,
        "discount factor must be in (0, 1)"
    );
    2.0 * beta.powi(horizon as i32 + 1) / (1.0 - beta)
}

/// Discounted hitting-probability distance between a chain and an
/// aggregation of it, maximized over start states.
///
/// The aggregated chain is evaluated at block level and compared to the
/// original through `partition`; both chains must carry the same discount
/// factor. The horizon is chosen so the truncation error is at most
/// `tail_tol`, and the report carries the exact tail certificate.
pub fn distance_d(
    problem: &TargetProblem,
    aggregated: &AggregatedTargetProblem,
    partition: &Partition,
    tail_tol: f64,
) -> Result<DistanceReport> {
    if partition.n_states() != problem.n_states() {
        return Err(Error::LengthMismatch {
            expected: problem.n_states(),
            got: partition.n_states(),
        });
    }
    if partition.n_blocks() != aggregated.n_blocks() {
        return Err(Error::LengthMismatch {
            expected: partition.n_blocks(),
            got: aggregated.n_blocks(),
        });
    }
    if problem.beta() != aggregated.beta() {
        return Err(Error::BetaMismatch {
            left: problem.beta(),
            right: aggregated.beta(),
        });
    }
    let beta = problem.beta();
    let horizon = truncation_horizon(beta, tail_tol)?;
    let n = problem.n_states();

    let mut fine = problem.target_hit();
    let mut coarse = aggregated.target_hit();
    let mut fine_next = vec![0.0; n];
    let mut coarse_next = vec![0.0; aggregated.n_blocks()];
    let mut acc = vec![0.0; n];
    let assignments = partition.assignments();
    let mut discount = beta;
    for step in 1..=horizon {
        acc.par_iter_mut().enumerate().for_each(|(x, a)| {
            let diff = (fine[x] - coarse[assignments[x] as usize]).abs();
            *a += discount * diff;
        });
        if step < horizon {
            problem.apply(&fine, &mut fine_next);
            std::mem::swap(&mut fine, &mut fine_next);
            aggregated.apply(&coarse, &mut coarse_next);
            std::mem::swap(&mut coarse, &mut coarse_next);
            discount *= beta;
        }
    }
    let value = acc
        .par_iter()
        .copied()
        .reduce(|| 0.0, f64::max);
    Ok(DistanceReport {
        value,
        tail_bound: tail_bound(beta, horizon),
        horizon,
    })
}

/// Discounted hitting-probability distance between two start states of the
/// same chain, with the same truncation certificate as [`distance_d`].
pub fn state_pseudometric(
    problem: &TargetProblem,
    x: usize,
    y: usize,
    tail_tol: f64,
) -> Result<DistanceReport> {
    let n = problem.n_states();
    for s in [x, y] {
        if s >= n {
            return Err(Error::StateOutOfRange {
                state: s,
                n_states: n,
            });
        }
    }
    let beta = problem.beta();
    let horizon = truncation_horizon(beta, tail_tol)?;
    let mut hit = problem.target_hit();
    let mut next = vec![0.0; n];
    let mut value = 0.0;
    let mut discount = beta;
    for step in 1..=horizon {
        value += discount * (hit[x] - hit[y]).abs();
        if step < horizon {
            problem.apply(&hit, &mut next);
            std::mem::swap(&mut hit, &mut next);
            discount *= beta;
        }
    }
    Ok(DistanceReport {
        value,
        tail_bound: tail_bound(beta, horizon),
        horizon,
    })
}

/// Total variation distance `max_A |p(A) - q(A)| = (1/2) sum |p_i - q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
        return Err(Error::InvalidBeta(beta));
    }
    Ok(())
}

fn check_tail_tol(tail_tol: f64) -> Result<()> {
    if !tail_tol.is_finite() || tail_tol <= 0.0 {
        return Err(Error::InvalidTailTolerance(tail_tol));
    }
    Ok(())
}
