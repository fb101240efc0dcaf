//! Shared fixtures for the pipeline benchmarks.

use tlump::{coupon_collector, TargetProblem};

/// The standard benchmark family: a uniform coupon-collector chain with
/// `n` coupon types (`2^n - 1` states) and discount factor 1/2.
pub fn uniform_coupon(n: usize) -> TargetProblem {
    coupon_collector(n, &vec![1.0 / n as f64; n], 0.5).expect("valid benchmark parameters")
}
