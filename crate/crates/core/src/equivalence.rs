//! Dyadic epsilon-cut equivalence keys over probability vectors.
//!
//! Coordinate `j` (0-based) of a vector is bucketed into cells of width
//! `epsilon * 2^{-(j+1)}`; two vectors are epsilon-equivalent exactly when
//! every coordinate lands in the same cell. Cell widths shrink
//! geometrically, so equal keys bound the l1 distance by
//! `epsilon * (1 - 2^{-k}) < epsilon` for `k` coordinates.
//!
//! Keys are computed in floating point. Two guards keep them deterministic
//! and sound across compilers and optimization levels:
//!
//! * a quotient within 4 ulps of an integer cell boundary is snapped to that
//!   boundary's own cell, so values separated only by rounding noise cannot
//!   land on opposite sides of a boundary;
//! * when a cell is narrower than roughly one ulp of the value (the quotient
//!   would leave the exactly-representable integer range), the coordinate
//!   key degrades to the bit pattern of the value itself. At that
//!   resolution distinct representable values belong to distinct cells
//!   anyway, and the fallback keeps "equal keys => values within one cell"
//!   sound instead of saturating.

use crate::error::{Error, Result};

/// Quotients at or above this limit use the bit-pattern fallback. Kept well
/// below 2^63 so snapped floor values and tagged bit patterns cannot collide.
const FLOOR_LIMIT: f64 = (1u64 << 62) as f64;

/// Tag for bit-pattern coordinates. Finite non-negative doubles have bit
/// patterns below 2^63, so tagged values cannot collide with floor values.
const BITS_TAG: u64 = 1 << 63;

/// Width of the boundary snap band, in ulps of the quotient.
const BOUNDARY_ULPS: f64 = 4.0;

/// An equivalence key: one integer cell index per coordinate. Keys from the
/// same cut (or the same grid width) are comparable; equal keys mean every
/// coordinate shares a cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassKey(Vec<u64>);

impl ClassKey {
    /// Raw cell indices, one per coordinate.
    pub fn coordinates(&self) -> &[u64] {
        &self.0
    }

    pub(crate) fn from_raw(coordinates: Vec<u64>) -> Self {
        Self(coordinates)
    }
}

/// A dyadic epsilon-cut: coordinate `j` is bucketed with cell width
/// `epsilon * 2^{-(j+1)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonCut {
    epsilon: f64,
}

impl EpsilonCut {
    /// Requires a positive, finite resolution.
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Cell width of coordinate `j` (0-based): `epsilon * 2^{-(j+1)}`.
    pub fn width(&self, j: usize) -> f64 {
        self.epsilon * (-(j as f64) - 1.0).exp2()
    }

    /// Equivalence key of a probability vector (entries in [0, 1]).
    pub fn class_key(&self, v: &[f64]) -> Result<ClassKey> {
        if v.is_empty() {
            return Err(Error::EmptyVector);
        }
        let mut out = Vec::new();
        self.key_into(v, &mut out);
        Ok(ClassKey(out))
    }

    /// True when the two vectors fall in the same cell on every coordinate.
    pub fn same_class(&self, p: &[f64], q: &[f64]) -> Result<bool> {
        if p.len() != q.len() {
            return Err(Error::LengthMismatch {
                expected: p.len(),
                got: q.len(),
            });
        }
        Ok(self.class_key(p)? == self.class_key(q)?)
    }

    /// Allocation-free core of [`class_key`](Self::class_key).
    pub(crate) fn key_into(&self, v: &[f64], out: &mut Vec<u64>) {
        out.clear();
        out.reserve(v.len());
        for (j, &x) in v.iter().enumerate() {
            out.push(grid_coordinate(x, self.width(j)));
        }
    }
}

/// Snap-to-grid key with a fixed cell width per coordinate.
///
/// `delta = 0` compares coordinates bitwise-exactly (each representable
/// value is its own cell); a positive `delta` buckets into cells of that
/// width with the same boundary guard as [`EpsilonCut`].
pub fn exact_key(v: &[f64], delta: f64) -> Result<ClassKey> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidDelta(delta));
    }
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    let mut out = Vec::new();
    exact_key_into(v, delta, &mut out);
    Ok(ClassKey(out))
}

pub(crate) fn exact_key_into(v: &[f64], delta: f64, out: &mut Vec<u64>) {
    out.clear();
    out.reserve(v.len());
    if delta == 0.0 {
        out.extend(v.iter().map(|&x| value_bits(x)));
    } else {
        out.extend(v.iter().map(|&x| grid_coordinate(x, delta)));
    }
}

/// Bit pattern of a non-negative value, with -0.0 folded onto 0.0.
fn value_bits(x: f64) -> u64 {
    debug_assert!(!x.is_nan());
    let x = if x == 0.0 { 0.0 } else { x };
    x.to_bits()
}

/// Cell index of `value` on a grid of the given width.
///
/// Quotients within [`BOUNDARY_ULPS`] ulps below an integer boundary are
/// snapped up to that boundary's cell; quotients too large for exact integer
/// representation (including `width == 0`) fall back to the tagged bit
/// pattern of the value.
fn grid_coordinate(value: f64, width: f64) -> u64 {
    debug_assert!(value >= 0.0 && !value.is_nan());
    let q = value / width;
    if q.is_nan() || q >= FLOOR_LIMIT {
        // Saturated quotient, zero width (q = inf), or 0/0 (q = NaN).
        return BITS_TAG | value_bits(value);
    }
    let down = q.floor();
    let up = down + 1.0;
    let tolerance = BOUNDARY_ULPS * f64::EPSILON * q.max(1.0);
    if up - q <= tolerance {
        up as u64
    } else {
        down as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: the plain floor formula, no guards. Valid away
    // from cell boundaries.
    fn oracle_key(v: &[f64], epsilon: f64) -> Vec<u64> {
        v.iter()
            .enumerate()
            .map(|(j, &x)| (x / (epsilon * 0.5f64.powi(j as i32 + 1))).floor() as u64)
            .collect()
    }

    #[test]
    fn widths_halve_per_coordinate() {
        let cut = EpsilonCut::new(0.5).unwrap();
        assert_eq!(cut.width(0), 0.25);
        assert_eq!(cut.width(1), 0.125);
        assert_eq!(cut.width(2), 0.0625);
    }

    #[test]
    fn frozen_keys_distinguish_point_mass_from_small_leak() {
        // epsilon = 0.5: coordinate 0 has cells of width 0.25.
        // floor(1.0 / 0.25) = 4 while floor(0.96 / 0.25) = 3.
        let cut = EpsilonCut::new(0.5).unwrap();
        let p = cut.class_key(&[1.0, 0.0]).unwrap();
        let q = cut.class_key(&[0.96, 0.04]).unwrap();
        assert_eq!(p.coordinates(), &[4, 0]);
        assert_eq!(q.coordinates(), &[3, 0]);
        assert_ne!(p, q);
        assert_eq!(p.coordinates(), oracle_key(&[1.0, 0.0], 0.5).as_slice());
        assert_eq!(q.coordinates(), oracle_key(&[0.96, 0.04], 0.5).as_slice());
    }

    #[test]
    fn frozen_keys_split_second_coordinate() {
        // epsilon = 0.5: coordinate 1 has cells of width 0.125.
        // floor(0.90 / 0.125) = 7 while floor(0.80 / 0.125) = 6.
        let cut = EpsilonCut::new(0.5).unwrap();
        let p = cut.class_key(&[0.10, 0.90]).unwrap();
        let q = cut.class_key(&[0.20, 0.80]).unwrap();
        assert_eq!(p.coordinates(), &[0, 7]);
        assert_eq!(q.coordinates(), &[0, 6]);
        assert!(!cut.same_class(&[0.10, 0.90], &[0.20, 0.80]).unwrap());
    }

    #[test]
    fn boundary_noise_is_snapped_to_the_boundary_cell() {
        let cut = EpsilonCut::new(0.5).unwrap();
        // One ulp below the cell boundary at 0.25: the plain floor would
        // give cell 0, the guard snaps it to cell 1 next to exact 0.25.
        let just_below = 0.25 - f64::EPSILON * 0.25;
        let exact = cut.class_key(&[0.25]).unwrap();
        let noisy = cut.class_key(&[just_below]).unwrap();
        assert_eq!(exact.coordinates(), &[1]);
        assert_eq!(noisy, exact);
    }

    #[test]
    fn saturated_cells_degrade_to_bit_patterns() {
        // epsilon small and coordinate high: the cell width underflows the
        // quotient range. Distinct values must stay distinct, identical
        // values identical — never a shared saturated bucket.
        let cut = EpsilonCut::new(1e-20).unwrap();
        let a = cut.class_key(&[0.0, 0.3]).unwrap();
        let b = cut.class_key(&[0.0, 0.9]).unwrap();
        let c = cut.class_key(&[0.0, 0.9]).unwrap();
        assert_ne!(a, b);
        assert_eq!(b, c);
        assert!(b.coordinates()[1] & (1 << 63) != 0);
    }

    #[test]
    fn exact_key_zero_delta_is_bitwise() {
        let lhs = exact_key(&[0.1 + 0.2], 0.0).unwrap();
        let rhs = exact_key(&[0.3], 0.0).unwrap();
        assert_ne!(lhs, rhs, "0.1 + 0.2 differs from 0.3 in the last ulp");
        assert_eq!(
            exact_key(&[0.0], 0.0).unwrap(),
            exact_key(&[-0.0], 0.0).unwrap()
        );
    }

    #[test]
    fn exact_key_with_grid_absorbs_small_noise() {
        // delta = 1e-9 and values 1e-12 apart inside one cell: equal keys.
        let v = 5.5e-9;
        let w = v + 1e-12;
        assert_eq!(
            exact_key(&[v], 1e-9).unwrap(),
            exact_key(&[w], 1e-9).unwrap()
        );
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert_eq!(EpsilonCut::new(0.0), Err(Error::InvalidEpsilon(0.0)));
        assert_eq!(EpsilonCut::new(-1.0), Err(Error::InvalidEpsilon(-1.0)));
        assert!(EpsilonCut::new(f64::NAN).is_err());
        assert!(EpsilonCut::new(f64::INFINITY).is_err());
        let cut = EpsilonCut::new(0.5).unwrap();
        assert_eq!(cut.class_key(&[]), Err(Error::EmptyVector));
        assert_eq!(exact_key(&[], 0.0), Err(Error::EmptyVector));
        assert_eq!(exact_key(&[0.5], -1.0), Err(Error::InvalidDelta(-1.0)));
    }

    #[test]
    fn distinct_keys_never_exceed_vector_count() {
        // Classes partition their inputs: at most one class per vector.
        use std::collections::HashSet;
        let cut = EpsilonCut::new(0.25).unwrap();
        let vectors = [
            [0.1, 0.9],
            [0.2, 0.8],
            [0.5, 0.5],
            [0.9, 0.1],
            [0.1, 0.9],
        ];
        let keys: HashSet<_> = vectors
            .iter()
            .map(|v| cut.class_key(v).unwrap())
            .collect();
        assert!(keys.len() <= vectors.len());
        assert_eq!(keys.len(), 4); // the duplicate vector shares its class
    }

    proptest::proptest! {
        // Soundness: equal keys force l1 distance below epsilon.
        #[test]
        fn equal_keys_imply_l1_below_epsilon(
            base in proptest::collection::vec(0.0f64..=1.0, 1..12),
            noise in proptest::collection::vec(-1e-4f64..=1e-4, 12),
            epsilon in 1e-3f64..=1.0,
        ) {
            let cut = EpsilonCut::new(epsilon).unwrap();
            let perturbed: Vec<f64> = base
                .iter()
                .zip(&noise)
                .map(|(&x, &n)| (x + n).clamp(0.0, 1.0))
                .collect();
            if cut.same_class(&base, &perturbed).unwrap() {
                let l1: f64 = base
                    .iter()
                    .zip(&perturbed)
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                proptest::prop_assert!(l1 < epsilon, "l1 = {l1}, epsilon = {epsilon}");
            }
        }
    }
}
