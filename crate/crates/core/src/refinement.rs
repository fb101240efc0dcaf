//! Target-aware partition refinement.
//!
//! Starting from the two-block partition `[T, X \ T]`, each pass splits
//! every block by the equivalence keys of its states' block-restricted
//! rows over the *input* partition — an epsilon-cut key for a positive
//! resolution, a snap-to-grid key (see [`crate::equivalence::exact_key`])
//! for resolution 0. Because keys of exactly equal rows coincide for every
//! resolution, each partition a run produces stays coarser than (or equal
//! to) the coarsest exactly-compatible partition, and iterating at
//! resolution 0 converges to it.
//!
//! Target states are never separated from each other: the target set is
//! absorbing, so all its states have an identical hitting future, and
//! keeping the block atomic also shields it from rounding noise in row
//! sums. Target states are always separated from non-target states.
//!
//! Output blocks are in canonical order — target block first, remaining
//! blocks ascending by smallest member — and grouping is insertion-ordered,
//! so results are deterministic and independent of thread count.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::chain::{Filtration, FiltrationStep, Partition, TargetProblem};
use crate::equivalence::{exact_key_into, ClassKey, EpsilonCut};
use crate::error::{Error, Result};

/// The two-block partition `[T, X \ T]` (just `[T]` if the target covers
/// everything, which `validate` flags).
pub fn initial_partition(problem: &TargetProblem) -> Partition {
    let n = problem.n_states();
    let target: Vec<u32> = problem.target().to_vec();
    let complement: Vec<u32> = (0..n as u32)
        .filter(|&x| !problem.is_target(x as usize))
        .collect();
    let mut blocks = vec![target];
    if !complement.is_empty() {
        blocks.push(complement);
    }
    Partition::from_raw(blocks, n)
}

/// One refinement pass over `partition`.
///
/// `epsilon > 0` groups states by epsilon-cut keys of their restricted
/// rows; `epsilon == 0` groups by snap-to-grid keys with cell width
/// `delta` (bitwise-exact when `delta == 0`). The result refines the
/// input; blocks inside the target set are carried over unsplit.
pub fn refine_once(
    problem: &TargetProblem,
    partition: &Partition,
    epsilon: f64,
    delta: f64,
) -> Result<Partition> {
    if partition.n_states() != problem.n_states() {
        return Err(Error::LengthMismatch {
            expected: problem.n_states(),
            got: partition.n_states(),
        });
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidDelta(delta));
    }
    let n = problem.n_states();
    let cut = if epsilon > 0.0 {
        Some(EpsilonCut::new(epsilon)?)
    } else {
        None
    };

    // Keys for every non-target state, in parallel; grouping below is
    // sequential and insertion-ordered.
    let keys: Vec<Option<ClassKey>> = (0..n)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(row_buf, key_buf), x| {
                if problem.is_target(x) {
                    return None;
                }
                problem.restrict_into(x, partition, row_buf);
                match cut {
                    Some(cut) => {
                        let key = cut.class_key(row_buf).expect("restricted row is non-empty");
                        Some(key)
                    }
                    None => {
                        exact_key_into(row_buf, delta, key_buf);
                        Some(ClassKey::from_raw(key_buf.clone()))
                    }
                }
            },
        )
        .collect();

    let mut target_blocks: Vec<Vec<u32>> = Vec::new();
    let mut rest_blocks: Vec<Vec<u32>> = Vec::new();
    for block in partition.blocks() {
        let mut target_side: Vec<u32> = Vec::new();
        let mut groups: Vec<Vec<u32>> = Vec::new();
        let mut group_of: HashMap<&ClassKey, usize> = HashMap::new();
        for &x in block {
            match keys[x as usize] {
                None => target_side.push(x),
                Some(ref key) => {
                    let next = groups.len();
                    let g = *group_of.entry(key).or_insert(next);
                    if g == next {
                        groups.push(Vec::new());
                    }
                    groups[g].push(x);
                }
            }
        }
        if !target_side.is_empty() {
            target_blocks.push(target_side);
        }
        rest_blocks.append(&mut groups);
    }
    // Canonical order: target block(s) first, then ascending by smallest
    // member. Blocks inherit sortedness from the input blocks.
    target_blocks.sort_unstable_by_key(|b| b[0]);
    rest_blocks.sort_unstable_by_key(|b| b[0]);
    target_blocks.extend(rest_blocks);
    Ok(Partition::from_raw(target_blocks, n))
}

/// Runs the refinement schedule from `[T, X \ T]`.
///
/// The schedule must be non-empty, finite, non-increasing, and positive,
/// except that a final entry of `0` is allowed and drives the partition to
/// the exact fixpoint (grid width `delta`). Step 0 of the result records
/// the initial partition with `epsilon = +inf`; each schedule entry adds
/// one step. The run stops early once a pass changes nothing and the
/// partition is exactly stable, and the returned filtration records
/// whether its final partition is the exact fixpoint.
pub fn run_target_algorithm(
    problem: &TargetProblem,
    schedule: &[f64],
    delta: f64,
) -> Result<Filtration> {
    if schedule.is_empty() {
        return Err(Error::EmptySchedule);
    }
    for (i, &eps) in schedule.iter().enumerate() {
        let increasing = i > 0 && eps > schedule[i - 1];
        let zero_in_middle = eps == 0.0 && i + 1 != schedule.len();
        if !eps.is_finite() || eps < 0.0 || increasing || zero_in_middle {
            return Err(Error::BadScheduleEntry {
                position: i,
                value: eps,
            });
        }
    }

    let mut steps = vec![FiltrationStep {
        epsilon: f64::INFINITY,
        partition: initial_partition(problem),
    }];
    let mut fixpoint = false;
    for &eps in schedule {
        let prev = &steps.last().unwrap().partition;
        let next = if eps > 0.0 {
            refine_once(problem, prev, eps, delta)?
        } else {
            stabilize(problem, prev.clone(), delta)?
        };
        let unchanged = next == *prev;
        steps.push(FiltrationStep {
            epsilon: eps,
            partition: next,
        });
        if eps == 0.0 {
            fixpoint = true;
            break;
        }
        if unchanged {
            let last = &steps.last().unwrap().partition;
            if refine_once(problem, last, 0.0, delta)? == *last {
                fixpoint = true;
                break;
            }
        }
    }
    if !fixpoint {
        let last = &steps.last().unwrap().partition;
        fixpoint = refine_once(problem, last, 0.0, delta)? == *last;
    }
    Filtration::new(steps, fixpoint)
}

/// Iterates exact refinement (resolution 0, grid width `delta`) from
/// `[T, X \ T]` until the partition stabilizes. The result is the coarsest
/// partition separating the target whose blocks have grid-equal restricted
/// rows.
pub fn exact_fixpoint(problem: &TargetProblem, delta: f64) -> Result<Partition> {
    stabilize(problem, initial_partition(problem), delta)
}

fn stabilize(problem: &TargetProblem, start: Partition, delta: f64) -> Result<Partition> {
    let mut current = start;
    // Each non-final pass adds at least one block, so n_states passes are
    // enough; the bound is a defensive cap, not a tuning knob.
    for _ in 0..=problem.n_states() {
        let next = refine_once(problem, &current, 0.0, delta)?;
        if next == current {
            return Ok(current);
        }
        current = next;
    }
    unreachable!("refinement must stabilize within n_states passes");
}

/// True when the target set is a union of blocks and, within every block,
/// all restricted rows agree within `delta` in the max norm.
pub fn is_compatible(problem: &TargetProblem, partition: &Partition, delta: f64) -> Result<bool> {
    if partition.n_states() != problem.n_states() {
        return Err(Error::LengthMismatch {
            expected: problem.n_states(),
            got: partition.n_states(),
        });
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidDelta(delta));
    }
    for block in partition.blocks() {
        let in_target = problem.is_target(block[0] as usize);
        if block[1..]
            .iter()
            .any(|&x| problem.is_target(x as usize) != in_target)
        {
            return Ok(false); // target straddles this block
        }
    }
    let k = partition.n_blocks();
    let compatible = partition.blocks().par_iter().all(|block| {
        let mut lo = vec![f64::INFINITY; k];
        let mut hi = vec![f64::NEG_INFINITY; k];
        let mut row = Vec::new();
        for &x in block {
            problem.restrict_into(x as usize, partition, &mut row);
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        // Pairwise max-norm spread within the block.
        lo.iter().zip(&hi).all(|(&l, &h)| h - l <= delta)
    });
    Ok(compatible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Partition;

    /// Four states: 3 is the absorbing target; 0 never moves toward it in
    /// one step; 1 and 2 hit it with probability one half.
    fn four_state() -> TargetProblem {
        TargetProblem::new(
            4,
            vec![
                vec![(1, 1.0)],
                vec![(0, 0.5), (3, 0.5)],
                vec![(0, 0.5), (3, 0.5)],
                vec![(3, 1.0)],
            ],
            vec![3],
            0.5,
        )
        .unwrap()
    }

    fn blocks_of(p: &Partition) -> Vec<Vec<u32>> {
        p.blocks().to_vec()
    }

    #[test]
    fn initial_partition_is_target_then_rest() {
        let p = four_state();
        let init = initial_partition(&p);
        assert_eq!(blocks_of(&init), vec![vec![3], vec![0, 1, 2]]);
    }

    #[test]
    fn refine_separates_states_by_restricted_rows() {
        let p = four_state();
        let init = initial_partition(&p);
        let refined = refine_once(&p, &init, 0.0, 0.0).unwrap();
        assert_eq!(blocks_of(&refined), vec![vec![3], vec![0], vec![1, 2]]);
        // One more pass is stable: rows over the three blocks still agree.
        let again = refine_once(&p, &refined, 0.0, 0.0).unwrap();
        assert_eq!(again, refined);
    }

    #[test]
    fn refine_matches_brute_force_coarsest_partition() {
        // Independent oracle: enumerate every partition of the non-target
        // states (the target is a singleton here), keep the compatible
        // ones, and pick the coarsest. See the acceptance suite for the
        // general version with split targets.
        let p = four_state();
        let dense: Vec<Vec<f64>> = (0..4)
            .map(|x| (0..4).map(|y| p.entry(x, y)).collect())
            .collect();
        let mut best: Option<Vec<Vec<usize>>> = None;
        for labels in crate::refinement::tests::set_partitions(3) {
            let n_blocks = labels.iter().max().unwrap() + 1;
            let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
            for (state, &b) in labels.iter().enumerate() {
                blocks[b].push(state);
            }
            blocks.push(vec![3]); // the target block
            let compatible = blocks.iter().all(|block| {
                let restricted: Vec<Vec<f64>> = block
                    .iter()
                    .map(|&x| {
                        blocks
                            .iter()
                            .map(|bl| bl.iter().map(|&y| dense[x][y]).sum::<f64>())
                            .collect()
                    })
                    .collect();
                restricted.windows(2).all(|w| w[0] == w[1])
            });
            if compatible {
                let coarser = best
                    .as_ref()
                    .is_none_or(|b: &Vec<Vec<usize>>| blocks.len() < b.len());
                if coarser {
                    best = Some(blocks);
                }
            }
        }
        let mut oracle = best.unwrap();
        for b in &mut oracle {
            b.sort_unstable();
        }
        oracle.sort_unstable();
        let fixpoint = exact_fixpoint(&p, 0.0).unwrap();
        let mut got: Vec<Vec<usize>> = fixpoint
            .blocks()
            .iter()
            .map(|b| b.iter().map(|&x| x as usize).collect())
            .collect();
        got.sort_unstable();
        assert_eq!(got, oracle);
    }

    /// All partitions of `{0, .., k-1}` as restricted-growth label vectors.
    pub(crate) fn set_partitions(k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut labels = vec![0usize; k];
        fn recurse(labels: &mut Vec<usize>, i: usize, max_used: usize, out: &mut Vec<Vec<usize>>) {
            if i == labels.len() {
                out.push(labels.clone());
                return;
            }
            for b in 0..=max_used + 1 {
                labels[i] = b;
                recurse(labels, i + 1, max_used.max(b), out);
            }
        }
        if k == 0 {
            return vec![vec![]];
        }
        labels[0] = 0;
        recurse(&mut labels, 1, 0, &mut out);
        out
    }

    #[test]
    fn set_partition_oracle_counts_are_bell_numbers() {
        assert_eq!(set_partitions(1).len(), 1);
        assert_eq!(set_partitions(2).len(), 2);
        assert_eq!(set_partitions(3).len(), 5);
        assert_eq!(set_partitions(4).len(), 15);
        assert_eq!(set_partitions(7).len(), 877);
    }

    #[test]
    fn identical_rows_refine_to_nothing() {
        // Both non-target states have the same row: one pass changes
        // nothing, and a one-entry schedule still records two steps.
        let p = TargetProblem::new(
            3,
            vec![
                vec![(1, 0.5), (2, 0.5)],
                vec![(1, 0.5), (2, 0.5)],
                vec![(2, 1.0)],
            ],
            vec![2],
            0.5,
        )
        .unwrap();
        let init = initial_partition(&p);
        let refined = refine_once(&p, &init, 0.5, 0.0).unwrap();
        assert_eq!(refined, init);
        let filtration = run_target_algorithm(&p, &[0.5], 0.0).unwrap();
        assert_eq!(filtration.steps().len(), 2);
        assert_eq!(filtration.steps()[0].partition, filtration.steps()[1].partition);
        assert!(filtration.reached_fixpoint());
    }

    #[test]
    fn equal_schedule_entries_are_allowed() {
        let p = four_state();
        let filtration = run_target_algorithm(&p, &[0.5, 0.5], 0.0).unwrap();
        assert!(filtration.steps().len() >= 2);
    }

    #[test]
    fn schedule_validation() {
        let p = four_state();
        assert_eq!(
            run_target_algorithm(&p, &[], 0.0),
            Err(Error::EmptySchedule)
        );
        assert_eq!(
            run_target_algorithm(&p, &[0.1, 0.5], 0.0),
            Err(Error::BadScheduleEntry {
                position: 1,
                value: 0.5
            })
        );
        assert_eq!(
            run_target_algorithm(&p, &[0.5, 0.0, 0.1], 0.0),
            Err(Error::BadScheduleEntry {
                position: 1,
                value: 0.0
            })
        );
        assert_eq!(
            run_target_algorithm(&p, &[-0.5], 0.0),
            Err(Error::BadScheduleEntry {
                position: 0,
                value: -0.5
            })
        );
        assert!(run_target_algorithm(&p, &[0.5, 0.1, 0.0], 0.0).is_ok());
    }

    #[test]
    fn trailing_zero_reaches_the_fixpoint() {
        let p = four_state();
        let filtration = run_target_algorithm(&p, &[0.9, 0.0], 0.0).unwrap();
        assert!(filtration.reached_fixpoint());
        assert_eq!(
            *filtration.final_partition(),
            exact_fixpoint(&p, 0.0).unwrap()
        );
    }

    #[test]
    fn coupon_fixpoint_groups_states_by_coupon_count() {
        // Uniform coupon collector on 3 coupons: the exact fixpoint is the
        // by-count partition. Subsets are indexed by bitmask minus one, so
        // count-1 subsets are states {0, 1, 3} and count-2 are {2, 4, 5}.
        let p = crate::generators::coupon_collector(3, &[1.0 / 3.0; 3], 0.5).unwrap();
        let fixpoint = exact_fixpoint(&p, 0.0).unwrap();
        assert_eq!(
            blocks_of(&fixpoint),
            vec![vec![6], vec![0, 1, 3], vec![2, 4, 5]]
        );
    }

    #[test]
    fn target_states_stay_together() {
        // Two-state absorbing target whose states shuffle mass between each
        // other with different rows: hitting the target is still certain
        // from inside, so the block must not split.
        let p = TargetProblem::new(
            4,
            vec![
                vec![(0, 0.25), (1, 0.75)],
                vec![(0, 1.0)],
                vec![(0, 0.5), (2, 0.25), (3, 0.25)],
                vec![(1, 0.5), (2, 0.5)],
            ],
            vec![0, 1],
            0.5,
        )
        .unwrap();
        let fixpoint = exact_fixpoint(&p, 0.0).unwrap();
        assert_eq!(fixpoint.block(0), &[0, 1]);
        let refined = refine_once(&p, &initial_partition(&p), 0.01, 0.0).unwrap();
        assert_eq!(refined.block(0), &[0, 1]);
    }

    #[test]
    fn canonical_order_interleaves_children_by_smallest_state() {
        // Parent blocks {0, 9} and {1, 2} with rows that split {0, 9}:
        // children must be globally reordered by smallest member, not
        // grouped by parent.
        let mut rows: Vec<Vec<(usize, f64)>> = (0..10).map(|x| vec![(x, 1.0)]).collect();
        rows[0] = vec![(5, 1.0)];
        rows[9] = vec![(6, 1.0)];
        let p = TargetProblem::new(10, rows, vec![5], 0.5).unwrap();
        let partition = Partition::new(
            vec![vec![5], vec![0, 9], vec![1, 2], vec![3, 4, 6, 7, 8]],
            10,
        )
        .unwrap();
        let refined = refine_once(&p, &partition, 0.0, 0.0).unwrap();
        let firsts: Vec<u32> = refined.blocks().iter().map(|b| b[0]).collect();
        assert_eq!(refined.block(0), &[5], "target block stays first");
        let mut sorted = firsts[1..].to_vec();
        sorted.sort_unstable();
        assert_eq!(firsts[1..], sorted[..], "non-target blocks ascend by smallest member");
    }

    #[test]
    fn strategy_choice_does_not_change_the_fixpoint() {
        let p = crate::generators::random_chain(8, 0.5, 2, 11, 0.5).unwrap();
        let a = run_target_algorithm(&p, &[0.5, 0.1, 0.0], 0.0).unwrap();
        let b = run_target_algorithm(&p, &[0.9, 0.9, 0.04, 0.0], 0.0).unwrap();
        assert_eq!(a.final_partition(), b.final_partition());
    }

    #[test]
    fn compatibility_checks_targets_and_rows() {
        let p = four_state();
        let fixpoint = exact_fixpoint(&p, 0.0).unwrap();
        assert!(is_compatible(&p, &fixpoint, 0.0).unwrap());
        // Merging the distinguishable states 0 and 1 is incompatible.
        let merged = Partition::new(vec![vec![3], vec![0, 1], vec![2]], 4).unwrap();
        assert!(!is_compatible(&p, &merged, 0.0).unwrap());
        // A block straddling the target boundary is never compatible.
        let straddling = Partition::new(vec![vec![2, 3], vec![0, 1]], 4).unwrap();
        assert!(!is_compatible(&p, &straddling, 0.0).unwrap());
        // With a loose enough delta the 0/1 merge becomes acceptable.
        assert!(is_compatible(&p, &merged, 1.0).unwrap());
    }

    proptest::proptest! {
        #[test]
        fn refine_output_refines_input(seed in 0u64..200, eps in 0.0f64..=0.6) {
            let p = crate::generators::random_chain(9, 0.4, 2, seed, 0.5).unwrap();
            let init = initial_partition(&p);
            let refined = refine_once(&p, &init, eps, 1e-12).unwrap();
            proptest::prop_assert!(refined.is_refinement_of(&init));
            let twice = refine_once(&p, &refined, eps, 1e-12).unwrap();
            proptest::prop_assert!(twice.is_refinement_of(&refined));
        }

        #[test]
        fn fixpoint_is_compatible_and_stable(seed in 0u64..100) {
            let p = crate::generators::random_chain(7, 0.6, 1, seed, 0.5).unwrap();
            let fixpoint = exact_fixpoint(&p, 0.0).unwrap();
            proptest::prop_assert!(is_compatible(&p, &fixpoint, 0.0).unwrap());
            let again = refine_once(&p, &fixpoint, 0.0, 0.0).unwrap();
            proptest::prop_assert_eq!(again, fixpoint);
        }
    }
}
