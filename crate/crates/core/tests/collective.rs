mod common;

use genlink::collective::*;
use genlink::evaluation::{link_accuracy, GroundTruthLink, Split};
use genlink::probmodel::independent_map_assignment;
use genlink::{RecordIx, Role};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn r(i: u32) -> Option<RecordIx> {
    Some(RecordIx(i))
}

fn one_father(c: u32, mothers: &[(u32, f64)]) -> ChildOptions {
    ChildOptions::new(
        RecordIx(c),
        mothers.iter().map(|&(m, p)| (r(m), p.ln())).collect(),
        vec![(r(9), 0.0)],
    )
}

#[test]
fn greedy_merges_onto_shared_mother() {
    let inst = CollectiveInstance::new(
        vec![
            one_father(0, &[(1, 0.7), (2, 0.6)]),
            one_father(1, &[(1, 0.6), (3, 0.7)]),
        ],
        0.5,
    )
    .unwrap();
    let g = greedy_collective(&inst);
    assert!(g.links.iter().all(|l| l.mother == r(1) && l.father == r(9)));
    assert_eq!(g.distinct_pairs(), 1);
    assert!((g.objective - (0.7f64.ln() + 0.6f64.ln() - 0.5)).abs() < 1e-12);
    let b = brute_force_collective(&inst).unwrap();
    assert!((b.objective - g.objective).abs() < 1e-12);
}

#[test]
fn greedy_can_miss_the_optimum() {
    let inst = CollectiveInstance::new(
        vec![
            one_father(0, &[(2, 0.7), (1, 0.6)]),
            one_father(1, &[(3, 0.7), (1, 0.6)]),
        ],
        0.5,
    )
    .unwrap();
    let g = greedy_collective(&inst);
    let b = brute_force_collective(&inst).unwrap();
    assert_eq!((g.links[0].mother, g.links[1].mother), (r(2), r(3)));
    assert!((objective_value(&inst, &g).unwrap() - (-1.713)).abs() < 1e-3);
    assert!(b.links.iter().all(|l| l.mother == r(1)));
    assert!((objective_value(&inst, &b).unwrap() - (-1.522)).abs() < 1e-3);
}

#[test]
fn null_pairs_cost_nothing() {
    let inst = CollectiveInstance::new(
        vec![
            ChildOptions::new(
                RecordIx(0),
                vec![(None, 0.9f64.ln()), (r(1), 0.1f64.ln())],
                vec![(r(9), 0.0)],
            ),
            ChildOptions::new(
                RecordIx(1),
                vec![(None, 0.9f64.ln()), (r(2), 0.1f64.ln())],
                vec![(r(9), 0.0)],
            ),
        ],
        3.0,
    )
    .unwrap();
    let g = greedy_collective(&inst);
    assert_eq!(g.distinct_pairs(), 0);
    assert!((g.objective - 2.0 * 0.9f64.ln()).abs() < 1e-12);
}

#[test]
fn default_grid_shape() {
    assert_eq!(DEFAULT_LAMBDA_GRID.len(), 16);
    assert!(DEFAULT_LAMBDA_GRID.contains(&0.0));
    assert!(DEFAULT_LAMBDA_GRID.contains(&1.6));
    assert!(DEFAULT_LAMBDA_GRID.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn tune_lambda_prefers_smaller_on_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let post = common::random_posteriors(&mut rng, 1, 0);
    let inst = CollectiveInstance::from_posteriors(&post, 0.0).unwrap();
    // Only null options: every lambda gives the same accuracy.
    let curve = tune_lambda(&inst, &[], &[2.0, 0.4, 1.0]).unwrap();
    assert_eq!(curve.best_lambda, 0.4);
    assert_eq!(curve.points.len(), 3);
    assert!(tune_lambda(&inst, &[], &[]).is_err());
}

fn links_from(a: &ParentAssignment) -> Vec<GroundTruthLink> {
    a.links
        .iter()
        .flat_map(|l| {
            [(Role::Mother, l.mother), (Role::Father, l.father)]
                .into_iter()
                .filter_map(move |(role, p)| {
                    p.map(|parent| GroundTruthLink {
                        child: l.child,
                        parent,
                        role,
                        split: Split::Train,
                    })
                })
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lambda_zero_is_independent_argmax(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let post = common::random_posteriors(&mut rng, 8, 4);
        let inst = CollectiveInstance::from_posteriors(&post, 0.0).unwrap();
        let g = greedy_collective_partitioned(&inst);
        prop_assert!(g.same_edges(&independent_map_assignment(&post)));
    }

    #[test]
    fn brute_force_dominates_greedy(seed in any::<u64>(), lambda in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let post = common::random_posteriors(&mut rng, 4, 3);
        let inst = CollectiveInstance::from_posteriors(&post, lambda).unwrap();
        let g = greedy_collective(&inst);
        let b = brute_force_collective(&inst).unwrap();
        let (go, bo) = (objective_value(&inst, &g).unwrap(), objective_value(&inst, &b).unwrap());
        prop_assert!(bo >= go - 1e-12);
        if post.len() == 1 {
            prop_assert!((bo - go).abs() <= 1e-12);
        }
    }

    #[test]
    fn stored_objective_matches_recomputed(seed in any::<u64>(), lambda in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let post = common::random_posteriors(&mut rng, 8, 4);
        let inst = CollectiveInstance::from_posteriors(&post, lambda).unwrap();
        for a in [greedy_collective(&inst), greedy_collective_partitioned(&inst)] {
            let v = objective_value(&inst, &a).unwrap();
            prop_assert!((v - a.objective).abs() < 1e-9);
        }
    }

    #[test]
    fn partitioned_matches_whole_instance(seed in any::<u64>(), lambda in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let post = common::random_posteriors(&mut rng, 8, 2);
        let inst = CollectiveInstance::from_posteriors(&post, lambda).unwrap();
        let p = greedy_collective_partitioned(&inst);
        prop_assert_eq!(p.links.len(), post.len());
        let whole = greedy_collective(&inst);
        prop_assert!(p.same_edges(&whole));
        prop_assert!((p.objective - whole.objective).abs() < 1e-9);
        let covered: usize = components(&inst).iter().map(Vec::len).sum();
        prop_assert_eq!(covered, post.len());
    }

    #[test]
    fn optimal_pair_count_shrinks_with_lambda(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let post = common::random_posteriors(&mut rng, 4, 3);
        let inst = CollectiveInstance::from_posteriors(&post, 0.0).unwrap();
        let mut last = usize::MAX;
        for lambda in [0.0, 0.5, 1.0, 2.0, 5.0, 1e6] {
            let b = brute_force_collective(&inst.with_lambda(lambda).unwrap()).unwrap();
            prop_assert!(b.distinct_pairs() <= last);
            last = b.distinct_pairs();
        }
        // Every role can go null, so a huge lambda opens no pairs at all.
        prop_assert_eq!(last, 0);
    }

    #[test]
    fn tuning_on_zero_grid_reports_binclass_accuracy(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let post = common::random_posteriors(&mut rng, 8, 4);
        let inst = CollectiveInstance::from_posteriors(&post, 0.0).unwrap();
        // Score against a different instance's argmax so accuracy is not trivially 1.
        let other = common::random_posteriors(&mut rng, 8, 4);
        let truth = links_from(&independent_map_assignment(&other));
        let curve = tune_lambda(&inst, &truth, &[0.0]).unwrap();
        let direct = link_accuracy(&independent_map_assignment(&post), &truth).overall;
        prop_assert_eq!(curve.best_accuracy.to_bits(), direct.to_bits());
    }
}
