mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tgsched::generate::random_dag;
use tgsched::search::{best_first_search, brute_force_optimal, random_dfs, Budget, Mode};
use tgsched::{chain_cover, parse_stg, validate_schedule, ChainDecomposition, TaskGraph};

fn graph(seed: u64, tasks: usize, edge_prob: f64) -> TaskGraph {
    random_dag(&mut ChaCha8Rng::seed_from_u64(seed), tasks, edge_prob, 1..=9)
}

proptest! {
    #[test]
    fn stg_round_trip(seed in any::<u64>(), tasks in 0usize..40, p in 0.0f64..0.6) {
        let g = graph(seed, tasks, p);
        let back = parse_stg(&g.to_stg()).unwrap();
        prop_assert_eq!(back.len(), g.len());
        prop_assert_eq!(back.edges(), g.edges());
        for t in 0..g.len() {
            prop_assert_eq!(back.duration(t), g.duration(t));
        }
    }

    #[test]
    fn topological_order_respects_edges(seed in any::<u64>(), tasks in 1usize..40, p in 0.0f64..0.6) {
        let g = graph(seed, tasks, p);
        let order = g.topological_order();
        let mut rank = vec![0; g.len()];
        for (i, &t) in order.iter().enumerate() {
            rank[t] = i;
        }
        for (a, b) in g.edges() {
            prop_assert!(rank[a] < rank[b]);
        }
    }

    #[test]
    fn critical_path_bounds(seed in any::<u64>(), tasks in 1usize..40, p in 0.0f64..0.6) {
        let g = graph(seed, tasks, p);
        let cp = g.critical_path_length();
        let longest_task = (0..g.len()).map(|t| u64::from(g.duration(t))).max().unwrap();
        prop_assert!(cp >= longest_task);
        prop_assert!(cp <= g.total_work());
        prop_assert_eq!(g.bottom_levels().into_iter().max().unwrap(), cp);
    }

    #[test]
    fn chain_cover_is_a_valid_partition(seed in any::<u64>(), tasks in 0usize..40, p in 0.0f64..0.6) {
        let g = graph(seed, tasks, p);
        let cover = chain_cover(&g);
        let mut seen: Vec<usize> = cover.chains().iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..g.len()).collect::<Vec<_>>());
        // Re-validating checks that every chain is totally ordered.
        prop_assert!(ChainDecomposition::new(&g, cover.chains().to_vec()).is_ok());
        prop_assert!(cover.len() <= g.len());
    }

    #[test]
    fn engines_agree_with_the_oracle(seed in any::<u64>(), tasks in 1usize..8, machines in 1usize..4) {
        let g = graph(seed, tasks, 0.3);
        for mode in [Mode::NonPreemptive, Mode::PREEMPTIVE] {
            let exact = brute_force_optimal(&g, machines, mode, false).unwrap();
            let bf = best_first_search(&g, machines, mode, true, Budget::default()).unwrap();
            prop_assert_eq!(bf.makespan, exact);
            prop_assert!(bf.proved_optimal);
            let dfs = random_dfs(&g, machines, mode, true, seed, Budget::default()).unwrap();
            prop_assert_eq!(dfs.makespan, exact);
            prop_assert!(validate_schedule(&g, &dfs.schedule).unwrap().is_valid());
            let lower = g.critical_path_length().max(g.total_work().div_ceil(machines as u64));
            prop_assert!(exact >= lower);
        }
    }
}

#[test]
fn preemption_never_hurts_on_the_example() {
    let g = common::example_graph();
    for machines in 1..=4 {
        let np = brute_force_optimal(&g, machines, Mode::NonPreemptive, true).unwrap();
        let p = brute_force_optimal(&g, machines, Mode::PREEMPTIVE, true).unwrap();
        assert!(p <= np);
    }
}

#[test]
fn example_chain_cover() {
    let cover = chain_cover(&common::example_graph());
    assert_eq!(cover.chains(), &[vec![0, 1, 3], vec![2, 4, 6], vec![5]]);
}

#[test]
fn wide_graph_stays_within_budget() {
    // Twenty-five ready tasks on sixteen machines at the first decision.
    let g = TaskGraph::new(vec![3; 25], &[]).unwrap();
    match best_first_search(&g, 16, Mode::NonPreemptive, true, Budget::generated(10_000)) {
        Ok(out) => assert!(validate_schedule(&g, &out.schedule).unwrap().is_valid()),
        Err(tgsched::search::SearchError::BudgetExceeded { incumbent, .. }) => {
            assert!(validate_schedule(&g, &incumbent.schedule).unwrap().is_valid());
            assert!(incumbent.stats.generated <= 10_000);
        }
        Err(e) => panic!("{e}"),
    }
}
