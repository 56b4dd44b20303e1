#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tgsched::generate::random_dag;
use tgsched::TaskGraph;

/// The seven-task example graph: P1..P7 are ids 0..6.
pub fn example_graph() -> TaskGraph {
    TaskGraph::new(
        vec![5, 15, 3, 5, 8, 14, 11],
        &[(0, 1), (0, 2), (1, 3), (2, 3), (2, 4), (2, 5), (4, 6), (5, 6)],
    )
    .unwrap()
}

pub const EXAMPLE_STG: &str =
    "7\n0 0 0\n1 5 1 0\n2 15 1 1\n3 3 1 1\n4 5 2 2 3\n5 8 1 3\n6 14 1 3\n7 11 2 5 6\n8 0 2 4 7\n";

/// Small random graphs the exhaustive oracle can solve: 4 to 10 tasks,
/// durations 1..=9, edge probability 0.3.
pub fn oracle_corpus(count: usize) -> Vec<TaskGraph> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
            random_dag(&mut rng, 4 + i % 7, 0.3, 1..=9)
        })
        .collect()
}
