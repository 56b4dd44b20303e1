//! Random task-graph generators for tests, benchmarks and experiments.

use rand::Rng;

use crate::taskgraph::{TaskGraph, TaskId};

/// Erdos-Renyi style DAG: every pair `i < j` gets an edge `i -> j` with
/// probability `edge_prob`; durations are uniform in `durations`.
pub fn random_dag<R: Rng>(
    rng: &mut R,
    tasks: usize,
    edge_prob: f64,
    durations: std::ops::RangeInclusive<u32>,
) -> TaskGraph {
    let d: Vec<u32> = (0..tasks).map(|_| rng.random_range(durations.clone())).collect();
    let mut edges = Vec::new();
    for j in 0..tasks {
        for i in 0..j {
            if rng.random_bool(edge_prob) {
                edges.push((i, j));
            }
        }
    }
    TaskGraph::new(d, &edges).expect("forward edges form a DAG")
}

/// Layered DAG: tasks are split into `layers` consecutive groups of
/// (nearly) equal size. Each task outside the first layer gets between one
/// and `max_in` predecessors drawn from the previous layer.
pub fn layered_dag<R: Rng>(
    rng: &mut R,
    tasks: usize,
    layers: usize,
    max_in: usize,
    durations: std::ops::RangeInclusive<u32>,
) -> TaskGraph {
    let layers = layers.clamp(1, tasks.max(1));
    let bounds: Vec<usize> = (0..=layers).map(|l| l * tasks / layers).collect();
    let d: Vec<u32> = (0..tasks).map(|_| rng.random_range(durations.clone())).collect();
    let mut edges: Vec<(TaskId, TaskId)> = Vec::new();
    for l in 1..layers {
        let prev = bounds[l - 1]..bounds[l];
        for t in bounds[l]..bounds[l + 1] {
            let k = rng.random_range(1..=max_in.max(1).min(prev.len()));
            let mut picked: Vec<TaskId> = Vec::with_capacity(k);
            while picked.len() < k {
                let p = rng.random_range(prev.clone());
                if !picked.contains(&p) {
                    picked.push(p);
                }
            }
            edges.extend(picked.into_iter().map(|p| (p, t)));
        }
    }
    TaskGraph::new(d, &edges).expect("layer edges form a DAG")
}
