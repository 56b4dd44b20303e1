//! Exhaustive reference solver for small instances.
//!
//! Deliberately shares nothing with the engine's state representation:
//! the state here is a plain per-task remaining-duration vector and a
//! bitmask of running tasks, and every dispatch subset at every decision
//! point is tried, with memoization on the full state.

use std::collections::HashMap;

use super::{Mode, SearchError};
use crate::chains::chain_cover;
use crate::taskgraph::{TaskGraph, TaskId, Time};

/// Largest instance the oracle accepts.
pub const ORACLE_TASK_LIMIT: usize = 12;

/// Exact optimal makespan by exhaustive enumeration.
///
/// With `use_chains`, only the least unfinished element of each chain in
/// the chain cover is a dispatch candidate; otherwise every unfinished,
/// idle task whose dependencies are done is.
pub fn brute_force_optimal(
    graph: &TaskGraph,
    machines: usize,
    mode: Mode,
    use_chains: bool,
) -> Result<Time, SearchError> {
    if machines == 0 {
        return Err(SearchError::NoMachines);
    }
    if graph.len() > ORACLE_TASK_LIMIT {
        return Err(SearchError::InstanceTooLarge {
            tasks: graph.len(),
            limit: ORACLE_TASK_LIMIT,
        });
    }
    let chains = use_chains.then(|| chain_cover(graph).chains().to_vec());
    let mut oracle = Oracle {
        graph,
        machines,
        mode,
        chains,
        memo: HashMap::new(),
    };
    let remaining: Vec<u32> = graph.tasks().iter().map(|t| t.duration).collect();
    Ok(oracle.solve(remaining, 0))
}

struct Oracle<'g> {
    graph: &'g TaskGraph,
    machines: usize,
    mode: Mode,
    chains: Option<Vec<Vec<TaskId>>>,
    memo: HashMap<(Vec<u32>, u16), Time>,
}

impl Oracle<'_> {
    fn candidates(&self, remaining: &[u32], running: u16) -> Vec<TaskId> {
        let done = |t: TaskId| remaining[t] == 0;
        let idle_unfinished = |t: TaskId| remaining[t] > 0 && running & (1 << t) == 0;
        match &self.chains {
            Some(chains) => chains
                .iter()
                .filter_map(|chain| chain.iter().copied().find(|&t| remaining[t] > 0))
                .filter(|&t| idle_unfinished(t) && self.graph.all_dependencies_done(t, &done))
                .collect(),
            None => (0..self.graph.len())
                .filter(|&t| idle_unfinished(t) && self.graph.all_dependencies_done(t, &done))
                .collect(),
        }
    }

    /// Minimal time to finish everything from this decision point.
    fn solve(&mut self, remaining: Vec<u32>, running: u16) -> Time {
        if remaining.iter().all(|&r| r == 0) {
            return 0;
        }
        let key = (remaining, running);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let (remaining, running) = key;

        let candidates = self.candidates(&remaining, running);
        let free = self.machines - running.count_ones() as usize;
        let max_size = free.min(candidates.len());
        let min_size = match self.mode {
            Mode::Preemptive { maximal_dispatch: true } => max_size,
            _ if running == 0 => 1,
            _ => 0,
        };

        let mut best = Time::MAX;
        for subset in 0u32..(1 << candidates.len()) {
            let size = subset.count_ones() as usize;
            if size < min_size || size > max_size {
                continue;
            }
            let mut active = running;
            for (i, &t) in candidates.iter().enumerate() {
                if subset & (1 << i) != 0 {
                    active |= 1 << t;
                }
            }
            if active == 0 {
                continue;
            }
            let delta = (0..remaining.len())
                .filter(|&t| active & (1 << t) != 0)
                .map(|t| remaining[t])
                .min()
                .expect("active is non-empty");
            let mut next = remaining.clone();
            let mut still_running = 0u16;
            for (t, rem) in next.iter_mut().enumerate() {
                if active & (1 << t) != 0 {
                    *rem -= delta;
                    if *rem > 0 && !self.mode.is_preemptive() {
                        still_running |= 1 << t;
                    }
                }
            }
            let total = Time::from(delta) + self.solve(next, still_running);
            best = best.min(total);
        }
        assert!(best < Time::MAX, "no dispatch possible from a non-final state");
        self.memo.insert((remaining, running), best);
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgraph::tests::example_graph;

    #[test]
    fn serial_chain() {
        let g = TaskGraph::new(vec![1, 2, 3], &[(0, 1), (1, 2)]).unwrap();
        for mode in [Mode::NonPreemptive, Mode::PREEMPTIVE] {
            assert_eq!(brute_force_optimal(&g, 2, mode, true).unwrap(), 6);
            assert_eq!(brute_force_optimal(&g, 2, mode, false).unwrap(), 6);
        }
    }

    #[test]
    fn many_machines_give_critical_path() {
        let g = example_graph();
        assert_eq!(brute_force_optimal(&g, 7, Mode::NonPreemptive, true).unwrap(), 33);
        assert_eq!(brute_force_optimal(&g, 7, Mode::PREEMPTIVE, false).unwrap(), 33);
    }

    #[test]
    fn independent_tasks_on_one_machine() {
        let g = TaskGraph::new(vec![3, 4, 5], &[]).unwrap();
        assert_eq!(brute_force_optimal(&g, 1, Mode::NonPreemptive, true).unwrap(), 12);
    }

    #[test]
    fn guards_instance_size() {
        let g = TaskGraph::new(vec![1; 13], &[]).unwrap();
        assert!(matches!(
            brute_force_optimal(&g, 2, Mode::NonPreemptive, true),
            Err(SearchError::InstanceTooLarge { tasks: 13, .. })
        ));
    }
}
