use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use super::{Budget, Mode, Priority, SearchError, SearchOutcome, SearchSpace, SearchState, SearchStats, StateKey};
use crate::taskgraph::{TaskGraph, Time};

/// Branch-and-bound over the event-driven state space, ordered by the
/// admissible lower bound.
///
/// A greedy dive supplies the first incumbent. States are popped in bound
/// order; anything whose bound reaches the incumbent is pruned, and a state
/// is dropped when another state with the same key was reached no later.
/// When the queue's best bound meets the incumbent, the incumbent is optimal.
///
/// `budget.max_expansions`, `budget.max_generated` and `budget.time_limit`
/// are honoured; exceeding one yields [`SearchError::BudgetExceeded`]
/// carrying the best schedule found. Successors are generated one at a
/// time, so the generated-state cap also bounds memory on wide graphs.
pub fn best_first_search(
    graph: &TaskGraph,
    machines: usize,
    mode: Mode,
    use_chains: bool,
    budget: Budget,
) -> Result<SearchOutcome, SearchError> {
    let space = SearchSpace::new(graph, machines, mode, use_chains)?;
    search(&space, budget)
}

pub(crate) fn search(space: &SearchSpace<'_>, budget: Budget) -> Result<SearchOutcome, SearchError> {
    let started = Instant::now();
    let mut stats = SearchStats::default();
    let mut incumbent = space.greedy_dive(&mut stats);
    let mut history = vec![incumbent.time()];

    let root = space.initial();
    let mut arena: Vec<Option<SearchState<'_>>> = Vec::new();
    let mut best_time: HashMap<StateKey, Time> = HashMap::new();
    let mut queue: BinaryHeap<(Priority, usize)> = BinaryHeap::new();
    let mut seq = 0u64;

    let root_bound = space.lower_bound(&root);
    if root_bound < incumbent.time() {
        best_time.insert(root.key(), 0);
        queue.push(((Reverse(root_bound), 0, Reverse(seq)), 0));
        arena.push(Some(root));
    }

    while let Some(((Reverse(bound), _, _), idx)) = queue.pop() {
        if bound >= incumbent.time() {
            break;
        }
        let state = arena[idx].take().expect("each state is popped once");
        if best_time.get(&state.key()).is_some_and(|&t| t < state.time()) {
            continue;
        }
        let spent = |stats: &SearchStats| {
            budget.max_expansions.is_some_and(|cap| stats.expanded >= cap)
                || budget.max_generated.is_some_and(|cap| stats.generated >= cap)
                || budget.time_limit.is_some_and(|limit| started.elapsed() >= limit)
        };
        if spent(&stats) {
            let outcome = space.outcome(&incumbent, history, stats, false);
            return Err(SearchError::BudgetExceeded {
                expanded: stats.expanded,
                incumbent: Box::new(outcome),
            });
        }
        stats.expanded += 1;
        let Some(options) = space.options(&state, &mut stats) else {
            continue;
        };
        for picks in options.iter() {
            if spent(&stats) {
                let outcome = space.outcome(&incumbent, history, stats, false);
                return Err(SearchError::BudgetExceeded {
                    expanded: stats.expanded,
                    incumbent: Box::new(outcome),
                });
            }
            stats.generated += 1;
            let child = space.transition(&state, &options, &picks).state;
            let bound = space.lower_bound(&child);
            if bound >= incumbent.time() {
                continue;
            }
            match best_time.entry(child.key()) {
                Entry::Occupied(mut e) => {
                    if *e.get() <= child.time() {
                        continue;
                    }
                    e.insert(child.time());
                }
                Entry::Vacant(e) => {
                    e.insert(child.time());
                }
            }
            if child.is_terminal() {
                history.push(child.time());
                incumbent = child;
                continue;
            }
            seq += 1;
            queue.push(((Reverse(bound), child.time(), Reverse(seq)), arena.len()));
            arena.push(Some(child));
        }
    }

    Ok(space.outcome(&incumbent, history, stats, true))
}
