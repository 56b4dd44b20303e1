use std::time::Instant;

use num_integer::gcd;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Budget, DispatchOptions, Mode, SearchError, SearchOutcome, SearchSpace, SearchState, SearchStats};
use crate::taskgraph::TaskGraph;

/// Randomized depth-first branch-and-bound.
///
/// Children of every node are visited in a uniformly shuffled order drawn
/// from a generator seeded with `seed`. Nodes with more than
/// [`SHUFFLE_LIMIT`] children are not materialized; their children are
/// visited along a random affine permutation of the choice indices
/// instead, which keeps memory flat on wide graphs. Each leaf reached becomes the new
/// incumbent (pruning guarantees it improves); subtrees whose bound reaches
/// the incumbent are skipped. Stops when the budget is spent or the tree is
/// exhausted, in which case the result is proved optimal. Budget limits
/// only apply once a first schedule exists, so a schedule is always
/// returned. With a wall-clock limit the result is no longer reproducible.
pub fn random_dfs(
    graph: &TaskGraph,
    machines: usize,
    mode: Mode,
    use_chains: bool,
    seed: u64,
    budget: Budget,
) -> Result<SearchOutcome, SearchError> {
    let space = SearchSpace::new(graph, machines, mode, use_chains)?;
    Ok(search(&space, seed, budget))
}

pub(crate) fn search(space: &SearchSpace<'_>, seed: u64, budget: Budget) -> SearchOutcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = SearchStats::default();
    let mut incumbent: Option<SearchState<'_>> = None;
    let mut history = Vec::new();

    let root = space.initial();
    if root.is_terminal() {
        return space.outcome(&root, vec![0], stats, true);
    }

    let mut stack = vec![expand(space, &root, &mut stats, &mut rng)];
    let mut exhausted = true;
    while let Some(frame) = stack.last_mut() {
        let Some(child) = frame.next(space, &mut stats) else {
            stack.pop();
            continue;
        };

        if let Some(best) = &incumbent {
            if space.lower_bound(&child) >= best.time() {
                continue;
            }
        }
        if child.is_terminal() {
            history.push(child.time());
            incumbent = Some(child);
            if budget.max_dives.is_some_and(|cap| history.len() as u64 >= cap) {
                exhausted = false;
                break;
            }
            continue;
        }
        if incumbent.is_some() {
            let out_of_nodes = budget.max_expansions.is_some_and(|cap| stats.expanded >= cap);
            let out_of_time = budget.time_limit.is_some_and(|limit| started.elapsed() >= limit);
            if out_of_nodes || out_of_time {
                exhausted = false;
                break;
            }
        }
        let children = expand(space, &child, &mut stats, &mut rng);
        stack.push(children);
    }

    let best = incumbent.expect("the first dive always reaches a leaf");
    space.outcome(&best, history, stats, exhausted)
}

/// Nodes with at most this many children are shuffled in full.
pub const SHUFFLE_LIMIT: u128 = 4096;

enum Frame<'s> {
    /// Shuffled, so popping from the back is still a uniform order.
    Shuffled(Vec<SearchState<'s>>),
    /// Child `step` is choice `(stride * step + offset) mod count`.
    Permuted {
        state: SearchState<'s>,
        options: DispatchOptions,
        count: u64,
        stride: u64,
        offset: u64,
        step: u64,
    },
}

impl<'s> Frame<'s> {
    fn next(&mut self, space: &'s SearchSpace<'_>, stats: &mut SearchStats) -> Option<SearchState<'s>> {
        match self {
            Frame::Shuffled(children) => children.pop(),
            Frame::Permuted {
                state,
                options,
                count,
                stride,
                offset,
                step,
            } => {
                if *step == *count {
                    return None;
                }
                let index = (u128::from(*stride) * u128::from(*step) + u128::from(*offset)) % u128::from(*count);
                *step += 1;
                stats.generated += 1;
                Some(space.transition(state, options, &options.nth(index)).state)
            }
        }
    }
}

fn expand<'s>(
    space: &'s SearchSpace<'_>,
    state: &SearchState<'s>,
    stats: &mut SearchStats,
    rng: &mut ChaCha8Rng,
) -> Frame<'s> {
    stats.expanded += 1;
    let Some(options) = space.options(state, stats) else {
        return Frame::Shuffled(Vec::new());
    };
    let total = options.count();
    if total <= SHUFFLE_LIMIT {
        let mut children: Vec<SearchState<'s>> = options
            .iter()
            .map(|picks| space.transition(state, &options, &picks).state)
            .collect();
        stats.generated += children.len() as u64;
        children.shuffle(rng);
        return Frame::Shuffled(children);
    }
    // Beyond 2^64 choices only a prefix is reachable; no budget gets there.
    let count = u64::try_from(total).unwrap_or(u64::MAX);
    let stride = loop {
        let candidate = rng.random_range(1..count);
        if gcd(candidate, count) == 1 {
            break candidate;
        }
    };
    Frame::Permuted {
        state: state.clone(),
        options,
        count,
        stride,
        offset: rng.random_range(0..count),
        step: 0,
    }
}
