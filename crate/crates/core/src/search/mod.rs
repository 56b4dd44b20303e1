//! Event-driven scheduling state space.
//!
//! Decisions are taken at time 0 and at every task completion. At a
//! decision point a subset of the ready chain heads is dispatched onto free
//! machines; time then advances to the next completion. Without preemption
//! unfinished tasks keep running across the event. With preemption every
//! running task is suspended at each completion with its remaining duration
//! reduced, and the next dispatch may choose any ready set again.
//!
//! The elapsed time plays the role of the accumulated price, so minimizing
//! cost and minimizing makespan coincide.

use std::cmp::Reverse;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chains::{chain_cover, ChainCursor, ChainDecomposition};
use crate::schedule::Schedule;
use crate::taskgraph::{CompletedSet, TaskGraph, TaskId, Time};

mod best_first;
mod dfs;
mod oracle;

pub use best_first::best_first_search;
pub use dfs::random_dfs;
pub use oracle::{brute_force_optimal, ORACLE_TASK_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NonPreemptive,
    /// With `maximal_dispatch`, every decision fills as many free machines
    /// as there are ready tasks.
    Preemptive {
        maximal_dispatch: bool,
    },
}

impl Mode {
    pub const PREEMPTIVE: Mode = Mode::Preemptive { maximal_dispatch: true };

    pub fn is_preemptive(self) -> bool {
        matches!(self, Mode::Preemptive { .. })
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::NonPreemptive => "non-preemptive",
            Mode::Preemptive { maximal_dispatch: true } => "preemptive",
            Mode::Preemptive {
                maximal_dispatch: false,
            } => "preemptive-any",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("at least one machine is required")]
    NoMachines,
    #[error("search budget exhausted after {expanded} expansions (best makespan so far {})", incumbent.makespan)]
    BudgetExceeded {
        expanded: u64,
        incumbent: Box<SearchOutcome>,
    },
    #[error("instance has {tasks} tasks; the exhaustive oracle is limited to {limit}")]
    InstanceTooLarge { tasks: usize, limit: usize },
    #[error("a decision point offers {count} dispatch choices (limit {limit})")]
    TooManyChoices { count: u128, limit: u128 },
}

/// Caps for the anytime and exact engines. `None` means unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Budget {
    pub max_expansions: Option<u64>,
    /// Successor states created; bounds memory for the best-first engine.
    pub max_generated: Option<u64>,
    /// Number of complete schedules (leaves) to reach before stopping.
    pub max_dives: Option<u64>,
    pub time_limit: Option<Duration>,
}

impl Budget {
    pub fn expansions(n: u64) -> Self {
        Self {
            max_expansions: Some(n),
            ..Self::default()
        }
    }

    pub fn generated(n: u64) -> Self {
        Self {
            max_generated: Some(n),
            ..Self::default()
        }
    }

    pub fn dives(n: u64) -> Self {
        Self {
            max_dives: Some(n),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    /// States whose successors were generated.
    pub expanded: u64,
    /// Successor states created.
    pub generated: u64,
    /// Chain heads (or tasks, without chains) inspected for readiness.
    pub readiness_checks: u64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub schedule: Schedule,
    pub makespan: Time,
    /// Makespans of successive incumbents, strictly decreasing.
    pub history: Vec<Time>,
    pub stats: SearchStats,
    pub proved_optimal: bool,
}

/// Persistent list of executed slices, shared between a state and its
/// descendants.
#[derive(Debug, Clone, Default)]
struct Trace(Option<Arc<TraceNode>>);

#[derive(Debug)]
struct TraceNode {
    slices: Vec<(TaskId, Time, Time)>,
    parent: Option<Arc<TraceNode>>,
}

impl Drop for TraceNode {
    fn drop(&mut self) {
        // Unlink iteratively; long traces would otherwise recurse.
        let mut next = self.parent.take();
        while let Some(node) = next {
            match Arc::try_unwrap(node) {
                Ok(mut inner) => next = inner.parent.take(),
                Err(_) => break,
            }
        }
    }
}

impl Trace {
    fn push(&self, slices: Vec<(TaskId, Time, Time)>) -> Trace {
        if slices.is_empty() {
            return self.clone();
        }
        Trace(Some(Arc::new(TraceNode {
            slices,
            parent: self.0.clone(),
        })))
    }

    fn collect(&self) -> Vec<(TaskId, Time, Time)> {
        let mut out = Vec::new();
        let mut node = self.0.as_deref();
        while let Some(n) = node {
            out.extend_from_slice(&n.slices);
            node = n.parent.as_deref();
        }
        out
    }
}

/// A decision point of the transition system.
#[derive(Debug, Clone)]
pub struct SearchState<'a> {
    cursor: ChainCursor<'a>,
    /// Remaining duration of each chain's head; 0 once the chain is exhausted.
    remaining: Vec<u32>,
    running: Vec<bool>,
    free_machines: usize,
    time: Time,
    trace: Trace,
}

impl<'a> SearchState<'a> {
    pub fn time(&self) -> Time {
        self.time
    }

    pub fn free_machines(&self) -> usize {
        self.free_machines
    }

    pub fn cursor(&self) -> &ChainCursor<'a> {
        &self.cursor
    }

    pub fn is_completed(&self, task: TaskId) -> bool {
        self.cursor.is_completed(task)
    }

    /// `(task, remaining duration)` of every running task, by task id.
    pub fn running(&self) -> Vec<(TaskId, u32)> {
        let mut out: Vec<_> = (0..self.running.len())
            .filter(|&c| self.running[c])
            .map(|c| {
                (
                    self.cursor.head(c).expect("running chain has a head"),
                    self.remaining[c],
                )
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_terminal(&self) -> bool {
        self.cursor.is_exhausted()
    }

    /// Dominance key: everything that determines the future, but not the
    /// elapsed time or the trace.
    pub fn key(&self) -> StateKey {
        let mut key = Vec::with_capacity(2 * self.remaining.len());
        for (c, &index) in self.cursor.indices().iter().enumerate() {
            key.push(index as u32);
            key.push((self.remaining[c] << 1) | u32::from(self.running[c]));
        }
        StateKey(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(pub Vec<u32>);

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.iter().join("."))
    }
}

/// A successor together with the tasks dispatched to reach it.
#[derive(Debug, Clone)]
pub struct Transition<'a> {
    pub dispatched: Vec<TaskId>,
    pub state: SearchState<'a>,
}

/// The transition system for one graph, machine count and mode.
#[derive(Debug, Clone)]
pub struct SearchSpace<'g> {
    graph: &'g TaskGraph,
    chains: ChainDecomposition,
    machines: usize,
    mode: Mode,
}

impl<'g> SearchSpace<'g> {
    /// With `use_chains` the chain cover drives dispatch; otherwise every
    /// task is its own chain and readiness is checked task by task.
    pub fn new(graph: &'g TaskGraph, machines: usize, mode: Mode, use_chains: bool) -> Result<Self, SearchError> {
        let chains = if use_chains {
            chain_cover(graph)
        } else {
            ChainDecomposition::singletons(graph)
        };
        Self::with_chains(graph, machines, mode, chains)
    }

    pub fn with_chains(
        graph: &'g TaskGraph,
        machines: usize,
        mode: Mode,
        chains: ChainDecomposition,
    ) -> Result<Self, SearchError> {
        if machines == 0 {
            return Err(SearchError::NoMachines);
        }
        Ok(Self {
            graph,
            chains,
            machines,
            mode,
        })
    }

    pub fn graph(&self) -> &'g TaskGraph {
        self.graph
    }

    pub fn machines(&self) -> usize {
        self.machines
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn chains(&self) -> &ChainDecomposition {
        &self.chains
    }

    pub fn initial(&self) -> SearchState<'_> {
        let cursor = self.chains.cursor();
        let remaining = (0..self.chains.len())
            .map(|c| cursor.head(c).map_or(0, |t| self.graph.duration(t)))
            .collect();
        SearchState {
            cursor,
            remaining,
            running: vec![false; self.chains.len()],
            free_machines: self.machines,
            time: 0,
            trace: Trace::default(),
        }
    }

    /// Chains whose head can be dispatched now, ordered by task id.
    pub fn ready(&self, state: &SearchState<'_>) -> Vec<(TaskId, usize)> {
        let mut ready: Vec<(TaskId, usize)> = (0..self.chains.len())
            .filter(|&c| !state.running[c])
            .filter_map(|c| state.cursor.head(c).map(|t| (t, c)))
            .filter(|&(t, _)| self.graph.all_dependencies_done(t, &state.cursor))
            .collect();
        ready.sort_unstable();
        ready
    }

    /// Number of chains scanned by one readiness pass.
    fn scan_width(&self, state: &SearchState<'_>) -> u64 {
        (0..self.chains.len())
            .filter(|&c| state.cursor.head(c).is_some())
            .count() as u64
    }

    /// Sizes of dispatch subsets allowed at `state`, largest first.
    fn dispatch_sizes(&self, state: &SearchState<'_>, ready: usize) -> std::ops::RangeInclusive<usize> {
        let max = state.free_machines.min(ready);
        let nothing_running = !state.running.iter().any(|&r| r);
        let min = match self.mode {
            Mode::Preemptive { maximal_dispatch: true } => max,
            _ if nothing_running => 1,
            _ => 0,
        };
        min..=max
    }

    /// The dispatch choices at `state`, or `None` for a final state.
    pub(crate) fn options(&self, state: &SearchState<'_>, stats: &mut SearchStats) -> Option<DispatchOptions> {
        if state.is_terminal() {
            return None;
        }
        stats.readiness_checks += self.scan_width(state);
        let ready = self.ready(state);
        let sizes = self.dispatch_sizes(state, ready.len());
        Some(DispatchOptions { ready, sizes })
    }

    /// All dispatch decisions at `state`, each followed by the advance to
    /// the next completion event. Subsets come in decreasing size, ties in
    /// lexicographic order of task ids.
    pub fn successors<'s>(&'s self, state: &SearchState<'s>) -> Vec<Transition<'s>> {
        self.successors_counted(state, &mut SearchStats::default())
    }

    /// As [`successors`](Self::successors), but fails instead of building
    /// more than `limit` transitions.
    pub fn successors_limited<'s>(
        &'s self,
        state: &SearchState<'s>,
        limit: u128,
    ) -> Result<Vec<Transition<'s>>, SearchError> {
        let Some(options) = self.options(state, &mut SearchStats::default()) else {
            return Ok(Vec::new());
        };
        let count = options.count();
        if count > limit {
            return Err(SearchError::TooManyChoices { count, limit });
        }
        Ok(options
            .iter()
            .map(|picks| self.transition(state, &options, &picks))
            .collect())
    }

    pub(crate) fn successors_counted<'s>(
        &'s self,
        state: &SearchState<'s>,
        stats: &mut SearchStats,
    ) -> Vec<Transition<'s>> {
        let Some(options) = self.options(state, stats) else {
            return Vec::new();
        };
        let out: Vec<_> = options
            .iter()
            .map(|picks| self.transition(state, &options, &picks))
            .collect();
        stats.generated += out.len() as u64;
        out
    }

    /// Applies the choice `picks` (positions in the ready list).
    pub(crate) fn transition<'s>(
        &'s self,
        state: &SearchState<'s>,
        options: &DispatchOptions,
        picks: &[usize],
    ) -> Transition<'s> {
        let chains: Vec<usize> = picks.iter().map(|&i| options.ready[i].1).collect();
        Transition {
            dispatched: picks.iter().map(|&i| options.ready[i].0).collect(),
            state: self.advance(state, &chains),
        }
    }

    /// First successor in enumeration order; cheaper than building them all.
    pub(crate) fn first_successor<'s>(&'s self, state: &SearchState<'s>) -> Option<SearchState<'s>> {
        if state.is_terminal() {
            return None;
        }
        let ready = self.ready(state);
        let k = *self.dispatch_sizes(state, ready.len()).end();
        let chains: Vec<usize> = ready.iter().take(k).map(|&(_, c)| c).collect();
        Some(self.advance(state, &chains))
    }

    /// Dispatch `chains` (heads ready, not running) and run until the next
    /// completion.
    fn advance<'s>(&'s self, state: &SearchState<'s>, chains: &[usize]) -> SearchState<'s> {
        let mut next = state.clone();
        for &c in chains {
            debug_assert!(!next.running[c]);
            next.running[c] = true;
        }
        let active: Vec<usize> = (0..next.running.len()).filter(|&c| next.running[c]).collect();
        debug_assert!(active.len() <= self.machines);
        let delta = active
            .iter()
            .map(|&c| next.remaining[c])
            .min()
            .expect("advance with nothing running");
        let now = state.time;
        let preemptive = self.mode.is_preemptive();

        let slices: Vec<(TaskId, Time, Time)> = if preemptive {
            active
                .iter()
                .map(|&c| (next.cursor.head(c).expect("head"), now, Time::from(delta)))
                .collect()
        } else {
            chains
                .iter()
                .map(|&c| (next.cursor.head(c).expect("head"), now, Time::from(next.remaining[c])))
                .collect()
        };

        for &c in &active {
            next.remaining[c] -= delta;
            if next.remaining[c] == 0 {
                let task = next.cursor.head(c).expect("head");
                next.cursor
                    .advance_in_place(task)
                    .expect("running task is a chain head");
                next.remaining[c] = next.cursor.head(c).map_or(0, |t| self.graph.duration(t));
                next.running[c] = false;
            } else if preemptive {
                next.running[c] = false;
            }
        }
        next.free_machines = self.machines - next.running.iter().filter(|&&r| r).count();
        next.time = now + Time::from(delta);
        next.trace = state.trace.push(slices);
        next
    }

    /// Admissible bound on the final makespan reachable from `state`:
    /// elapsed time plus the larger of the longest remaining path and the
    /// remaining work spread over all machines.
    pub fn lower_bound(&self, state: &SearchState<'_>) -> Time {
        let n = self.graph.len();
        let mut tail = vec![0 as Time; n];
        let mut longest = 0;
        let mut work: Time = 0;
        for &t in self.graph.topological_order().iter().rev() {
            let (c, i) = self.chains.position(t);
            let index = state.cursor.indices()[c];
            if i < index {
                continue;
            }
            let rem = if i == index {
                Time::from(state.remaining[c])
            } else {
                Time::from(self.graph.duration(t))
            };
            work += rem;
            let below = self.graph.successors(t).iter().map(|&s| tail[s]).max().unwrap_or(0);
            tail[t] = rem + below;
            longest = longest.max(tail[t]);
        }
        let spread = work.div_ceil(self.machines as Time);
        state.time + longest.max(spread)
    }

    /// The schedule executed along the path to `state`.
    pub fn schedule_of(&self, state: &SearchState<'_>) -> Schedule {
        Schedule::from_slices(self.machines, state.trace.collect())
    }

    pub(crate) fn outcome(
        &self,
        state: &SearchState<'_>,
        history: Vec<Time>,
        stats: SearchStats,
        proved_optimal: bool,
    ) -> SearchOutcome {
        SearchOutcome {
            schedule: self.schedule_of(state),
            makespan: state.time,
            history,
            stats,
            proved_optimal,
        }
    }

    /// Follows the first successor until a complete schedule is reached.
    pub(crate) fn greedy_dive<'s>(&'s self, stats: &mut SearchStats) -> SearchState<'s> {
        let mut state = self.initial();
        while let Some(next) = self.first_successor(&state) {
            stats.expanded += 1;
            stats.readiness_checks += self.scan_width(&state);
            stats.generated += 1;
            state = next;
        }
        state
    }
}

/// Ordering used by the priority queue: smallest bound first, then the
/// deepest state, then insertion order.
pub(crate) type Priority = (Reverse<Time>, Time, Reverse<u64>);

/// The dispatch subsets available at one decision point, enumerated in
/// decreasing size and lexicographically within a size, and addressable by
/// their index in that order.
#[derive(Debug, Clone)]
pub(crate) struct DispatchOptions {
    ready: Vec<(TaskId, usize)>,
    sizes: std::ops::RangeInclusive<usize>,
}

impl DispatchOptions {
    /// Number of choices, saturating at `u128::MAX`.
    pub(crate) fn count(&self) -> u128 {
        let n = self.ready.len();
        self.sizes
            .clone()
            .fold(0u128, |acc, k| acc.saturating_add(binomial(n, k)))
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let n = self.ready.len();
        self.sizes.clone().rev().flat_map(move |k| (0..n).combinations(k))
    }

    /// The choice at position `index` of [`iter`](Self::iter).
    pub(crate) fn nth(&self, mut index: u128) -> Vec<usize> {
        let n = self.ready.len();
        for k in self.sizes.clone().rev() {
            let in_size = binomial(n, k);
            if index >= in_size {
                index -= in_size;
                continue;
            }
            let mut picks = Vec::with_capacity(k);
            let mut next = 0;
            for slot in 0..k {
                loop {
                    let with_next = binomial(n - next - 1, k - slot - 1);
                    if index < with_next {
                        break;
                    }
                    index -= with_next;
                    next += 1;
                }
                picks.push(next);
                next += 1;
            }
            return picks;
        }
        panic!("dispatch choice index out of range");
    }
}

/// `n` choose `k`, saturating at `u128::MAX`. Saturation only happens for
/// values above `2^64`, so [`DispatchOptions::nth`] stays exact for any
/// `u64` index.
fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        match c.checked_mul((n - i) as u128) {
            Some(v) => c = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    c
}
