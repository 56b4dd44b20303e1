//! Learned dispatch strategies.
//!
//! A strategy is a table of action values over the event-driven state
//! space, learned with one-step temporal-difference (Q-learning) updates.
//! Rewards are zero except on reaching a complete schedule, which pays
//! `-makespan`; there is no discounting, so a value estimates the negated
//! final makespan. New actions start at the negated lower bound of their
//! successor state, which is optimistic and steers early episodes towards
//! untried choices.
//!
//! Task completions are deterministic once a dispatch is chosen, so the
//! only randomness in an episode is the epsilon-greedy exploration, which
//! decays linearly over the training run.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;
use crate::schedule::Schedule;
use crate::search::{Mode, SearchError, SearchSpace, SearchState, Transition};
use crate::taskgraph::{TaskGraph, TaskId, Time};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("strategy was learned for {expected}, not {found}")]
    Mismatch { expected: String, found: String },
    #[error("strategy file: {0}")]
    Io(#[from] std::io::Error),
    #[error("strategy file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningParams {
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epsilon_start: 0.3,
            epsilon_end: 0.01,
        }
    }
}

impl LearningParams {
    fn epsilon(&self, episode: usize, episodes: usize) -> f64 {
        if episodes <= 1 {
            return self.epsilon_start;
        }
        let frac = episode as f64 / (episodes - 1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    pub dispatch: Vec<TaskId>,
    pub value: f64,
}

/// Action values keyed by the engine's state key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTable {
    pub tasks: usize,
    pub machines: usize,
    pub mode: Mode,
    pub params: LearningParams,
    pub episodes: usize,
    pub entries: BTreeMap<String, Vec<ActionValue>>,
}

impl StrategyTable {
    /// A strategy that has seen nothing; simulation under it is uniform.
    pub fn empty(graph: &TaskGraph, machines: usize, mode: Mode) -> Self {
        Self {
            tasks: graph.len(),
            machines,
            mode,
            params: LearningParams::default(),
            episodes: 0,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("strategy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnerError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnerError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LearnerError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self, graph: &TaskGraph, machines: usize, mode: Mode) -> Result<(), LearnerError> {
        let describe = |t: usize, m: usize, mode: Mode| format!("{t} tasks on {m} machines ({mode})");
        if self.tasks != graph.len() || self.machines != machines || self.mode != mode {
            return Err(LearnerError::Mismatch {
                expected: describe(self.tasks, self.machines, self.mode),
                found: describe(graph.len(), machines, mode),
            });
        }
        Ok(())
    }

    /// Recorded values for `state`, provided they line up with the legal
    /// dispatches enumerated now.
    fn lookup(&self, key: &str, transitions: &[Transition<'_>]) -> Option<&[ActionValue]> {
        let entry = self.entries.get(key)?;
        let aligned =
            entry.len() == transitions.len() && entry.iter().zip(transitions).all(|(a, t)| a.dispatch == t.dispatched);
        aligned.then_some(entry.as_slice())
    }
}

/// Decision points with more dispatch choices than this are rejected by
/// the learner and the simulator, whose tables hold one value per choice.
pub const ACTION_LIMIT: u128 = 100_000;

fn initial_values(space: &SearchSpace<'_>, transitions: &[Transition<'_>]) -> Vec<ActionValue> {
    transitions
        .iter()
        .map(|t| ActionValue {
            dispatch: t.dispatched.clone(),
            value: -(space.lower_bound(&t.state) as f64),
        })
        .collect()
}

fn best_value(values: &[ActionValue]) -> f64 {
    values.iter().map(|a| a.value).fold(f64::NEG_INFINITY, f64::max)
}

/// First action of maximal value.
fn argmax(values: &[ActionValue]) -> usize {
    let best = best_value(values);
    values.iter().position(|a| a.value == best).unwrap_or(0)
}

/// Trains a strategy over `episodes` seeded episodes.
pub fn q_learn(
    graph: &TaskGraph,
    machines: usize,
    mode: Mode,
    episodes: usize,
    seed: u64,
    params: LearningParams,
) -> Result<StrategyTable, LearnerError> {
    let space = SearchSpace::new(graph, machines, mode, true)?;
    let mut table = StrategyTable::empty(graph, machines, mode);
    table.params = params;
    table.episodes = episodes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for episode in 0..episodes {
        let epsilon = params.epsilon(episode, episodes);
        let mut state = space.initial();
        let mut transitions = space.successors_limited(&state, ACTION_LIMIT)?;
        while !state.is_terminal() {
            let key = state.key().to_string();
            let values = table
                .entries
                .entry(key.clone())
                .or_insert_with(|| initial_values(&space, &transitions));
            let action = if rng.random_bool(epsilon) {
                rng.random_range(0..transitions.len())
            } else {
                argmax(values)
            };

            let next = transitions.swap_remove(action).state;
            let next_transitions = space.successors_limited(&next, ACTION_LIMIT)?;
            let target = if next.is_terminal() {
                -(next.time() as f64)
            } else {
                let next_key = next.key().to_string();
                let next_values = table
                    .entries
                    .entry(next_key)
                    .or_insert_with(|| initial_values(&space, &next_transitions));
                best_value(next_values)
            };
            let q = &mut table.entries.get_mut(&key).expect("inserted above")[action].value;
            *q += params.learning_rate * (target - *q);

            state = next;
            transitions = next_transitions;
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationRun {
    pub makespan: Time,
    pub schedule: Schedule,
}

fn rollout<'s>(
    space: &'s SearchSpace<'_>,
    strategy: &StrategyTable,
    mut choose: impl FnMut(Option<&[ActionValue]>, usize) -> usize,
) -> Result<SearchState<'s>, SearchError> {
    let mut state = space.initial();
    while !state.is_terminal() {
        let mut transitions = space.successors_limited(&state, ACTION_LIMIT)?;
        let key = state.key().to_string();
        let values = strategy.lookup(&key, &transitions);
        let action = choose(values, transitions.len());
        state = transitions.swap_remove(action).state;
    }
    Ok(state)
}

/// Follows the strategy greedily; ties and unseen states go to the first
/// legal dispatch in enumeration order.
pub fn greedy_rollout(graph: &TaskGraph, strategy: &StrategyTable) -> Result<SimulationRun, LearnerError> {
    let mode = strategy.mode;
    strategy.check(graph, strategy.machines, mode)?;
    let space = SearchSpace::new(graph, strategy.machines, mode, true)?;
    let end = rollout(&space, strategy, |values, _| values.map_or(0, argmax))?;
    Ok(SimulationRun {
        makespan: end.time(),
        schedule: space.schedule_of(&end),
    })
}

/// Runs the strategy `runs` times. Each run picks uniformly among the
/// highest-valued dispatches, or among all legal dispatches in states the
/// strategy has never seen. Run `i` draws from stream `i` of a generator
/// seeded with `seed`, so the output does not depend on `execution`.
pub fn simulate_strategy(
    graph: &TaskGraph,
    machines: usize,
    mode: Mode,
    strategy: &StrategyTable,
    runs: usize,
    seed: u64,
    execution: Execution,
) -> Result<Vec<SimulationRun>, LearnerError> {
    strategy.check(graph, machines, mode)?;
    let space = SearchSpace::new(graph, machines, mode, true)?;
    let runs: Vec<Result<SimulationRun, SearchError>> = execution.map_range(runs, |run| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run as u64);
        let end = rollout(&space, strategy, |values, n| match values {
            Some(values) => {
                let best = best_value(values);
                let ties: Vec<usize> = (0..n).filter(|&i| values[i].value == best).collect();
                ties[rng.random_range(0..ties.len())]
            }
            None => rng.random_range(0..n),
        })?;
        Ok(SimulationRun {
            makespan: end.time(),
            schedule: space.schedule_of(&end),
        })
    });
    Ok(runs.into_iter().collect::<Result<_, _>>()?)
}
