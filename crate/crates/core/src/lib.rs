//! Near-optimal task-graph scheduling.
//!
//! A task graph (tasks with integer durations and precedence edges) is
//! scheduled on identical machines, with or without preemption. Schedules
//! come from an event-driven state space explored by
//!
//!  * [`search::best_first_search`]: branch-and-bound, provably optimal;
//!  * [`search::random_dfs`]: seeded anytime depth-first search;
//!  * [`learner`]: a tabular strategy learned by temporal-difference updates
//!    and evaluated by repeated simulation.
//!
//! Dispatch only considers the least unfinished task of each chain in a
//! chain cover of the precedence order ([`chains`]). Every schedule can be
//! checked against the formal conditions with
//! [`schedule::validate_schedule`].
//!
//! The `parallel` feature (on by default) runs independent jobs such as
//! seed sweeps, strategy simulations and benchmark runs on a rayon pool;
//! without it the same code runs sequentially.
//!
//! ```
//! use tgsched::search::{best_first_search, Budget, Mode};
//! use tgsched::taskgraph::parse_stg;
//!
//! let graph = parse_stg("2\n0 0 0\n1 3 1 0\n2 4 1 0\n3 0 2 1 2\n").unwrap();
//! let out = best_first_search(&graph, 1, Mode::NonPreemptive, true, Budget::default()).unwrap();
//! assert_eq!(out.makespan, 7);
//! ```

pub mod bench;
pub mod chains;
pub mod cli;
pub mod generate;
pub mod learner;
pub mod par;
pub mod schedule;
pub mod search;
pub mod taskgraph;

pub use chains::{chain_cover, ChainCursor, ChainDecomposition};
pub use schedule::{makespan, validate_schedule, Schedule, Segment};
pub use search::{Budget, Mode, SearchOutcome};
pub use taskgraph::{parse_stg, TaskGraph, TaskId, Time};
