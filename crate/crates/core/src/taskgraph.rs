//! Task graphs: tasks with integer durations and a precedence DAG.
//!
//! The strict partial order between tasks is the transitive closure of the
//! stored direct edges. Readiness checks only ever look at direct
//! predecessors, which is equivalent because completion propagates along
//! every path.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

/// Dense, zero-based task identifier.
pub type TaskId = usize;

/// Integer time unit used for durations and event times.
pub type Time = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("task {task} lists unknown predecessor {pred}")]
    UnknownPredecessor { task: usize, pred: usize },
    #[error("dependency cycle through task {task}")]
    CycleDetected { task: TaskId },
    #[error("task {task} has zero duration")]
    ZeroDuration { task: usize },
    #[error("expected {expected} records, found {found}")]
    CountMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub duration: u32,
    /// Direct predecessors, sorted ascending.
    pub predecessors: Vec<TaskId>,
}

/// Anything that can answer "has this task completed?".
pub trait CompletedSet {
    fn is_completed(&self, task: TaskId) -> bool;
}

impl CompletedSet for HashSet<TaskId> {
    fn is_completed(&self, task: TaskId) -> bool {
        self.contains(&task)
    }
}

impl CompletedSet for BTreeSet<TaskId> {
    fn is_completed(&self, task: TaskId) -> bool {
        self.contains(&task)
    }
}

impl CompletedSet for [bool] {
    fn is_completed(&self, task: TaskId) -> bool {
        self[task]
    }
}

impl CompletedSet for Vec<bool> {
    fn is_completed(&self, task: TaskId) -> bool {
        self[task]
    }
}

impl<F: Fn(TaskId) -> bool> CompletedSet for F {
    fn is_completed(&self, task: TaskId) -> bool {
        self(task)
    }
}

/// Immutable task graph. Ids are exactly `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskGraph {
    tasks: Vec<Task>,
    successors: Vec<Vec<TaskId>>,
    /// Topological order, smallest ready id first.
    topo: Vec<TaskId>,
}

impl TaskGraph {
    /// Builds a graph from per-task durations and `(pred, succ)` edges.
    /// Duplicate edges are collapsed.
    pub fn new(durations: Vec<u32>, edges: &[(TaskId, TaskId)]) -> Result<Self, GraphError> {
        let n = durations.len();
        if let Some(task) = durations.iter().position(|&d| d == 0) {
            return Err(GraphError::ZeroDuration { task });
        }
        let mut preds: Vec<BTreeSet<TaskId>> = vec![BTreeSet::new(); n];
        for &(p, s) in edges {
            if s >= n {
                return Err(GraphError::UnknownPredecessor { task: s, pred: p });
            }
            if p >= n {
                return Err(GraphError::UnknownPredecessor { task: s, pred: p });
            }
            if p == s {
                return Err(GraphError::CycleDetected { task: s });
            }
            preds[s].insert(p);
        }
        let tasks: Vec<Task> = durations
            .into_iter()
            .zip(preds)
            .enumerate()
            .map(|(id, (duration, p))| Task {
                id,
                duration,
                predecessors: p.into_iter().collect(),
            })
            .collect();
        let mut successors = vec![Vec::new(); n];
        for t in &tasks {
            for &p in &t.predecessors {
                successors[p].push(t.id);
            }
        }
        let topo = kahn_order(&tasks, &successors)?;
        Ok(Self {
            tasks,
            successors,
            topo,
        })
    }

    pub fn empty() -> Self {
        Self {
            tasks: Vec::new(),
            successors: Vec::new(),
            topo: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn duration(&self, task: TaskId) -> u32 {
        self.tasks[task].duration
    }

    pub fn predecessors(&self, task: TaskId) -> &[TaskId] {
        &self.tasks[task].predecessors
    }

    pub fn successors(&self, task: TaskId) -> &[TaskId] {
        &self.successors[task]
    }

    /// All direct edges as `(pred, succ)`, sorted.
    pub fn edges(&self) -> Vec<(TaskId, TaskId)> {
        let mut edges: Vec<_> = self
            .tasks
            .iter()
            .flat_map(|t| t.predecessors.iter().map(move |&p| (p, t.id)))
            .collect();
        edges.sort_unstable();
        edges
    }

    pub fn edge_count(&self) -> usize {
        self.tasks.iter().map(|t| t.predecessors.len()).sum()
    }

    /// Kahn order with a smallest-id-first ready queue.
    pub fn topological_order(&self) -> &[TaskId] {
        &self.topo
    }

    /// True iff every direct predecessor of `task` is completed.
    pub fn all_dependencies_done<C: CompletedSet + ?Sized>(&self, task: TaskId, completed: &C) -> bool {
        self.tasks[task].predecessors.iter().all(|&p| completed.is_completed(p))
    }

    /// Longest duration-weighted path, endpoints included.
    pub fn critical_path_length(&self) -> Time {
        self.bottom_levels().into_iter().max().unwrap_or(0)
    }

    /// For every task, the longest path starting at it (its own duration included).
    pub fn bottom_levels(&self) -> Vec<Time> {
        let mut level = vec![0; self.len()];
        for &t in self.topo.iter().rev() {
            let tail = self.successors[t].iter().map(|&s| level[s]).max().unwrap_or(0);
            level[t] = Time::from(self.tasks[t].duration) + tail;
        }
        level
    }

    pub fn total_work(&self) -> Time {
        self.tasks.iter().map(|t| Time::from(t.duration)).sum()
    }

    /// Emits the STG grammar with entry/exit dummies re-added: ids shift by
    /// one, the entry dummy is node 0 and the exit dummy is node `T+1`.
    pub fn to_stg(&self) -> String {
        let n = self.len();
        let mut out = String::new();
        let _ = writeln!(out, "{n}");
        let _ = writeln!(out, "0 0 0");
        for t in &self.tasks {
            let preds: Vec<usize> = if t.predecessors.is_empty() {
                vec![0]
            } else {
                t.predecessors.iter().map(|&p| p + 1).collect()
            };
            let _ = write!(out, "{} {} {}", t.id + 1, t.duration, preds.len());
            for p in preds {
                let _ = write!(out, " {p}");
            }
            out.push('\n');
        }
        let sinks: Vec<usize> = (0..n)
            .filter(|&t| self.successors[t].is_empty())
            .map(|t| t + 1)
            .collect();
        let sinks = if sinks.is_empty() { vec![0] } else { sinks };
        let _ = write!(out, "{} 0 {}", n + 1, sinks.len());
        for s in sinks {
            let _ = write!(out, " {s}");
        }
        out.push('\n');
        out
    }
}

fn kahn_order(tasks: &[Task], successors: &[Vec<TaskId>]) -> Result<Vec<TaskId>, GraphError> {
    let n = tasks.len();
    let mut indegree: Vec<usize> = tasks.iter().map(|t| t.predecessors.len()).collect();
    let mut ready: BinaryHeap<Reverse<TaskId>> = (0..n).filter(|&t| indegree[t] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(t)) = ready.pop() {
        order.push(t);
        for &s in &successors[t] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.push(Reverse(s));
            }
        }
    }
    if order.len() < n {
        let task = (0..n).find(|&t| indegree[t] > 0).unwrap_or(0);
        return Err(GraphError::CycleDetected { task });
    }
    Ok(order)
}

struct Record {
    line: usize,
    id: usize,
    duration: u32,
    preds: Vec<usize>,
}

/// Parses the standard task graph set format.
///
/// The first significant line holds the task count `T`, followed by one
/// record per node: `id duration pred_count pred...`. Standard files carry
/// `T + 2` records whose nodes `0` and `T + 1` are zero-duration dummies;
/// those are stripped and the real tasks renumbered `0..T`. Files with
/// exactly `T` records (ids `0..T`) are accepted as-is. Lines starting
/// with `#` and blank lines are ignored.
pub fn parse_stg(text: &str) -> Result<TaskGraph, GraphError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines.next().ok_or(GraphError::MalformedLine {
        line: 1,
        reason: "missing task count".into(),
    })?;
    let mut header_tokens = header.split_whitespace();
    let count: usize = parse_token(header_tokens.next(), header_line, "task count")?;
    if header_tokens.next().is_some() {
        return Err(GraphError::MalformedLine {
            line: header_line,
            reason: "task count line must hold a single integer".into(),
        });
    }

    let mut records = Vec::new();
    for (line, content) in lines {
        let mut tokens = content.split_whitespace();
        let id: usize = parse_token(tokens.next(), line, "task id")?;
        let duration: u32 = parse_token(tokens.next(), line, "duration")?;
        let k: usize = parse_token(tokens.next(), line, "predecessor count")?;
        let preds = (0..k)
            .map(|_| parse_token(tokens.next(), line, "predecessor id"))
            .collect::<Result<Vec<usize>, _>>()?;
        if tokens.next().is_some() {
            return Err(GraphError::MalformedLine {
                line,
                reason: format!("more than {k} predecessor ids"),
            });
        }
        records.push(Record {
            line,
            id,
            duration,
            preds,
        });
    }

    let with_dummies = if records.len() == count + 2 {
        true
    } else if records.len() == count {
        false
    } else {
        return Err(GraphError::CountMismatch {
            expected: count + 2,
            found: records.len(),
        });
    };
    let node_count = records.len();

    let mut by_id: Vec<Option<Record>> = (0..node_count).map(|_| None).collect();
    for r in records {
        if r.id >= node_count {
            return Err(GraphError::MalformedLine {
                line: r.line,
                reason: format!("task id {} out of range 0..{}", r.id, node_count),
            });
        }
        let line = r.line;
        let id = r.id;
        if by_id[id].replace(r).is_some() {
            return Err(GraphError::MalformedLine {
                line,
                reason: format!("duplicate task id {id}"),
            });
        }
    }
    let records: Vec<Record> = by_id.into_iter().map(|r| r.expect("ids are dense")).collect();

    for r in &records {
        if let Some(&pred) = r.preds.iter().find(|&&p| p >= node_count) {
            return Err(GraphError::UnknownPredecessor { task: r.id, pred });
        }
    }

    let (is_dummy, offset): (Box<dyn Fn(usize) -> bool>, usize) = if with_dummies {
        (Box::new(move |id| id == 0 || id == count + 1), 1)
    } else {
        (Box::new(|_| false), 0)
    };

    let mut durations = Vec::with_capacity(count);
    let mut edges = Vec::new();
    for r in &records {
        if is_dummy(r.id) {
            if r.duration != 0 {
                return Err(GraphError::MalformedLine {
                    line: r.line,
                    reason: format!("dummy node {} must have zero duration", r.id),
                });
            }
            // Dummy-to-real edges are implied by the dummy's position in the order.
            for &p in &r.preds {
                if p == r.id {
                    return Err(GraphError::CycleDetected { task: r.id });
                }
            }
            continue;
        }
        if r.duration == 0 {
            return Err(GraphError::ZeroDuration { task: r.id });
        }
        durations.push(r.duration);
        for &p in &r.preds {
            if is_dummy(p) {
                if with_dummies && p == count + 1 {
                    return Err(GraphError::CycleDetected { task: r.id });
                }
                continue;
            }
            edges.push((p - offset, r.id - offset));
        }
    }
    TaskGraph::new(durations, &edges).map_err(|e| match e {
        GraphError::CycleDetected { task } => GraphError::CycleDetected { task: task + offset },
        other => other,
    })
}

fn parse_token<T: std::str::FromStr>(token: Option<&str>, line: usize, what: &str) -> Result<T, GraphError> {
    let token = token.ok_or_else(|| GraphError::MalformedLine {
        line,
        reason: format!("missing {what}"),
    })?;
    token.parse().map_err(|_| GraphError::MalformedLine {
        line,
        reason: format!("invalid {what} {token:?}"),
    })
}
