//! Schedules, their validation, and Gantt rendering.
//!
//! A schedule maps every task to one or more execution segments. A task
//! with a single segment ran without preemption. Segments are half-open
//! intervals `[start, start + dur)`, so a successor may start exactly when
//! its predecessor finishes. All times are integers; every engine here only
//! produces integer event times.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taskgraph::{TaskGraph, TaskId, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: Time,
    #[serde(rename = "dur")]
    pub duration: Time,
    pub machine: usize,
}

impl Segment {
    pub fn end(&self) -> Time {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(rename = "machines")]
    pub machine_count: usize,
    #[serde(rename = "tasks")]
    pub assignments: BTreeMap<TaskId, Vec<Segment>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("schedule references unknown task {task}")]
    UnknownTask { task: TaskId },
    #[error("schedule is invalid: {0}")]
    Invalid(ValidationReport),
}

/// The four conditions a possible schedule must meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    /// A task starts only after all its predecessors finished.
    Precedence,
    /// At most `machines` segments are active at any instant.
    Machines,
    /// A task never runs in parallel with itself.
    SelfParallel,
    /// Segment durations sum to the task duration.
    Duration,
}

impl Condition {
    pub fn number(self) -> u8 {
        match self {
            Condition::Precedence => 1,
            Condition::Machines => 2,
            Condition::SelfParallel => 3,
            Condition::Duration => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::Precedence => "precedence",
            Condition::Machines => "machines",
            Condition::SelfParallel => "self-parallel",
            Condition::Duration => "duration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Precedence {
        task: TaskId,
        start: Time,
        predecessor: TaskId,
        predecessor_finish: Time,
    },
    Capacity {
        time: Time,
        active: usize,
    },
    MachineOutOfRange {
        task: TaskId,
        machine: usize,
    },
    MachineOverlap {
        machine: usize,
        time: Time,
        tasks: (TaskId, TaskId),
    },
    SelfOverlap {
        task: TaskId,
        time: Time,
    },
    EmptySegment {
        task: TaskId,
        start: Time,
    },
    Duration {
        task: TaskId,
        expected: Time,
        actual: Time,
    },
}

impl Violation {
    pub fn condition(&self) -> Condition {
        match self {
            Violation::Precedence { .. } => Condition::Precedence,
            Violation::Capacity { .. } | Violation::MachineOutOfRange { .. } | Violation::MachineOverlap { .. } => {
                Condition::Machines
            }
            Violation::SelfOverlap { .. } => Condition::SelfParallel,
            Violation::EmptySegment { .. } | Violation::Duration { .. } => Condition::Duration,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.condition();
        write!(f, "condition {} ({}): ", c.number(), c.name())?;
        match self {
            Violation::Precedence {
                task,
                start,
                predecessor,
                predecessor_finish,
            } => write!(
                f,
                "task {task} starts at {start} before predecessor {predecessor} finishes at {predecessor_finish}"
            ),
            Violation::Capacity { time, active } => {
                write!(f, "{active} segments active at time {time}")
            }
            Violation::MachineOutOfRange { task, machine } => {
                write!(f, "task {task} uses machine {machine} which does not exist")
            }
            Violation::MachineOverlap { machine, time, tasks } => write!(
                f,
                "tasks {} and {} overlap on machine {machine} at time {time}",
                tasks.0, tasks.1
            ),
            Violation::SelfOverlap { task, time } => {
                write!(f, "task {task} runs twice at time {time}")
            }
            Violation::EmptySegment { task, start } => {
                write!(f, "task {task} has a zero-length segment at {start}")
            }
            Violation::Duration { task, expected, actual } => {
                write!(f, "task {task} runs for {actual}, needs {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, condition: Condition) -> bool {
        self.violations.iter().any(|v| v.condition() == condition)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl Schedule {
    pub fn new(machine_count: usize) -> Self {
        Self {
            machine_count,
            assignments: BTreeMap::new(),
        }
    }

    /// Builds a schedule from machine-less `(task, start, duration)` slices.
    ///
    /// Machines are assigned greedily in start order; a slice prefers the
    /// machine its task used last when that machine is free. Contiguous
    /// slices of one task on the same machine are merged. The caller must
    /// ensure that no more than `machine_count` slices overlap.
    pub fn from_slices(machine_count: usize, mut slices: Vec<(TaskId, Time, Time)>) -> Self {
        slices.sort_unstable_by_key(|&(task, start, _)| (start, task));
        let mut busy_until: Vec<Time> = vec![0; machine_count];
        let mut last_machine: BTreeMap<TaskId, usize> = BTreeMap::new();
        let mut schedule = Schedule::new(machine_count);

        let mut i = 0;
        while i < slices.len() {
            let start = slices[i].1;
            let group_end = slices[i..]
                .iter()
                .position(|s| s.1 != start)
                .map_or(slices.len(), |p| i + p);
            let group = &slices[i..group_end];
            let mut chosen: Vec<Option<usize>> = vec![None; group.len()];
            // First keep continuing tasks on their previous machine.
            for (k, &(task, _, _)) in group.iter().enumerate() {
                if let Some(&m) = last_machine.get(&task) {
                    if busy_until[m] <= start && !chosen.contains(&Some(m)) {
                        chosen[k] = Some(m);
                    }
                }
            }
            for k in 0..group.len() {
                if chosen[k].is_none() {
                    let m = (0..machine_count)
                        .find(|&m| busy_until[m] <= start && !chosen.contains(&Some(m)))
                        .expect("more overlapping slices than machines");
                    chosen[k] = Some(m);
                }
            }
            for (&(task, start, duration), m) in group.iter().zip(chosen) {
                let m = m.expect("assigned above");
                busy_until[m] = start + duration;
                last_machine.insert(task, m);
                let segments = schedule.assignments.entry(task).or_default();
                match segments.last_mut() {
                    Some(last) if last.machine == m && last.end() == start => last.duration += duration,
                    _ => segments.push(Segment {
                        start,
                        duration,
                        machine: m,
                    }),
                }
            }
            i = group_end;
        }
        schedule
    }

    /// True when every task has exactly one segment.
    pub fn is_non_preemptive(&self) -> bool {
        self.assignments.values().all(|s| s.len() == 1)
    }

    pub fn segment_count(&self) -> usize {
        self.assignments.values().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Finish time of the last segment; 0 for the empty schedule.
pub fn makespan(schedule: &Schedule) -> Time {
    schedule
        .assignments
        .values()
        .flatten()
        .map(Segment::end)
        .max()
        .unwrap_or(0)
}

/// Checks all four schedule conditions plus per-machine consistency.
pub fn validate_schedule(graph: &TaskGraph, schedule: &Schedule) -> Result<ValidationReport, ScheduleError> {
    if let Some(&task) = schedule.assignments.keys().find(|&&t| t >= graph.len()) {
        return Err(ScheduleError::UnknownTask { task });
    }
    let mut violations = Vec::new();
    let empty = Vec::new();
    let segments_of = |t: TaskId| schedule.assignments.get(&t).unwrap_or(&empty);

    // Condition 1 against every ancestor: track the latest finish seen
    // along any path into each task.
    let finish: Vec<Option<Time>> = (0..graph.len())
        .map(|t| segments_of(t).iter().map(Segment::end).max())
        .collect();
    let mut ancestor_finish: Vec<Option<(Time, TaskId)>> = vec![None; graph.len()];
    for &t in graph.topological_order() {
        let mut latest: Option<(Time, TaskId)> = None;
        for &p in graph.predecessors(t) {
            let candidates = [finish[p].map(|f| (f, p)), ancestor_finish[p]];
            for c in candidates.into_iter().flatten() {
                if latest.is_none_or(|l| c.0 > l.0) {
                    latest = Some(c);
                }
            }
        }
        ancestor_finish[t] = latest;
        let first_start = segments_of(t).iter().map(|s| s.start).min();
        if let (Some(start), Some((pf, p))) = (first_start, latest) {
            if start < pf {
                violations.push(Violation::Precedence {
                    task: t,
                    start,
                    predecessor: p,
                    predecessor_finish: pf,
                });
            }
        }
    }

    // Condition 2: sweep over segment endpoints, ends before starts.
    let mut events: Vec<(Time, i8)> = Vec::new();
    for segs in schedule.assignments.values() {
        for s in segs.iter().filter(|s| s.duration > 0) {
            events.push((s.start, 1));
            events.push((s.end(), -1));
        }
    }
    events.sort_unstable();
    let mut active = 0i64;
    for (time, delta) in events {
        active += i64::from(delta);
        if delta > 0 && active as usize > schedule.machine_count {
            violations.push(Violation::Capacity {
                time,
                active: active as usize,
            });
            break;
        }
    }

    let mut per_machine: BTreeMap<usize, Vec<(Segment, TaskId)>> = BTreeMap::new();
    for (&task, segs) in &schedule.assignments {
        for s in segs {
            if s.machine >= schedule.machine_count {
                violations.push(Violation::MachineOutOfRange {
                    task,
                    machine: s.machine,
                });
            }
            if s.duration > 0 {
                per_machine.entry(s.machine).or_default().push((*s, task));
            }
        }
    }
    for (machine, mut segs) in per_machine {
        segs.sort_unstable();
        for pair in segs.windows(2) {
            let (a, ta) = pair[0];
            let (b, tb) = pair[1];
            if b.start < a.end() {
                violations.push(Violation::MachineOverlap {
                    machine,
                    time: b.start,
                    tasks: (ta, tb),
                });
            }
        }
    }

    // Conditions 3 and 4.
    for t in 0..graph.len() {
        let mut segs = segments_of(t).clone();
        segs.sort_unstable();
        for s in segs.iter().filter(|s| s.duration == 0) {
            violations.push(Violation::EmptySegment {
                task: t,
                start: s.start,
            });
        }
        for pair in segs.windows(2) {
            if pair[1].start < pair[0].end() {
                violations.push(Violation::SelfOverlap {
                    task: t,
                    time: pair[1].start,
                });
            }
        }
        let actual: Time = segs.iter().map(|s| s.duration).sum();
        let expected = Time::from(graph.duration(t));
        if actual != expected {
            violations.push(Violation::Duration {
                task: t,
                expected,
                actual,
            });
        }
    }

    Ok(ValidationReport { violations })
}

const LANE_HEIGHT: u64 = 30;
const LANE_GAP: u64 = 10;
const UNIT: u64 = 10;
const MARGIN: u64 = 40;

/// Renders one lane per machine and one labeled rectangle per segment.
pub fn render_gantt(schedule: &Schedule, graph: &TaskGraph) -> Result<String, ScheduleError> {
    let report = validate_schedule(graph, schedule)?;
    if !report.is_valid() {
        return Err(ScheduleError::Invalid(report));
    }
    let span = makespan(schedule);
    let width = 2 * MARGIN + span * UNIT;
    let height = 2 * MARGIN + schedule.machine_count as u64 * (LANE_HEIGHT + LANE_GAP);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<g font-family="monospace" font-size="11">"#);
    for m in 0..schedule.machine_count {
        let y = MARGIN + m as u64 * (LANE_HEIGHT + LANE_GAP);
        let _ = writeln!(
            svg,
            r#"<text class="lane" x="4" y="{}">m{m}</text>"#,
            y + LANE_HEIGHT / 2 + 4
        );
    }
    let mut segments: Vec<(Segment, TaskId)> = schedule
        .assignments
        .iter()
        .flat_map(|(&t, segs)| segs.iter().map(move |s| (*s, t)))
        .collect();
    segments.sort_unstable_by_key(|&(s, t)| (s.machine, s.start, t));
    for (s, t) in segments {
        let x = MARGIN + s.start * UNIT;
        let y = MARGIN + s.machine as u64 * (LANE_HEIGHT + LANE_GAP);
        let w = s.duration * UNIT;
        let _ = writeln!(
            svg,
            r#"<rect class="segment" data-task="{t}" data-lane="{}" data-start="{}" data-dur="{}" x="{x}" y="{y}" width="{w}" height="{LANE_HEIGHT}" fill="{}" stroke="black"/>"#,
            s.machine,
            s.start,
            s.duration,
            palette(t)
        );
        let _ = writeln!(
            svg,
            r#"<text class="label" x="{}" y="{}">P{}</text>"#,
            x + 3,
            y + LANE_HEIGHT / 2 + 4,
            t + 1
        );
    }
    let axis_y = height - MARGIN / 2;
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="black"/>"#,
        MARGIN + span * UNIT
    );
    let step = (span / 10).max(1);
    let mut tick = 0;
    while tick <= span {
        let _ = writeln!(
            svg,
            r#"<text class="tick" x="{}" y="{}">{tick}</text>"#,
            MARGIN + tick * UNIT,
            axis_y + 12
        );
        tick += step;
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}

fn palette(task: TaskId) -> &'static str {
    const COLORS: [&str; 8] = [
        "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5",
    ];
    COLORS[task % COLORS.len()]
}
