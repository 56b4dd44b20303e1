//! Benchmark harness: runs engines over a corpus of STG files and
//! aggregates percentage deviations from best-known schedule lengths.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::{q_learn, simulate_strategy, LearnerError, LearningParams};
use crate::par::Execution;
use crate::search::{best_first_search, random_dfs, Budget, Mode, SearchError};
use crate::taskgraph::{parse_stg, TaskGraph, Time};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("best-known length must be at least 1")]
    ZeroBest,
    #[error("no values to summarize")]
    EmptyInput,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("best-known file: {0}")]
    Reference(#[from] csv::Error),
    #[error("{instance}: {source}")]
    Search {
        instance: String,
        #[source]
        source: SearchError,
    },
    #[error("{instance}: {source}")]
    Learner {
        instance: String,
        #[source]
        source: LearnerError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    BestFirst,
    RandomDfs,
    Learner,
}

impl Engine {
    pub fn label(self) -> &'static str {
        match self {
            Engine::BestFirst => "best-first",
            Engine::RandomDfs => "random-dfs",
            Engine::Learner => "learner",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub instance: String,
    pub tasks: usize,
    pub machines: usize,
    pub mode: Mode,
    pub engine: Engine,
    pub seed: u64,
    pub makespan: Time,
    pub best_known: Option<Time>,
    /// Seconds; zero unless timing was requested.
    pub wall_time: f64,
    pub expanded_states: u64,
}

impl BenchRecord {
    pub fn deviation(&self) -> Option<f64> {
        self.best_known
            .and_then(|best| percent_deviation(self.makespan, best).ok())
    }
}

/// `100 * (ours - best) / best`; negative when `ours` is shorter.
pub fn percent_deviation(ours: Time, best: Time) -> Result<f64, BenchError> {
    if best == 0 {
        return Err(BenchError::ZeroBest);
    }
    Ok(100.0 * (ours as f64 - best as f64) / best as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuartileSummary {
    pub min: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub max: f64,
    pub removed_count: usize,
}

/// Quantile `p` of sorted data, interpolating linearly between the two
/// nearest ranks (the inclusive method).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Quartiles after dropping values more than twice the interquartile range
/// beyond either quartile.
pub fn quartile_summary(values: &[f64]) -> Result<QuartileSummary, BenchError> {
    if values.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let spread = 2.0 * (q3 - q1);
    let (low, high) = (q1 - spread, q3 + spread);
    let kept: Vec<f64> = sorted.iter().copied().filter(|&v| v >= low && v <= high).collect();
    Ok(QuartileSummary {
        min: kept[0],
        q1: quantile(&kept, 0.25),
        q2: quantile(&kept, 0.5),
        q3: quantile(&kept, 0.75),
        max: kept[kept.len() - 1],
        removed_count: sorted.len() - kept.len(),
    })
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub machines: Vec<usize>,
    pub modes: Vec<Mode>,
    pub engines: Vec<Engine>,
    pub seeds: Vec<u64>,
    pub use_chains: bool,
    /// Budget for the best-first engine; on exhaustion its incumbent is
    /// recorded.
    pub best_first_budget: Budget,
    pub dfs_budget: Budget,
    pub episodes: usize,
    pub simulations: usize,
    pub learning: LearningParams,
    pub execution: Execution,
    /// Record wall times; without this the output is fully reproducible.
    pub record_wall_time: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            machines: vec![2, 4, 8, 16],
            modes: vec![Mode::NonPreemptive, Mode::PREEMPTIVE],
            engines: vec![Engine::BestFirst],
            seeds: vec![0],
            use_chains: true,
            best_first_budget: Budget::generated(5_000_000),
            dfs_budget: Budget::expansions(100_000),
            episodes: 10_000,
            simulations: 2000,
            learning: LearningParams::default(),
            execution: Execution::Parallel,
            record_wall_time: false,
        }
    }
}

/// Best-known lengths keyed by instance and machine count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BestKnown(HashMap<(String, usize), Time>);

#[derive(Debug, Deserialize)]
struct BestKnownRow {
    instance: String,
    machines: usize,
    length: Time,
}

impl BestKnown {
    /// Reads CSV with the header `instance,machines,length`.
    pub fn from_reader(reader: impl std::io::Read) -> Result<Self, BenchError> {
        let mut map = HashMap::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: BestKnownRow = row?;
            map.insert((row.instance, row.machines), row.length);
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let file = std::fs::File::open(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn insert(&mut self, instance: impl Into<String>, machines: usize, length: Time) {
        self.0.insert((instance.into(), machines), length);
    }

    /// Looks up by the instance's relative path, then by its file stem.
    pub fn get(&self, instance: &str, machines: usize) -> Option<Time> {
        let lookup = |name: &str| self.0.get(&(name.to_string(), machines)).copied();
        lookup(instance).or_else(|| {
            let stem = Path::new(instance).file_stem()?.to_str()?;
            lookup(stem)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// Files that could not be read or parsed.
    pub skipped: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    instance: &'a str,
    tasks: usize,
    machines: usize,
    mode: &'static str,
    engine: &'static str,
    seed: u64,
    makespan: Time,
    best_known: Option<Time>,
    deviation_pct: Option<f64>,
    wall_time_s: f64,
    expanded_states: u64,
}

/// Deviation quartiles for one size/machines/mode/engine group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub records: usize,
    /// Records that had a best-known length.
    pub with_reference: usize,
    /// Over every run.
    pub runs: Option<QuartileSummary>,
    /// Over the best run of each instance.
    pub instance_minima: Option<QuartileSummary>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            out.serialize(CsvRow {
                instance: &r.instance,
                tasks: r.tasks,
                machines: r.machines,
                mode: r.mode.label(),
                engine: r.engine.label(),
                seed: r.seed,
                makespan: r.makespan,
                best_known: r.best_known,
                deviation_pct: r.deviation(),
                wall_time_s: r.wall_time,
                expanded_states: r.expanded_states,
            })
            .expect("writing to memory");
        }
        String::from_utf8(out.into_inner().expect("writing to memory")).expect("csv output is utf-8")
    }

    /// Summaries keyed by `"size/machines/mode/engine"`. Independent of the
    /// order of the records.
    pub fn aggregate(&self) -> BTreeMap<String, GroupSummary> {
        let mut groups: BTreeMap<String, Vec<&BenchRecord>> = BTreeMap::new();
        for r in &self.records {
            let key = format!("{}/{}/{}/{}", r.tasks, r.machines, r.mode, r.engine);
            groups.entry(key).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|(key, records)| {
                let runs: Vec<f64> = records.iter().filter_map(|r| r.deviation()).collect();
                let mut minima: BTreeMap<&str, f64> = BTreeMap::new();
                for r in &records {
                    if let Some(d) = r.deviation() {
                        minima
                            .entry(r.instance.as_str())
                            .and_modify(|m| *m = m.min(d))
                            .or_insert(d);
                    }
                }
                let minima: Vec<f64> = minima.into_values().collect();
                let summary = GroupSummary {
                    records: records.len(),
                    with_reference: runs.len(),
                    runs: quartile_summary(&runs).ok(),
                    instance_minima: quartile_summary(&minima).ok(),
                };
                (key, summary)
            })
            .collect()
    }

    pub fn aggregate_json(&self) -> String {
        serde_json::to_string_pretty(&self.aggregate()).expect("summaries serialize")
    }
}

/// All `*.stg` files below `dir`, sorted by path.
fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| BenchError::Io {
            path: e.path().unwrap_or(dir).to_path_buf(),
            source: e.into(),
        })?;
        let path = entry.path();
        if entry.file_type().is_file() && path.extension().is_some_and(|e| e == "stg") {
            out.push(path.to_path_buf());
        }
    }
    out.sort();
    Ok(out)
}

struct Instance {
    name: String,
    graph: TaskGraph,
}

struct Job<'a> {
    instance: &'a Instance,
    machines: usize,
    mode: Mode,
    engine: Engine,
    /// `None` for the deterministic best-first engine, which runs once and
    /// is reported under every seed.
    seed: Option<u64>,
}

struct JobResult {
    makespan: Time,
    expanded: u64,
    wall_time: f64,
}

/// Runs every engine on every instance, machine count, mode and seed.
///
/// Rows come out ordered by instance path, then machines, mode, engine and
/// seed in configuration order, whatever the execution strategy.
pub fn run_benchmark(
    corpus_dir: &Path,
    config: &BenchConfig,
    best_known: Option<&BestKnown>,
) -> Result<BenchReport, BenchError> {
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    for path in corpus_files(corpus_dir)? {
        let name = path
            .strip_prefix(corpus_dir)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        match std::fs::read_to_string(&path).map(|text| parse_stg(&text)) {
            Ok(Ok(graph)) => instances.push(Instance { name, graph }),
            Ok(Err(e)) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(path);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(path);
            }
        }
    }

    let mut jobs = Vec::new();
    for instance in &instances {
        for &machines in &config.machines {
            for &mode in &config.modes {
                for &engine in &config.engines {
                    if engine == Engine::BestFirst {
                        jobs.push(Job {
                            instance,
                            machines,
                            mode,
                            engine,
                            seed: None,
                        });
                    } else {
                        for &seed in &config.seeds {
                            jobs.push(Job {
                                instance,
                                machines,
                                mode,
                                engine,
                                seed: Some(seed),
                            });
                        }
                    }
                }
            }
        }
    }

    let results = config.execution.map(&jobs, |job| run_job(job, config));

    let mut records = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        let result = result?;
        let seeds = match job.seed {
            Some(seed) => vec![seed],
            None => config.seeds.clone(),
        };
        for seed in seeds {
            records.push(BenchRecord {
                instance: job.instance.name.clone(),
                tasks: job.instance.graph.len(),
                machines: job.machines,
                mode: job.mode,
                engine: job.engine,
                seed,
                makespan: result.makespan,
                best_known: best_known.and_then(|b| b.get(&job.instance.name, job.machines)),
                wall_time: result.wall_time,
                expanded_states: result.expanded,
            });
        }
    }
    Ok(BenchReport { records, skipped })
}

fn run_job(job: &Job<'_>, config: &BenchConfig) -> Result<JobResult, BenchError> {
    let graph = &job.instance.graph;
    let instance = || job.instance.name.clone();
    let search_err = |source| BenchError::Search {
        instance: instance(),
        source,
    };
    let started = Instant::now();
    let seed = job.seed.unwrap_or(0);

    let (makespan, expanded) = match job.engine {
        Engine::BestFirst => {
            match best_first_search(
                graph,
                job.machines,
                job.mode,
                config.use_chains,
                config.best_first_budget,
            ) {
                Ok(out) => (out.makespan, out.stats.expanded),
                Err(SearchError::BudgetExceeded { incumbent, .. }) => {
                    log::warn!(
                        "{} on {} machines ({}): budget exhausted, recording makespan {}",
                        job.instance.name,
                        job.machines,
                        job.mode,
                        incumbent.makespan
                    );
                    (incumbent.makespan, incumbent.stats.expanded)
                }
                Err(e) => return Err(search_err(e)),
            }
        }
        Engine::RandomDfs => {
            let out = random_dfs(
                graph,
                job.machines,
                job.mode,
                config.use_chains,
                seed,
                config.dfs_budget,
            )
            .map_err(search_err)?;
            (out.makespan, out.stats.expanded)
        }
        Engine::Learner => {
            let learner_err = |source| BenchError::Learner {
                instance: instance(),
                source,
            };
            let table =
                q_learn(graph, job.machines, job.mode, config.episodes, seed, config.learning).map_err(learner_err)?;
            // Jobs already run in parallel; keep each one sequential.
            let runs = simulate_strategy(
                graph,
                job.machines,
                job.mode,
                &table,
                config.simulations,
                seed,
                Execution::Sequential,
            )
            .map_err(learner_err)?;
            let best = runs.iter().map(|r| r.makespan).min().unwrap_or(0);
            (best, table.len() as u64)
        }
    };
    let wall_time = if config.record_wall_time {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };
    Ok(JobResult {
        makespan,
        expanded,
        wall_time,
    })
}
