//! Command-line interface.
//!
//! Exit status is 0 on success, 1 when `validate` finds a violation and 2
//! for usage errors and unreadable or malformed input.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{quartile_summary, run_benchmark, BenchConfig, BestKnown, Engine};
use crate::chains::chain_cover;
use crate::learner::{greedy_rollout, q_learn, simulate_strategy, LearningParams, StrategyTable};
use crate::par::{with_threads, Execution};
use crate::schedule::{render_gantt, validate_schedule, Schedule};
use crate::search::{best_first_search, random_dfs, Budget, Mode, SearchError, SearchOutcome};
use crate::taskgraph::{parse_stg, TaskGraph};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Default cap on generated states for the best-first engine.
pub const DEFAULT_MAX_GENERATED: u64 = 5_000_000;
/// Default cap on expanded states for the random depth-first engine.
pub const DEFAULT_MAX_EXPANSIONS: u64 = 100_000;

#[derive(Debug, Parser)]
#[command(name = "tgsched", version, about = "Near-optimal task graph scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the graph in normalized STG form, preceded by summary comments.
    Parse { graph: PathBuf },
    /// Print the chain cover, one chain of task ids per line.
    Chains { graph: PathBuf },
    /// Compute a schedule and write it as JSON.
    Schedule(ScheduleArgs),
    /// Check a schedule JSON file against a graph.
    Validate { graph: PathBuf, schedule: PathBuf },
    /// Train a dispatch strategy and save it as JSON.
    Learn(LearnArgs),
    /// Run a saved strategy repeatedly and summarize the makespans.
    Simulate(SimulateArgs),
    /// Run engines over a directory of STG files.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    NonPreemptive,
    Preemptive,
    /// Preemptive, also allowing machines to idle while tasks are ready.
    PreemptiveAny,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::NonPreemptive => Mode::NonPreemptive,
            ModeArg::Preemptive => Mode::PREEMPTIVE,
            ModeArg::PreemptiveAny => Mode::Preemptive {
                maximal_dispatch: false,
            },
        }
    }
}

#[derive(Debug, Args)]
struct ModeFlags {
    /// Suspend every running task at each completion.
    #[arg(long)]
    preemptive: bool,
    /// With --preemptive, also consider dispatches that leave machines idle.
    #[arg(long, requires = "preemptive")]
    no_maximal: bool,
}

impl ModeFlags {
    fn mode(&self) -> Mode {
        if self.preemptive {
            Mode::Preemptive {
                maximal_dispatch: !self.no_maximal,
            }
        } else {
            Mode::NonPreemptive
        }
    }
}

#[derive(Debug, Args)]
struct BudgetFlags {
    /// Stop after expanding this many states.
    #[arg(long)]
    max_expansions: Option<u64>,
    /// Stop after generating this many states.
    #[arg(long)]
    max_generated: Option<u64>,
    /// Stop after this many complete schedules (random-dfs).
    #[arg(long)]
    max_dives: Option<u64>,
    /// Wall-clock limit in seconds; results then depend on machine speed.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl BudgetFlags {
    fn budget(&self, engine: Engine) -> Result<Budget> {
        let time_limit = self
            .time_limit
            .map(|s| Duration::try_from_secs_f64(s).context("--time-limit must be a non-negative number of seconds"))
            .transpose()?;
        let mut budget = Budget {
            max_expansions: self.max_expansions,
            max_generated: self.max_generated,
            max_dives: self.max_dives,
            time_limit,
        };
        if budget == Budget::default() {
            match engine {
                Engine::BestFirst => budget.max_generated = Some(DEFAULT_MAX_GENERATED),
                Engine::RandomDfs => budget.max_expansions = Some(DEFAULT_MAX_EXPANSIONS),
                Engine::Learner => {}
            }
        }
        Ok(budget)
    }
}

#[derive(Debug, Args)]
struct LearnFlags {
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    epsilon_start: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon_end: f64,
}

impl LearnFlags {
    fn params(&self) -> Result<LearningParams> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.learning_rate) || !unit(self.epsilon_start) || !unit(self.epsilon_end) {
            bail!("learning rate and exploration rates must lie in [0, 1]");
        }
        Ok(LearningParams {
            learning_rate: self.learning_rate,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
        })
    }
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    graph: PathBuf,
    #[arg(short, long, value_parser = clap::value_parser!(u32).range(1..))]
    machines: u32,
    #[arg(long, value_enum, default_value_t = Engine::BestFirst)]
    engine: Engine,
    #[command(flatten)]
    mode: ModeFlags,
    /// Treat every task as its own chain.
    #[arg(long)]
    no_chains: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    budget: BudgetFlags,
    #[command(flatten)]
    learn: LearnFlags,
    /// Write the schedule here instead of standard output.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also draw the schedule as an SVG Gantt chart.
    #[arg(long)]
    gantt: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LearnArgs {
    graph: PathBuf,
    #[arg(short, long, value_parser = clap::value_parser!(u32).range(1..))]
    machines: u32,
    #[command(flatten)]
    mode: ModeFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    learn: LearnFlags,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    graph: PathBuf,
    /// Strategy file written by `learn`; fixes machines and mode.
    #[arg(long)]
    strategy: PathBuf,
    #[arg(long, default_value_t = 2000)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    corpus: PathBuf,
    #[arg(short, long, value_delimiter = ',', default_values_t = [2u32, 4, 8, 16],
          value_parser = clap::value_parser!(u32).range(1..))]
    machines: Vec<u32>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ModeArg::NonPreemptive, ModeArg::Preemptive])]
    modes: Vec<ModeArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Engine::BestFirst])]
    engines: Vec<Engine>,
    /// Number of seeds; runs use seeds `0..N`.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long)]
    no_chains: bool,
    /// Cap on generated states for best-first.
    #[arg(long, default_value_t = DEFAULT_MAX_GENERATED)]
    max_generated: u64,
    /// Cap on expanded states for random-dfs.
    #[arg(long, default_value_t = DEFAULT_MAX_EXPANSIONS)]
    max_expansions: u64,
    #[command(flatten)]
    learn: LearnFlags,
    #[arg(long, default_value_t = 2000)]
    simulations: usize,
    /// CSV with columns instance,machines,length.
    #[arg(long)]
    best_known: Option<PathBuf>,
    /// Per-run rows; standard output when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Aggregated quartiles.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Record wall-clock times, which makes the CSV vary between runs.
    #[arg(long)]
    wall_time: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{rendered}");
                EXIT_OK
            };
        }
    };
    match run(cli.command, out, err) {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_USAGE
        }
    }
}

/// A closed downstream pipe (`| head`) is not worth reporting.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        cause
            .downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn read_graph(path: &Path) -> Result<TaskGraph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_stg(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Parse { graph } => {
            let g = read_graph(&graph)?;
            writeln!(out, "# tasks {}", g.len())?;
            writeln!(out, "# edges {}", g.edge_count())?;
            writeln!(out, "# total-work {}", g.total_work())?;
            writeln!(out, "# critical-path {}", g.critical_path_length())?;
            write!(out, "{}", g.to_stg())?;
        }
        Command::Chains { graph } => {
            let g = read_graph(&graph)?;
            for chain in chain_cover(&g).chains() {
                let ids: Vec<String> = chain.iter().map(|t| t.to_string()).collect();
                writeln!(out, "{}", ids.join(" "))?;
            }
        }
        Command::Schedule(args) => schedule(args, out, err)?,
        Command::Validate { graph, schedule } => {
            let g = read_graph(&graph)?;
            let text = std::fs::read_to_string(&schedule).with_context(|| format!("reading {}", schedule.display()))?;
            let s = Schedule::from_json(&text).with_context(|| format!("parsing {}", schedule.display()))?;
            let report = validate_schedule(&g, &s)?;
            if report.is_valid() {
                writeln!(out, "valid: makespan {}", crate::schedule::makespan(&s))?;
            } else {
                for v in &report.violations {
                    writeln!(out, "{v}")?;
                }
                return Ok(EXIT_INVALID);
            }
        }
        Command::Learn(args) => {
            let g = read_graph(&args.graph)?;
            let table = q_learn(
                &g,
                args.machines as usize,
                args.mode.mode(),
                args.learn.episodes,
                args.seed,
                args.learn.params()?,
            )?;
            table.save(&args.output)?;
            writeln!(err, "learned {} states over {} episodes", table.len(), table.episodes)?;
        }
        Command::Simulate(args) => {
            let g = read_graph(&args.graph)?;
            if args.runs == 0 {
                bail!("--runs must be at least 1");
            }
            let table =
                StrategyTable::load(&args.strategy).with_context(|| format!("loading {}", args.strategy.display()))?;
            let runs = simulate_strategy(
                &g,
                table.machines,
                table.mode,
                &table,
                args.runs,
                args.seed,
                Execution::Sequential,
            )?;
            let makespans: Vec<f64> = runs.iter().map(|r| r.makespan as f64).collect();
            let summary = quartile_summary(&makespans)?;
            let mean = makespans.iter().sum::<f64>() / makespans.len() as f64;
            let min = runs.iter().map(|r| r.makespan).min().expect("at least one run");
            let max = runs.iter().map(|r| r.makespan).max().expect("at least one run");
            writeln!(out, "runs {}", runs.len())?;
            writeln!(out, "min {min}")?;
            writeln!(out, "q1 {}", summary.q1)?;
            writeln!(out, "median {}", summary.q2)?;
            writeln!(out, "q3 {}", summary.q3)?;
            writeln!(out, "max {max}")?;
            writeln!(out, "mean {mean:.3}")?;
        }
        Command::Bench(args) => bench(args, out, err)?,
    }
    Ok(EXIT_OK)
}

fn schedule(args: ScheduleArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let g = read_graph(&args.graph)?;
    let machines = args.machines as usize;
    let mode = args.mode.mode();
    let use_chains = !args.no_chains;
    let budget = args.budget.budget(args.engine)?;

    let report = |outcome: &SearchOutcome, err: &mut dyn Write| -> Result<()> {
        let status = if outcome.proved_optimal {
            "optimal"
        } else {
            "best found"
        };
        writeln!(
            err,
            "makespan {} ({status}); expanded {}, generated {}",
            outcome.makespan, outcome.stats.expanded, outcome.stats.generated
        )?;
        Ok(())
    };
    let schedule = match args.engine {
        Engine::BestFirst => match best_first_search(&g, machines, mode, use_chains, budget) {
            Ok(outcome) => {
                report(&outcome, err)?;
                outcome.schedule
            }
            Err(SearchError::BudgetExceeded { incumbent, .. }) => {
                writeln!(err, "warning: budget exhausted; returning the best schedule found")?;
                report(&incumbent, err)?;
                incumbent.schedule
            }
            Err(e) => return Err(e.into()),
        },
        Engine::RandomDfs => {
            let outcome = random_dfs(&g, machines, mode, use_chains, args.seed, budget)?;
            report(&outcome, err)?;
            outcome.schedule
        }
        Engine::Learner => {
            if args.no_chains {
                bail!("the learner always uses the chain cover");
            }
            let table = q_learn(&g, machines, mode, args.learn.episodes, args.seed, args.learn.params()?)?;
            let run = greedy_rollout(&g, &table)?;
            writeln!(
                err,
                "makespan {} (greedy under {} learned states)",
                run.makespan,
                table.len()
            )?;
            run.schedule
        }
    };

    match &args.output {
        Some(path) => write_file(path, &schedule.to_json())?,
        None => writeln!(out, "{}", schedule.to_json())?,
    }
    if let Some(path) = &args.gantt {
        write_file(path, &render_gantt(&schedule, &g)?)?;
    }
    Ok(())
}

fn bench(args: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    if args.jobs == Some(0) {
        bail!("--jobs must be at least 1");
    }
    let best_known = args.best_known.as_deref().map(BestKnown::load).transpose()?;
    let config = BenchConfig {
        machines: args.machines.iter().map(|&m| m as usize).collect(),
        modes: args.modes.iter().map(|&m| m.into()).collect(),
        engines: args.engines.clone(),
        seeds: (0..args.seeds).collect(),
        use_chains: !args.no_chains,
        best_first_budget: Budget::generated(args.max_generated),
        dfs_budget: Budget::expansions(args.max_expansions),
        episodes: args.learn.episodes,
        simulations: args.simulations,
        learning: args.learn.params()?,
        execution: Execution::Parallel,
        record_wall_time: args.wall_time,
    };
    let run = || run_benchmark(&args.corpus, &config, best_known.as_ref());
    let report = match args.jobs {
        Some(n) => with_threads(n, run)?,
        None => run()?,
    };
    for path in &report.skipped {
        writeln!(err, "skipped {}", path.display())?;
    }
    match &args.csv {
        Some(path) => write_file(path, &report.to_csv())?,
        None => write!(out, "{}", report.to_csv())?,
    }
    if let Some(path) = &args.json {
        write_file(path, &report.aggregate_json())?;
    }
    Ok(())
}
