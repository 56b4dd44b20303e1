//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tgsched::bench::{percent_deviation, quartile_summary};
use tgsched::cli::run_cli;
use tgsched::generate::layered_dag;
use tgsched::learner::{greedy_rollout, q_learn, simulate_strategy, LearningParams, StrategyTable};
use tgsched::par::Execution;
use tgsched::schedule::{makespan, Condition};
use tgsched::search::{best_first_search, brute_force_optimal, random_dfs, Budget, Mode, SearchOutcome};
use tgsched::{validate_schedule, Schedule, Segment, TaskGraph};

use common::{example_graph, oracle_corpus, EXAMPLE_STG};

/// Optimal makespans of the example graph on two machines, computed once
/// with `brute_force_optimal` and frozen here.
const EXAMPLE_NON_PREEMPTIVE_2: u64 = 36;
const EXAMPLE_PREEMPTIVE_2: u64 = 33;

const CORPUS_SIZE: usize = 60;

type Verdict = Result<String, String>;

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Verdict {
    let g = example_graph();
    let np_oracle = brute_force_optimal(&g, 2, Mode::NonPreemptive, true).unwrap();
    let p_oracle = brute_force_optimal(&g, 2, Mode::PREEMPTIVE, true).unwrap();
    if (np_oracle, p_oracle) != (EXAMPLE_NON_PREEMPTIVE_2, EXAMPLE_PREEMPTIVE_2) {
        return Err(format!("oracle drifted: {np_oracle}/{p_oracle}"));
    }
    let timed = |mode| {
        let started = Instant::now();
        let out = best_first_search(&g, 2, mode, true, Budget::default()).unwrap();
        (out, started.elapsed())
    };
    let (np, np_time) = timed(Mode::NonPreemptive);
    let (p, p_time) = timed(Mode::PREEMPTIVE);
    let ok = np.makespan == np_oracle
        && p.makespan == p_oracle
        && p.makespan <= np.makespan
        && np_time < Duration::from_secs(1)
        && p_time < Duration::from_secs(1);
    check(
        ok,
        format!(
            "non-preemptive {} (oracle {np_oracle}, {np_time:?}), preemptive {} (oracle {p_oracle}, {p_time:?})",
            np.makespan, p.makespan
        ),
    )
}

fn criterion_2() -> Verdict {
    let started = Instant::now();
    let mut runs = 0;
    for (i, g) in oracle_corpus(CORPUS_SIZE).iter().enumerate() {
        for machines in [2, 3] {
            for mode in [Mode::NonPreemptive, Mode::PREEMPTIVE] {
                let exact = brute_force_optimal(g, machines, mode, true).unwrap();
                let found = best_first_search(g, machines, mode, true, Budget::default()).unwrap();
                runs += 1;
                if found.makespan != exact {
                    return Err(format!(
                        "graph {i}, {machines} machines, {mode}: engine {} vs oracle {exact}",
                        found.makespan
                    ));
                }
            }
        }
    }
    let elapsed = started.elapsed();
    check(
        elapsed < Duration::from_secs(60),
        format!("{runs} runs on {CORPUS_SIZE} graphs match the oracle in {elapsed:?}"),
    )
}

fn criterion_3() -> Verdict {
    let mut runs = 0;
    for (i, g) in oracle_corpus(CORPUS_SIZE).iter().enumerate() {
        for machines in [2, 3] {
            for mode in [Mode::NonPreemptive, Mode::PREEMPTIVE] {
                let with = brute_force_optimal(g, machines, mode, true).unwrap();
                let without = brute_force_optimal(g, machines, mode, false).unwrap();
                runs += 1;
                if with != without {
                    return Err(format!(
                        "graph {i}, {machines} machines, {mode}: {with} with chains, {without} without"
                    ));
                }
            }
        }
    }
    Ok(format!("{runs} runs, identical optima with and without chains"))
}

fn serial(order: &[(usize, u64)]) -> Schedule {
    let mut s = Schedule::new(1);
    let mut t = 0;
    for &(task, dur) in order {
        s.assignments.insert(
            task,
            vec![Segment {
                start: t,
                duration: dur,
                machine: 0,
            }],
        );
        t += dur;
    }
    s
}

fn criterion_4() -> Verdict {
    let mut runs = 0usize;
    let mut record = |g: &TaskGraph, schedule: &Schedule, claimed: u64| -> Result<(), String> {
        runs += 1;
        let report = validate_schedule(g, schedule).map_err(|e| e.to_string())?;
        if !report.is_valid() {
            return Err(format!("run {runs}: {}", report.violations[0]));
        }
        if makespan(schedule) != claimed {
            return Err(format!(
                "run {runs}: makespan {} but reported {claimed}",
                makespan(schedule)
            ));
        }
        Ok(())
    };
    let modes = [
        Mode::NonPreemptive,
        Mode::PREEMPTIVE,
        Mode::Preemptive {
            maximal_dispatch: false,
        },
    ];
    let corpus = oracle_corpus(CORPUS_SIZE);
    for (i, g) in corpus.iter().enumerate() {
        for machines in [2, 3] {
            for mode in modes {
                let out: SearchOutcome = best_first_search(g, machines, mode, i % 2 == 0, Budget::default()).unwrap();
                record(g, &out.schedule, out.makespan)?;
                for seed in 0..3 {
                    let out = random_dfs(g, machines, mode, seed % 2 == 0, seed, Budget::dives(2)).unwrap();
                    record(g, &out.schedule, out.makespan)?;
                }
            }
        }
    }
    for (i, g) in corpus.iter().take(20).enumerate() {
        let mode = modes[i % 3];
        let table = q_learn(g, 2, mode, 200, i as u64, LearningParams::default()).unwrap();
        let run = greedy_rollout(g, &table).unwrap();
        record(g, &run.schedule, run.makespan)?;
        for run in simulate_strategy(g, 2, mode, &table, 10, i as u64, Execution::Parallel).unwrap() {
            record(g, &run.schedule, run.makespan)?;
        }
    }
    if runs < 1000 {
        return Err(format!("only {runs} runs"));
    }

    let g = example_graph();
    let durations = [5, 15, 3, 5, 8, 14, 11];
    let topo: Vec<(usize, u64)> = (0..7).map(|t| (t, durations[t])).collect();
    let mut out_of_order = topo.clone();
    out_of_order.swap(0, 1);
    let precedence = serial(&out_of_order);

    let two_machine = best_first_search(&g, 2, Mode::NonPreemptive, true, Budget::default()).unwrap();
    let mut crowded = two_machine.schedule.clone();
    crowded.machine_count = 1;

    let mut short = topo.clone();
    short[6].1 = 10;
    let too_short = serial(&short);

    let mut named = Vec::new();
    for (schedule, condition) in [
        (precedence, Condition::Precedence),
        (crowded, Condition::Machines),
        (too_short, Condition::Duration),
    ] {
        let report = validate_schedule(&g, &schedule).unwrap();
        let only = report.violations.iter().all(|v| v.condition() == condition);
        let text = report.violations.first().map(|v| v.to_string()).unwrap_or_default();
        if report.is_valid() || !only || !text.contains(condition.name()) {
            return Err(format!(
                "condition {} not reported correctly: {text:?}",
                condition.number()
            ));
        }
        named.push(format!("{} ({})", condition.number(), condition.name()));
    }
    Ok(format!(
        "{runs} engine schedules valid; rejected conditions {}",
        named.join(", ")
    ))
}

/// Anytime budget per seed.
const DFS_EXPANSIONS: u64 = 25;

fn criterion_5() -> Verdict {
    let g = example_graph();
    let mut detail = Vec::new();
    for (mode, optimum) in [
        (Mode::NonPreemptive, EXAMPLE_NON_PREEMPTIVE_2),
        (Mode::PREEMPTIVE, EXAMPLE_PREEMPTIVE_2),
    ] {
        let mut hits = 0;
        for seed in 0..100 {
            let out = random_dfs(&g, 2, mode, true, seed, Budget::expansions(DFS_EXPANSIONS)).unwrap();
            if out.makespan < optimum {
                return Err(format!("{mode} seed {seed}: {} below the optimum", out.makespan));
            }
            if out.history.windows(2).any(|w| w[1] > w[0]) {
                return Err(format!("{mode} seed {seed}: history {:?} increases", out.history));
            }
            hits += usize::from(out.makespan == optimum);
        }
        if hits == 0 {
            return Err(format!("{mode}: no seed reached {optimum}"));
        }
        detail.push(format!(
            "{mode}: {hits}/100 seeds optimal within {DFS_EXPANSIONS} expansions"
        ));
    }
    Ok(detail.join("; "))
}

fn criterion_6() -> Verdict {
    let g = example_graph();
    let mode = Mode::NonPreemptive;
    let optimum = brute_force_optimal(&g, 2, mode, true).unwrap();
    let mean = |runs: &[tgsched::learner::SimulationRun]| {
        runs.iter().map(|r| r.makespan as f64).sum::<f64>() / runs.len() as f64
    };
    let untrained = StrategyTable::empty(&g, 2, mode);
    let mut attained = Vec::new();
    let mut means = Vec::new();
    for seed in 0..10 {
        let table = q_learn(&g, 2, mode, 10_000, seed, LearningParams::default()).unwrap();
        let before = simulate_strategy(&g, 2, mode, &untrained, 2000, seed, Execution::Parallel).unwrap();
        let after = simulate_strategy(&g, 2, mode, &table, 2000, seed, Execution::Parallel).unwrap();
        for run in &after {
            if !validate_schedule(&g, &run.schedule).unwrap().is_valid() {
                return Err(format!("seed {seed}: invalid simulated schedule"));
            }
        }
        let (pre, post) = (mean(&before), mean(&after));
        if post > pre {
            return Err(format!(
                "seed {seed}: mean {post:.2} after training exceeds {pre:.2} before"
            ));
        }
        if after.iter().map(|r| r.makespan).min() == Some(optimum) {
            attained.push(seed);
        }
        means.push(format!("{pre:.1}->{post:.1}"));
    }
    check(
        !attained.is_empty(),
        format!(
            "optimum {optimum} reached for seeds {attained:?}; means {}",
            means.join(" ")
        ),
    )
}

fn criterion_7() -> Verdict {
    let s = quartile_summary(&[0.0, 0.0, 0.0, 0.0, 100.0]).unwrap();
    let summary_ok = (s.min, s.q1, s.q2, s.q3, s.max, s.removed_count) == (0.0, 0.0, 0.0, 0.0, 0.0, 1);
    let up = percent_deviation(44, 40).unwrap();
    let down = percent_deviation(39, 40).unwrap();
    check(
        summary_ok && up == 10.0 && down == -2.5,
        format!("[0,0,0,0,100] removes {}; deviations {up} and {down}", s.removed_count),
    )
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let g = layered_dag(&mut rng, 100, 10, 3, 1..=9);
    let budget = Budget::generated(5_000_000);
    let with = best_first_search(&g, 16, Mode::NonPreemptive, true, budget).unwrap();
    let without = best_first_search(&g, 16, Mode::NonPreemptive, false, budget).unwrap();
    let ratio = without.stats.expanded as f64 / with.stats.expanded as f64;
    let scan_ratio = without.stats.readiness_checks as f64 / with.stats.readiness_checks as f64;
    check(
        with.stats.expanded < without.stats.expanded && with.makespan == without.makespan,
        format!(
            "expanded {} with chains vs {} without (ratio {ratio:.2}); readiness checks {} vs {} (ratio {scan_ratio:.2}); makespan {} vs {}",
            with.stats.expanded,
            without.stats.expanded,
            with.stats.readiness_checks,
            without.stats.readiness_checks,
            with.makespan,
            without.makespan
        ),
    )
}

fn criterion_9() -> Verdict {
    let mut runs = 0;
    for (i, g) in oracle_corpus(CORPUS_SIZE).iter().enumerate() {
        for machines in [2, 3] {
            let maximal = brute_force_optimal(g, machines, Mode::PREEMPTIVE, true).unwrap();
            let any = brute_force_optimal(
                g,
                machines,
                Mode::Preemptive {
                    maximal_dispatch: false,
                },
                true,
            )
            .unwrap();
            runs += 1;
            if maximal != any {
                return Err(format!(
                    "graph {i}, {machines} machines: maximal {maximal}, unrestricted {any}"
                ));
            }
        }
    }
    Ok(format!("{runs} instances, maximal dispatch never loses"))
}

fn cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_cli(
        std::iter::once("tgsched").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (code, out)
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("example.stg");
    std::fs::write(&graph, EXAMPLE_STG).unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    std::fs::write(corpus.join("example.stg"), EXAMPLE_STG).unwrap();
    for (i, g) in oracle_corpus(4).iter().enumerate() {
        std::fs::write(corpus.join(format!("g{i}.stg")), g.to_stg()).unwrap();
    }
    let graph = graph.to_str().unwrap();
    let corpus = corpus.to_str().unwrap();

    let commands: Vec<Vec<&str>> = vec![
        vec!["schedule", graph, "-m", "2"],
        vec!["schedule", graph, "-m", "2", "--preemptive"],
        vec![
            "schedule",
            graph,
            "-m",
            "3",
            "--engine",
            "random-dfs",
            "--seed",
            "9",
            "--max-dives",
            "2",
        ],
        vec![
            "schedule",
            graph,
            "-m",
            "2",
            "--engine",
            "learner",
            "--episodes",
            "500",
            "--seed",
            "4",
        ],
        vec![
            "bench",
            corpus,
            "-m",
            "2,3",
            "--engines",
            "best-first,random-dfs,learner",
            "--seeds",
            "3",
            "--episodes",
            "200",
            "--simulations",
            "20",
            "--jobs",
            "4",
        ],
    ];
    for args in &commands {
        let (code_a, a) = cli(args);
        let (code_b, b) = cli(args);
        if code_a != 0 || code_b != 0 || a.is_empty() || a != b {
            return Err(format!("`{}` differs between runs or failed", args.join(" ")));
        }
    }
    Ok(format!(
        "{} commands byte-identical across repeated runs",
        commands.len()
    ))
}

fn main() {
    let criteria: [(u32, fn() -> Verdict); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = Vec::new();
    for (n, run) in criteria {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match verdict {
            Ok(detail) => println!("criterion {n:>2}: PASS  {detail}"),
            Err(detail) => {
                println!("criterion {n:>2}: FAIL  {detail}");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
