mod common;

use std::path::Path;

use tgsched::bench::{run_benchmark, BenchConfig, BenchReport, BestKnown, Engine};
use tgsched::par::Execution;
use tgsched::search::{brute_force_optimal, Mode};

fn corpus(dir: &Path) {
    std::fs::write(dir.join("example.stg"), common::EXAMPLE_STG).unwrap();
    std::fs::create_dir(dir.join("small")).unwrap();
    for (i, g) in common::oracle_corpus(3).iter().enumerate() {
        std::fs::write(dir.join("small").join(format!("r{i}.stg")), g.to_stg()).unwrap();
    }
    std::fs::write(dir.join("broken.stg"), "3\n0 1 0\n").unwrap();
    std::fs::write(dir.join("notes.txt"), "ignored").unwrap();
}

fn config(execution: Execution) -> BenchConfig {
    BenchConfig {
        machines: vec![2, 3],
        modes: vec![Mode::NonPreemptive, Mode::PREEMPTIVE],
        engines: vec![Engine::BestFirst, Engine::RandomDfs, Engine::Learner],
        seeds: vec![0, 1],
        episodes: 300,
        simulations: 30,
        execution,
        ..BenchConfig::default()
    }
}

#[test]
fn row_count_is_the_cross_product() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let report = run_benchmark(dir.path(), &config(Execution::Parallel), None).unwrap();
    assert_eq!(report.skipped.len(), 1);
    assert_eq!(report.records.len(), 4 * 2 * 2 * 3 * 2);
    let names: Vec<&str> = report.records.iter().map(|r| r.instance.as_str()).collect();
    assert_eq!(names.first(), Some(&"example.stg"));
    assert_eq!(names.last(), Some(&"small/r2.stg"));
    // No reference: the deviation column stays empty.
    let csv = report.to_csv();
    assert!(csv.lines().nth(1).unwrap().contains(",,,0.0,"));
}

#[test]
fn one_graph_three_seeds_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("example.stg"), common::EXAMPLE_STG).unwrap();
    let config = BenchConfig {
        machines: vec![2],
        modes: vec![Mode::NonPreemptive],
        engines: vec![Engine::RandomDfs],
        seeds: vec![0, 1, 2],
        ..BenchConfig::default()
    };
    let report = run_benchmark(dir.path(), &config, None).unwrap();
    assert_eq!(report.records.len(), 3);
}

#[test]
fn sequential_and_parallel_agree() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let a = run_benchmark(dir.path(), &config(Execution::Sequential), None).unwrap();
    let b = run_benchmark(dir.path(), &config(Execution::Parallel), None).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.aggregate_json(), b.aggregate_json());
}

#[test]
fn best_first_matches_oracle_reference() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let g = common::example_graph();
    let mut best = BestKnown::default();
    for m in [2, 3] {
        best.insert(
            "example",
            m,
            brute_force_optimal(&g, m, Mode::NonPreemptive, true).unwrap(),
        );
    }
    let mut cfg = config(Execution::Parallel);
    cfg.modes = vec![Mode::NonPreemptive];
    let report = run_benchmark(dir.path(), &cfg, Some(&best)).unwrap();
    let example: Vec<_> = report.records.iter().filter(|r| r.instance == "example.stg").collect();
    for r in &example {
        let d = r.deviation().unwrap();
        if r.engine == Engine::BestFirst {
            assert_eq!(d, 0.0);
        } else {
            assert!(d >= 0.0);
        }
    }
    let agg = report.aggregate();
    assert_eq!(agg["7/2/non-preemptive/best-first"].runs.unwrap().max, 0.0);
    assert!(agg["7/2/non-preemptive/best-first"].instance_minima.is_some());
    assert!(agg["4/2/non-preemptive/best-first"].runs.is_none());
}

#[test]
fn aggregation_ignores_record_order() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let mut best = BestKnown::default();
    for name in ["example", "r0", "r1", "r2"] {
        for m in [2, 3] {
            best.insert(name, m, 20);
        }
    }
    let report = run_benchmark(dir.path(), &config(Execution::Parallel), Some(&best)).unwrap();
    let mut shuffled = report.records.clone();
    shuffled.reverse();
    shuffled.rotate_left(7);
    let other = BenchReport {
        records: shuffled,
        skipped: Vec::new(),
    };
    assert_eq!(report.aggregate_json(), other.aggregate_json());
}

#[test]
fn missing_corpus_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_benchmark(&dir.path().join("nope"), &BenchConfig::default(), None).is_err());
}
