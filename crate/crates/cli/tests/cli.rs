//! End-to-end tests driving the compiled `sdsim` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sdsim_core::{gen_synthetic, parse_swf, SynthParams};
use serde_json::Value;
use tempfile::tempdir;

fn sdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdsim"))
        .args(args)
        .output()
        .expect("spawn sdsim")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A trace with one 1-node job: submitted at 0, runs 100 s, asks for 200 s.
const ONE_JOB: &str = "1 0 -1 100 48 -1 -1 48 200 -1 -1 -1 -1 -1 -1 -1 -1 -1\n";

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("read json")).expect("parse json")
}

#[test]
fn gen_workload_is_deterministic_and_honors_job_count() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a.swf");
    let b = dir.path().join("b.swf");
    let c = dir.path().join("c.swf");
    for out in [&a, &b] {
        let run = sdsim(&[
            "gen-workload",
            "--jobs",
            "137",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(run.status.success(), "{}", stderr_of(&run));
    }
    let run = sdsim(&[
        "gen-workload",
        "--jobs",
        "137",
        "--seed",
        "10",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr_of(&run));

    let bytes_a = fs::read(&a).unwrap();
    assert_eq!(bytes_a, fs::read(&b).unwrap(), "same seed, same file");
    assert_ne!(bytes_a, fs::read(&c).unwrap(), "different seed, new draw");

    let data_lines = fs::read_to_string(&a)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with(';'))
        .count();
    assert_eq!(data_lines, 137);
}

#[test]
fn generated_file_round_trips_through_the_parser() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("w.swf");
    let run = sdsim(&[
        "gen-workload",
        "--jobs",
        "250",
        "--nodes-max",
        "32",
        "--runtime-max",
        "7200",
        "--seed",
        "4",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr_of(&run));

    let params = SynthParams {
        jobs: 250,
        nodes_max: 32,
        runtime_max: 7200,
        ..SynthParams::default()
    };
    let expected = gen_synthetic(&params, 4).unwrap();
    let parsed = parse_swf(&fs::read_to_string(&path).unwrap(), params.cores_per_node).unwrap();
    assert_eq!(parsed.dropped, 0);
    assert_eq!(parsed.jobs, expected.jobs);
}

#[test]
fn single_job_run_reports_slowdown_one() {
    let dir = tempdir().unwrap();
    let trace = dir.path().join("one.swf");
    fs::write(&trace, ONE_JOB).unwrap();
    let out_dir = dir.path().join("out");
    let run = sdsim(&[
        "simulate",
        "--workload",
        trace.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr_of(&run));

    for name in ["events.log", "report.json", "report.csv", "heatmap.csv", "daily.csv"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let manifest = json(&out_dir.join("report.json"));
    assert_eq!(manifest["report"]["jobs"], 1);
    assert_eq!(manifest["report"]["avg_slowdown"], 1.0);
    assert_eq!(manifest["report"]["makespan"], 100);
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(csv.contains("avg_slowdown,1\n"), "report.csv:\n{csv}");
}

#[test]
fn sd_policy_and_dynamic_cutoff_flags_are_accepted() {
    let dir = tempdir().unwrap();
    let trace = dir.path().join("one.swf");
    fs::write(&trace, ONE_JOB).unwrap();
    for cutoff in ["dyn", "3.5"] {
        let out_dir = dir.path().join(format!("out-{cutoff}"));
        let run = sdsim(&[
            "simulate",
            "--workload",
            trace.to_str().unwrap(),
            "--policy",
            "sd",
            "--max-slowdown",
            cutoff,
            "--malleable-fraction",
            "1.0",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(run.status.success(), "{}", stderr_of(&run));
        let manifest = json(&out_dir.join("report.json"));
        assert_eq!(manifest["config"]["policy"], "sd");
    }
}

#[test]
fn out_of_range_sharing_factor_is_rejected() {
    let dir = tempdir().unwrap();
    let trace = dir.path().join("one.swf");
    fs::write(&trace, ONE_JOB).unwrap();
    let run = sdsim(&[
        "simulate",
        "--workload",
        trace.to_str().unwrap(),
        "--sharing-factor",
        "1.5",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(!run.status.success());
    let err = stderr_of(&run);
    assert!(err.contains("(0, 1)"), "no range in message: {err}");
}

#[test]
fn missing_workload_file_fails_with_nonzero_exit() {
    let dir = tempdir().unwrap();
    let ghost = dir.path().join("ghost.swf");
    let run = sdsim(&[
        "simulate",
        "--workload",
        ghost.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(!run.status.success());
    assert!(stderr_of(&run).contains("ghost.swf"));

    let no_workload = sdsim(&["simulate"]);
    assert!(!no_workload.status.success());
    assert!(stderr_of(&no_workload).contains("--workload"));
}

#[test]
fn same_policy_compare_reports_unit_ratios() {
    let dir = tempdir().unwrap();
    let trace = dir.path().join("w.swf");
    let gen = sdsim(&[
        "gen-workload",
        "--jobs",
        "150",
        "--mean-interarrival",
        "400",
        "--nodes-max",
        "8",
        "--runtime-max",
        "3600",
        "--seed",
        "2",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert!(gen.status.success(), "{}", stderr_of(&gen));

    let out_dir = dir.path().join("cmp");
    let run = sdsim(&[
        "compare",
        "--workload",
        trace.to_str().unwrap(),
        "--nodes",
        "16",
        "--baseline",
        "static",
        "--candidate",
        "static",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr_of(&run));

    let doc = json(&out_dir.join("compare.json"));
    assert_eq!(doc["summary"]["slowdown_ratio"], 1.0);
    assert_eq!(doc["summary"]["response_ratio"], 1.0);
    assert_eq!(doc["summary"]["makespan_ratio"], 1.0);

    let ratios = fs::read_to_string(out_dir.join("heatmap_ratio.csv")).unwrap();
    for line in ratios.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        for v in &cells[4..] {
            assert!(
                v.is_empty() || *v == "1",
                "identical runs must relate 1:1, got {line}"
            );
        }
    }
    for side in ["baseline", "candidate"] {
        assert!(out_dir.join(side).join("events.log").exists());
    }
    assert_eq!(
        fs::read(out_dir.join("baseline/events.log")).unwrap(),
        fs::read(out_dir.join("candidate/events.log")).unwrap(),
        "same policy, same schedule"
    );
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempdir().unwrap();
    let trace = dir.path().join("one.swf");
    fs::write(&trace, ONE_JOB).unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        "# run settings\n\
         nodes = 8\n\
         policy = sd\n\
         malleable-fraction = 1.0\n\
         seed = 5\n",
    )
    .unwrap();

    let out_dir = dir.path().join("out");
    let run = sdsim(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--workload",
        trace.to_str().unwrap(),
        "--nodes",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr_of(&run));

    let manifest = json(&out_dir.join("report.json"));
    // Flag beats the file.
    assert_eq!(manifest["config"]["cluster"]["nodes"], 4);
    // File beats the built-in defaults.
    assert_eq!(manifest["config"]["policy"], "sd");
    assert_eq!(manifest["config"]["seed"], 5);
    assert_eq!(manifest["malleable_fraction"], 1.0);
    // Untouched knobs keep their defaults.
    assert_eq!(manifest["config"]["max_mates"], 2);
    assert_eq!(manifest["config"]["cluster"]["cores_per_socket"], 24);
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempdir().unwrap();
    let trace = dir.path().join("one.swf");
    fs::write(&trace, ONE_JOB).unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "reservation-depth = 9\n").unwrap();
    let run = sdsim(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--workload",
        trace.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(!run.status.success());
    let err = stderr_of(&run);
    assert!(err.contains("unknown key"), "got: {err}");
    assert!(err.contains("bad.conf:1"), "got: {err}");
}
