//! sdsim: replay or synthesize batch workloads and score scheduling
//! policies against each other.

mod output;
mod settings;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sdsim_core::metrics::heatmap_ratio_csv;
use sdsim_core::{
    compare, gen_synthetic, parse_swf, run, ComparisonSummary, EngineStats, HeatmapSpec,
    SimConfig, SimReport, SynthParams, Workload,
};
use serde::Serialize;
use settings::{resolve, CommonArgs, PolicyArg, RunSettings};

#[derive(Parser)]
#[command(
    name = "sdsim",
    version,
    about = "Discrete-event simulator for batch schedulers with malleable co-scheduling"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a workload under one policy and write reports.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Scheduling policy [default: static].
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
    },
    /// Run two policies on the same workload and relate their metrics.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Reference policy [default: static].
        #[arg(long, value_enum)]
        baseline: Option<PolicyArg>,
        /// Policy scored against the baseline [default: sd].
        #[arg(long, value_enum)]
        candidate: Option<PolicyArg>,
    },
    /// Write a synthetic workload as an SWF file.
    GenWorkload(GenArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Number of jobs to generate.
    #[arg(long, default_value_t = 1000)]
    jobs: usize,
    /// Mean of the exponential inter-arrival distribution, seconds.
    #[arg(long, default_value_t = 60.0)]
    mean_interarrival: f64,
    /// Smallest node count drawn (log-uniform across the range).
    #[arg(long, default_value_t = 1)]
    nodes_min: u32,
    /// Largest node count drawn.
    #[arg(long, default_value_t = 64)]
    nodes_max: u32,
    /// Shortest base runtime drawn, seconds (uniform across the range).
    #[arg(long, default_value_t = 60)]
    runtime_min: u64,
    /// Longest base runtime drawn, seconds.
    #[arg(long, default_value_t = 86_400)]
    runtime_max: u64,
    /// Requested times are base runtimes inflated by a uniform factor in
    /// [1, this].
    #[arg(long, default_value_t = 4.0)]
    max_inflation: f64,
    /// Node size used to convert node counts to processor counts.
    #[arg(long, default_value_t = 48)]
    cores_per_node: u32,
    /// RNG seed; equal seeds give identical files.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output SWF file path.
    #[arg(long, default_value = "workload.swf")]
    out: PathBuf,
}

/// Everything `report.json` records about a run: inputs, resolved
/// configuration, engine counters, and the metrics themselves.
#[derive(Serialize)]
struct Manifest<'a> {
    workload: &'a Path,
    malleable_fraction: f64,
    config: &'a SimConfig,
    stats: &'a EngineStats,
    report: &'a SimReport,
}

#[derive(Serialize)]
struct CompareDoc<'a> {
    workload: &'a Path,
    malleable_fraction: f64,
    baseline: &'a SimConfig,
    candidate: &'a SimConfig,
    summary: &'a ComparisonSummary,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Simulate { common, policy } => cmd_simulate(&common, policy),
        Cmd::Compare {
            common,
            baseline,
            candidate,
        } => cmd_compare(&common, baseline, candidate),
        Cmd::GenWorkload(args) => cmd_gen_workload(&args),
    }
}

fn load_workload(st: &RunSettings) -> Result<Workload> {
    let text = fs::read_to_string(&st.workload)
        .with_context(|| format!("cannot read workload {}", st.workload.display()))?;
    let mut w = parse_swf(&text, st.sim.cluster.cores_per_node())?;
    if w.dropped > 0 {
        eprintln!("note: skipped {} unusable trace records", w.dropped);
    }
    if st.malleable_fraction > 0.0 {
        w.mark_malleable(st.malleable_fraction, st.sim.seed);
    }
    Ok(w)
}

fn cmd_simulate(common: &CommonArgs, policy: Option<PolicyArg>) -> Result<()> {
    let st = resolve(common, policy, None, None)?;
    let workload = load_workload(&st)?;
    let out = run(&workload, &st.sim)?;
    let spec = HeatmapSpec::default();
    let manifest = Manifest {
        workload: &st.workload,
        malleable_fraction: st.malleable_fraction,
        config: &st.sim,
        stats: &out.stats,
        report: &out.report,
    };
    output::write_run(&st.out, &out, &spec, &manifest)?;
    let r = &out.report;
    println!(
        "{} jobs | makespan {} s | avg response {:.1} s | avg slowdown {:.3} | \
         malleable starts {}",
        r.jobs, r.makespan, r.avg_response_time, r.avg_slowdown, r.malleable_starts
    );
    println!("reports written to {}", st.out.display());
    Ok(())
}

fn cmd_compare(
    common: &CommonArgs,
    baseline: Option<PolicyArg>,
    candidate: Option<PolicyArg>,
) -> Result<()> {
    let st = resolve(common, None, baseline, candidate)?;
    let workload = load_workload(&st)?;
    let mut base_cfg = st.sim.clone();
    base_cfg.policy = st.baseline;
    let mut cand_cfg = st.sim.clone();
    cand_cfg.policy = st.candidate;
    let spec = HeatmapSpec::default();
    let cmp = compare(&workload, &base_cfg, &cand_cfg, &spec)?;

    for (dir, out, cfg) in [
        ("baseline", &cmp.baseline, &base_cfg),
        ("candidate", &cmp.candidate, &cand_cfg),
    ] {
        let manifest = Manifest {
            workload: &st.workload,
            malleable_fraction: st.malleable_fraction,
            config: cfg,
            stats: &out.stats,
            report: &out.report,
        };
        output::write_run(&st.out.join(dir), out, &spec, &manifest)?;
    }
    let doc = CompareDoc {
        workload: &st.workload,
        malleable_fraction: st.malleable_fraction,
        baseline: &base_cfg,
        candidate: &cand_cfg,
        summary: &cmp.summary,
    };
    fs::write(
        st.out.join("compare.json"),
        serde_json::to_string_pretty(&doc)?,
    )?;
    fs::write(
        st.out.join("heatmap_ratio.csv"),
        heatmap_ratio_csv(&spec, &cmp.ratio_grid),
    )?;

    let s = &cmp.summary;
    println!(
        "candidate/baseline: slowdown {:.4} | response {:.4} | makespan {:.4}",
        s.slowdown_ratio, s.response_ratio, s.makespan_ratio
    );
    println!("reports written to {}", st.out.display());
    Ok(())
}

fn cmd_gen_workload(args: &GenArgs) -> Result<()> {
    let params = SynthParams {
        jobs: args.jobs,
        mean_interarrival: args.mean_interarrival,
        nodes_min: args.nodes_min,
        nodes_max: args.nodes_max,
        runtime_min: args.runtime_min,
        runtime_max: args.runtime_max,
        max_inflation: args.max_inflation,
        cores_per_node: args.cores_per_node,
        ranks_per_node: 1,
    };
    let workload = gen_synthetic(&params, args.seed)?;
    let mut file = fs::File::create(&args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    workload.write_swf(&mut file)?;
    println!(
        "wrote {} jobs to {}",
        workload.jobs.len(),
        args.out.display()
    );
    Ok(())
}
