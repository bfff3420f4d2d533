//! Running one workload under several configurations.
//!
//! Each run is independent, so a batch parallelizes trivially; the
//! `parallel` feature fans runs out across a rayon pool, and
//! [`run_batch_seq`] is the sequential reference the parallel path must
//! match byte for byte.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::engine::{run, RunOutput, SimConfig};
use crate::error::Result;
use crate::metrics::{heatmap, heatmap_ratio, Heatmap, HeatmapSpec, RatioCell};
use crate::workload::Workload;

/// Run every configuration, in parallel when the `parallel` feature is on.
pub fn run_batch(workload: &Workload, configs: &[SimConfig]) -> Result<Vec<RunOutput>> {
    #[cfg(feature = "parallel")]
    {
        configs.par_iter().map(|cfg| run(workload, cfg)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_seq(workload, configs)
    }
}

/// Sequential batch runner, available regardless of features.
pub fn run_batch_seq(workload: &Workload, configs: &[SimConfig]) -> Result<Vec<RunOutput>> {
    configs.iter().map(|cfg| run(workload, cfg)).collect()
}

/// Headline ratios between two runs; values below 1 mean the candidate
/// beat the baseline on that metric.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub slowdown_ratio: f64,
    pub response_ratio: f64,
    pub makespan_ratio: f64,
}

/// Two runs of the same workload, side by side.
#[derive(Debug)]
pub struct Comparison {
    pub baseline: RunOutput,
    pub candidate: RunOutput,
    pub summary: ComparisonSummary,
    pub baseline_heatmap: Heatmap,
    pub candidate_heatmap: Heatmap,
    /// Per-category baseline/candidate ratios; above 1 where the
    /// candidate improved that job class.
    pub ratio_grid: Vec<Vec<RatioCell>>,
}

/// Run baseline and candidate configurations and relate their metrics.
pub fn compare(
    workload: &Workload,
    baseline: &SimConfig,
    candidate: &SimConfig,
    spec: &HeatmapSpec,
) -> Result<Comparison> {
    let mut outs = run_batch(workload, &[baseline.clone(), candidate.clone()])?;
    let candidate = outs.pop().expect("two runs");
    let baseline = outs.pop().expect("two runs");
    let summary = ComparisonSummary {
        slowdown_ratio: candidate.report.avg_slowdown / baseline.report.avg_slowdown,
        response_ratio: candidate.report.avg_response_time / baseline.report.avg_response_time,
        makespan_ratio: candidate.report.makespan as f64 / baseline.report.makespan as f64,
    };
    let baseline_heatmap = heatmap(&baseline.log, spec)?;
    let candidate_heatmap = heatmap(&candidate.log, spec)?;
    let ratio_grid = heatmap_ratio(&baseline_heatmap, &candidate_heatmap)?;
    Ok(Comparison {
        baseline,
        candidate,
        summary,
        baseline_heatmap,
        candidate_heatmap,
        ratio_grid,
    })
}
