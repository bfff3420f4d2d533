//! Metrics derived from an event log.
//!
//! Everything here is computed from the log alone, so any two runs with
//! identical logs get identical metrics. Core quantities per job:
//!
//! * response time = completion − submission
//! * wait time     = start − submission
//! * slowdown      = response / base runtime (the runtime at full
//!   allocation, so a shrunk run's stretch counts against it); optionally
//!   bounded below by a threshold runtime to tame tiny-job noise.
//!
//! The makespan is the span from first submission to last completion.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::eventlog::{EventLog, LogRecord, StartMode};
use crate::workload::JobId;

const SECONDS_PER_DAY: u64 = 86_400;

/// Knobs for metric evaluation, not simulation behavior.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricsOptions {
    /// Bounded-slowdown threshold: response is divided by
    /// `max(base_runtime, tau)` and the result floored at 1.
    pub bounded_tau: Option<u64>,
}

/// Aggregate results of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub jobs: u64,
    pub first_submit: u64,
    pub last_completion: u64,
    pub makespan: u64,
    pub avg_response_time: f64,
    pub avg_wait_time: f64,
    pub avg_slowdown: f64,
    pub max_slowdown: f64,
    /// Jobs flagged malleable in the workload.
    pub malleable_jobs: u64,
    /// Jobs that actually started on borrowed cores.
    pub malleable_starts: u64,
    /// Distinct jobs that lent cores at least once.
    pub mate_jobs: u64,
    pub daily: Vec<DayStats>,
}

/// One day of the run, measured from the first submission.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DayStats {
    pub day: u64,
    pub completed: u64,
    /// Mean slowdown of the jobs completing this day; absent when none do.
    pub avg_slowdown: Option<f64>,
    /// Malleable starts decided this day.
    pub malleable_starts: u64,
}

#[derive(Debug, Clone)]
struct Outcome {
    id: JobId,
    submit: u64,
    start: u64,
    end: u64,
    nodes: u32,
    base: u64,
    malleable: bool,
    started_malleable: bool,
}

/// Reconstruct per-job outcomes, failing on incomplete histories.
fn outcomes(log: &EventLog) -> Result<(Vec<Outcome>, BTreeSet<JobId>)> {
    struct Partial {
        submit: u64,
        start: Option<(u64, StartMode)>,
        end: Option<u64>,
        nodes: u32,
        base: u64,
        malleable: bool,
    }
    let mut jobs: BTreeMap<JobId, Partial> = BTreeMap::new();
    let mut mates: BTreeSet<JobId> = BTreeSet::new();
    let missing = |what: &str, job: JobId| {
        SimError::IncompleteLog(format!("{what} record missing for job {job}"))
    };
    for rec in log.records() {
        match rec {
            LogRecord::Submit { t, job, nodes, base_runtime, malleable, .. } => {
                jobs.insert(
                    *job,
                    Partial {
                        submit: *t,
                        start: None,
                        end: None,
                        nodes: *nodes,
                        base: *base_runtime,
                        malleable: *malleable,
                    },
                );
            }
            LogRecord::Start { t, job, mode, mates: ms, .. } => {
                let p = jobs.get_mut(job).ok_or_else(|| missing("submit", *job))?;
                p.start = Some((*t, *mode));
                mates.extend(ms.iter().copied());
            }
            LogRecord::Complete { t, job } => {
                let p = jobs.get_mut(job).ok_or_else(|| missing("submit", *job))?;
                p.end = Some(*t);
            }
            LogRecord::Shrink { .. } | LogRecord::Expand { .. } => {}
        }
    }
    let mut out = Vec::with_capacity(jobs.len());
    for (id, p) in jobs {
        let (start, mode) = p.start.ok_or_else(|| missing("start", id))?;
        let end = p.end.ok_or_else(|| missing("complete", id))?;
        out.push(Outcome {
            id,
            submit: p.submit,
            start,
            end,
            nodes: p.nodes,
            base: p.base,
            malleable: p.malleable,
            started_malleable: mode == StartMode::Malleable,
        });
    }
    if out.is_empty() {
        return Err(SimError::IncompleteLog("log contains no jobs".into()));
    }
    // Deterministic accumulation order, independent of completion order.
    out.sort_by_key(|o| (o.submit, o.id));
    Ok((out, mates))
}

fn slowdown(o: &Outcome, opts: &MetricsOptions) -> f64 {
    let response = (o.end - o.submit) as f64;
    match opts.bounded_tau {
        None => response / o.base as f64,
        Some(tau) => (response / o.base.max(tau) as f64).max(1.0),
    }
}

pub fn summarize(log: &EventLog) -> Result<SimReport> {
    summarize_with(log, &MetricsOptions::default())
}

pub fn summarize_with(log: &EventLog, opts: &MetricsOptions) -> Result<SimReport> {
    let (outs, mates) = outcomes(log)?;
    let n = outs.len() as f64;
    let first_submit = outs.iter().map(|o| o.submit).min().unwrap();
    let last_completion = outs.iter().map(|o| o.end).max().unwrap();
    let mut sum_response = 0.0;
    let mut sum_wait = 0.0;
    let mut sum_slowdown = 0.0;
    let mut max_slowdown = 0.0f64;
    let mut daily: BTreeMap<u64, DayStats> = BTreeMap::new();
    let mut day_slowdowns: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
    for o in &outs {
        let sd = slowdown(o, opts);
        sum_response += (o.end - o.submit) as f64;
        sum_wait += (o.start - o.submit) as f64;
        sum_slowdown += sd;
        max_slowdown = max_slowdown.max(sd);
        let end_day = (o.end - first_submit) / SECONDS_PER_DAY;
        let d = daily.entry(end_day).or_insert(DayStats {
            day: end_day,
            completed: 0,
            avg_slowdown: None,
            malleable_starts: 0,
        });
        d.completed += 1;
        let (s, c) = day_slowdowns.entry(end_day).or_insert((0.0, 0));
        *s += sd;
        *c += 1;
        if o.started_malleable {
            let start_day = (o.start - first_submit) / SECONDS_PER_DAY;
            daily
                .entry(start_day)
                .or_insert(DayStats {
                    day: start_day,
                    completed: 0,
                    avg_slowdown: None,
                    malleable_starts: 0,
                })
                .malleable_starts += 1;
        }
    }
    for (day, (s, c)) in day_slowdowns {
        daily.get_mut(&day).unwrap().avg_slowdown = Some(s / c as f64);
    }
    // Fill calendar gaps so the series indexes cleanly by day.
    let last_day = (last_completion - first_submit) / SECONDS_PER_DAY;
    let daily: Vec<DayStats> = (0..=last_day)
        .map(|day| {
            daily.remove(&day).unwrap_or(DayStats {
                day,
                completed: 0,
                avg_slowdown: None,
                malleable_starts: 0,
            })
        })
        .collect();
    Ok(SimReport {
        jobs: outs.len() as u64,
        first_submit,
        last_completion,
        makespan: last_completion - first_submit,
        avg_response_time: sum_response / n,
        avg_wait_time: sum_wait / n,
        avg_slowdown: sum_slowdown / n,
        max_slowdown,
        malleable_jobs: outs.iter().filter(|o| o.malleable).count() as u64,
        malleable_starts: outs.iter().filter(|o| o.started_malleable).count() as u64,
        mate_jobs: mates.len() as u64,
        daily,
    })
}

/// Bucket edges for the job-category heatmap; a final open bucket is
/// implied on each axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub node_edges: Vec<u32>,
    pub runtime_edges: Vec<u64>,
}

impl Default for HeatmapSpec {
    fn default() -> Self {
        HeatmapSpec {
            node_edges: vec![2, 8, 32, 128, 512],
            runtime_edges: vec![3600, 4 * 3600, 12 * 3600, 24 * 3600],
        }
    }
}

impl HeatmapSpec {
    pub fn node_labels(&self) -> Vec<String> {
        Self::labels(self.node_edges.iter().map(|e| e.to_string()).collect())
    }

    pub fn runtime_labels(&self) -> Vec<String> {
        Self::labels(self.runtime_edges.iter().map(|e| e.to_string()).collect())
    }

    fn labels(edges: Vec<String>) -> Vec<String> {
        let mut out: Vec<String> = edges.iter().map(|e| format!("<={e}")).collect();
        out.push(match edges.last() {
            Some(e) => format!(">{e}"),
            None => "all".into(),
        });
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub jobs: u64,
    pub avg_slowdown: f64,
    pub avg_response: f64,
    pub avg_wait: f64,
}

/// Per-category metrics: rows are node buckets, columns runtime buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub spec: HeatmapSpec,
    pub cells: Vec<Vec<HeatmapCell>>,
}

fn bucket_u32(v: u32, edges: &[u32]) -> usize {
    edges.iter().position(|&e| v <= e).unwrap_or(edges.len())
}

fn bucket_u64(v: u64, edges: &[u64]) -> usize {
    edges.iter().position(|&e| v <= e).unwrap_or(edges.len())
}

/// Bucket jobs by requested nodes and base runtime.
pub fn heatmap(log: &EventLog, spec: &HeatmapSpec) -> Result<Heatmap> {
    let (outs, _) = outcomes(log)?;
    let rows = spec.node_edges.len() + 1;
    let cols = spec.runtime_edges.len() + 1;
    let mut sums = vec![vec![(0u64, 0.0f64, 0.0f64, 0.0f64); cols]; rows];
    let opts = MetricsOptions::default();
    for o in &outs {
        let r = bucket_u32(o.nodes, &spec.node_edges);
        let c = bucket_u64(o.base, &spec.runtime_edges);
        let cell = &mut sums[r][c];
        cell.0 += 1;
        cell.1 += slowdown(o, &opts);
        cell.2 += (o.end - o.submit) as f64;
        cell.3 += (o.start - o.submit) as f64;
    }
    let cells = sums
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(jobs, sd, resp, wait)| {
                    if jobs == 0 {
                        HeatmapCell::default()
                    } else {
                        HeatmapCell {
                            jobs,
                            avg_slowdown: sd / jobs as f64,
                            avg_response: resp / jobs as f64,
                            avg_wait: wait / jobs as f64,
                        }
                    }
                })
                .collect()
        })
        .collect();
    Ok(Heatmap { spec: spec.clone(), cells })
}

/// One heatmap category related across two runs. Each ratio is
/// `baseline / other`, so values above 1 mean the other run improved the
/// category; a ratio is absent when either run has no jobs there, or when
/// the other run's value is zero (e.g. a zero-wait category).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioCell {
    pub baseline_jobs: u64,
    pub other_jobs: u64,
    pub slowdown: Option<f64>,
    pub response: Option<f64>,
    pub wait: Option<f64>,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| a / b)
}

/// Relate two heatmaps of the same shape cell by cell.
pub fn heatmap_ratio(baseline: &Heatmap, other: &Heatmap) -> Result<Vec<Vec<RatioCell>>> {
    if baseline.spec != other.spec {
        return Err(SimError::HeatmapMismatch(
            "bucket edges differ between runs".into(),
        ));
    }
    Ok(baseline
        .cells
        .iter()
        .zip(&other.cells)
        .map(|(ra, rb)| {
            ra.iter()
                .zip(rb)
                .map(|(a, b)| {
                    let mut cell = RatioCell {
                        baseline_jobs: a.jobs,
                        other_jobs: b.jobs,
                        ..RatioCell::default()
                    };
                    if a.jobs > 0 && b.jobs > 0 {
                        cell.slowdown = ratio(a.avg_slowdown, b.avg_slowdown);
                        cell.response = ratio(a.avg_response, b.avg_response);
                        cell.wait = ratio(a.avg_wait, b.avg_wait);
                    }
                    cell
                })
                .collect()
        })
        .collect())
}

// --- CSV writers -------------------------------------------------------

pub fn report_csv(r: &SimReport) -> String {
    let mut s = String::from("metric,value\n");
    let rows: [(&str, String); 11] = [
        ("jobs", r.jobs.to_string()),
        ("first_submit", r.first_submit.to_string()),
        ("last_completion", r.last_completion.to_string()),
        ("makespan", r.makespan.to_string()),
        ("avg_response_time", r.avg_response_time.to_string()),
        ("avg_wait_time", r.avg_wait_time.to_string()),
        ("avg_slowdown", r.avg_slowdown.to_string()),
        ("max_slowdown", r.max_slowdown.to_string()),
        ("malleable_jobs", r.malleable_jobs.to_string()),
        ("malleable_starts", r.malleable_starts.to_string()),
        ("mate_jobs", r.mate_jobs.to_string()),
    ];
    for (k, v) in rows {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

pub fn daily_csv(r: &SimReport) -> String {
    let mut s = String::from("day,completed,avg_slowdown,malleable_starts\n");
    for d in &r.daily {
        let sd = d.avg_slowdown.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{sd},{}\n", d.day, d.completed, d.malleable_starts));
    }
    s
}

pub fn heatmap_csv(h: &Heatmap) -> String {
    let mut s = String::from("nodes,runtime,jobs,avg_slowdown,avg_response,avg_wait\n");
    let nl = h.spec.node_labels();
    let rl = h.spec.runtime_labels();
    for (r, row) in h.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                nl[r], rl[c], cell.jobs, cell.avg_slowdown, cell.avg_response, cell.avg_wait
            ));
        }
    }
    s
}

/// Ratio grid as CSV; empty values mark categories without data.
pub fn heatmap_ratio_csv(spec: &HeatmapSpec, ratio: &[Vec<RatioCell>]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from(
        "nodes,runtime,baseline_jobs,other_jobs,slowdown_ratio,response_ratio,wait_ratio\n",
    );
    let nl = spec.node_labels();
    let rl = spec.runtime_labels();
    for (r, row) in ratio.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                nl[r],
                rl[c],
                cell.baseline_jobs,
                cell.other_jobs,
                opt(cell.slowdown),
                opt(cell.response),
                opt(cell.wait)
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::NodeId;
    use crate::eventlog::CoreChange;

    /// The two-job co-scheduling scenario, as its log would appear.
    fn sample_log() -> EventLog {
        let mut log = EventLog::new();
        log.push(LogRecord::Submit {
            t: 0,
            job: JobId(1),
            nodes: 2,
            requested_time: 10000,
            base_runtime: 10000,
            malleable: true,
        });
        log.push(LogRecord::Start {
            t: 0,
            job: JobId(1),
            mode: StartMode::Static,
            nodes: 2,
            mates: vec![],
            free_used: 0,
            static_end: 0,
            mall_end: 0,
            impact: 0.0,
        });
        log.push(LogRecord::Submit {
            t: 100,
            job: JobId(2),
            nodes: 2,
            requested_time: 1000,
            base_runtime: 1000,
            malleable: true,
        });
        log.push(LogRecord::Start {
            t: 100,
            job: JobId(2),
            mode: StartMode::Malleable,
            nodes: 2,
            mates: vec![JobId(1)],
            free_used: 0,
            static_end: 10900,
            mall_end: 2000,
            impact: 1.1,
        });
        log.push(LogRecord::Shrink {
            t: 100,
            job: JobId(1),
            changes: vec![
                CoreChange { node: NodeId(0), old_cores: 48, new_cores: 24 },
                CoreChange { node: NodeId(1), old_cores: 48, new_cores: 24 },
            ],
        });
        log.push(LogRecord::Complete { t: 2100, job: JobId(2) });
        log.push(LogRecord::Expand {
            t: 2100,
            job: JobId(1),
            changes: vec![
                CoreChange { node: NodeId(0), old_cores: 24, new_cores: 48 },
                CoreChange { node: NodeId(1), old_cores: 24, new_cores: 48 },
            ],
        });
        log.push(LogRecord::Complete { t: 11000, job: JobId(1) });
        log
    }

    #[test]
    fn summarizes_the_sample_run() {
        let r = summarize(&sample_log()).unwrap();
        assert_eq!(r.jobs, 2);
        assert_eq!(r.makespan, 11000);
        assert_eq!(r.avg_response_time, (11000.0 + 2000.0) / 2.0);
        assert_eq!(r.avg_wait_time, 0.0);
        assert_eq!(r.avg_slowdown, (1.1 + 2.0) / 2.0);
        assert_eq!(r.max_slowdown, 2.0);
        assert_eq!(r.malleable_jobs, 2);
        assert_eq!(r.malleable_starts, 1);
        assert_eq!(r.mate_jobs, 1);
        assert_eq!(r.daily.len(), 1);
        assert_eq!(r.daily[0].completed, 2);
        assert_eq!(r.daily[0].malleable_starts, 1);
        assert_eq!(r.daily[0].avg_slowdown, Some((1.1 + 2.0) / 2.0));
    }

    #[test]
    fn bounded_slowdown_tames_short_jobs() {
        let r = summarize_with(
            &sample_log(),
            &MetricsOptions { bounded_tau: Some(2000) },
        )
        .unwrap();
        // Job 2: response 2000 over max(1000, 2000) -> 1.0; job 1 unchanged
        // because its base exceeds the bound.
        assert_eq!(r.avg_slowdown, (1.1 + 1.0) / 2.0);
    }

    #[test]
    fn incomplete_logs_are_rejected() {
        let mut log = EventLog::new();
        log.push(LogRecord::Submit {
            t: 0,
            job: JobId(1),
            nodes: 1,
            requested_time: 10,
            base_runtime: 10,
            malleable: false,
        });
        match summarize(&log).unwrap_err() {
            SimError::IncompleteLog(msg) => assert!(msg.contains("start")),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(summarize(&EventLog::new()).is_err());
    }

    #[test]
    fn heatmap_buckets_and_ratios() {
        let spec = HeatmapSpec::default();
        let h = heatmap(&sample_log(), &spec).unwrap();
        // Both jobs: 2 nodes (first bucket), bases 10000 s and 1000 s.
        assert_eq!(h.cells[0][bucket_u64(1000, &spec.runtime_edges)].jobs, 1);
        assert_eq!(h.cells[0][bucket_u64(10000, &spec.runtime_edges)].jobs, 1);
        let total: u64 = h.cells.iter().flatten().map(|c| c.jobs).sum();
        assert_eq!(total, 2);

        let ratio = heatmap_ratio(&h, &h).unwrap();
        for (r, row) in ratio.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert_eq!(v.baseline_jobs, h.cells[r][c].jobs);
                if h.cells[r][c].jobs > 0 {
                    assert_eq!(v.slowdown, Some(1.0));
                    assert_eq!(v.response, Some(1.0));
                    // Both sample jobs start instantly, so the wait ratio
                    // is 0/0 and stays undefined.
                    assert_eq!(v.wait, None);
                } else {
                    assert_eq!(v.slowdown, None);
                }
            }
        }
    }

    #[test]
    fn cell_averages_weight_back_to_the_global_mean() {
        let r = summarize(&sample_log()).unwrap();
        let h = heatmap(&sample_log(), &HeatmapSpec::default()).unwrap();
        let weighted: f64 = h
            .cells
            .iter()
            .flatten()
            .map(|c| c.avg_slowdown * c.jobs as f64)
            .sum();
        let jobs: u64 = h.cells.iter().flatten().map(|c| c.jobs).sum();
        assert_eq!(jobs, r.jobs);
        assert!((weighted / jobs as f64 - r.avg_slowdown).abs() < 1e-12);
    }

    #[test]
    fn bucket_edges_are_inclusive() {
        assert_eq!(bucket_u32(2, &[2, 8]), 0);
        assert_eq!(bucket_u32(3, &[2, 8]), 1);
        assert_eq!(bucket_u32(9, &[2, 8]), 2);
        assert_eq!(bucket_u64(3600, &[3600]), 0);
        assert_eq!(bucket_u64(3601, &[3600]), 1);
    }

    #[test]
    fn csv_writers_are_stable() {
        let r = summarize(&sample_log()).unwrap();
        let csv = report_csv(&r);
        assert!(csv.starts_with("metric,value\njobs,2\n"));
        assert!(csv.contains("makespan,11000\n"));
        assert!(csv.contains("avg_slowdown,1.55\n"));
        let daily = daily_csv(&r);
        assert_eq!(daily, "day,completed,avg_slowdown,malleable_starts\n0,2,1.55,1\n");
        let h = heatmap(&sample_log(), &HeatmapSpec::default()).unwrap();
        let hcsv = heatmap_csv(&h);
        assert!(
            hcsv.starts_with("nodes,runtime,jobs,avg_slowdown,avg_response,avg_wait\n<=2,<=3600,")
        );
        let ratio = heatmap_ratio(&h, &h).unwrap();
        let rcsv = heatmap_ratio_csv(&h.spec, &ratio);
        // Job 2's category: one job on each side, unit ratios, no wait data.
        assert!(rcsv.contains("<=2,<=3600,1,1,1,1,\n"));
    }
}
