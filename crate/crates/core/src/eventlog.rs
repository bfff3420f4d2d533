//! Line-delimited event log of one simulation run.
//!
//! The log is the full observable record of a run: identical logs mean
//! identical schedules, so determinism tests compare rendered bytes. Each
//! record is one `key=value` line:
//!
//! ```text
//! t=0    ev=submit   job=1 nodes=2 req=10000 base=10000 mall=1
//! t=0    ev=start    job=1 mode=static nodes=2
//! t=100  ev=start    job=2 mode=malleable nodes=2 mates=1 free=0 static_end=10900 mall_end=2000 pi=1.1
//! t=100  ev=shrink   job=1 nodes=0:48->24,1:48->24
//! t=2100 ev=complete job=2
//! t=2100 ev=expand   job=1 nodes=0:24->48,1:24->48
//! ```
//!
//! `static_end` and `mall_end` are the gate's response-time estimates in
//! seconds from the decision instant; `pi` is the summed penalty of the
//! chosen mates.

use std::fmt;
use std::io::Write;

use crate::cluster::NodeId;
use crate::error::Result;
use crate::workload::JobId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    Static,
    Malleable,
}

/// Per-node core-count change of one resident, `old -> new`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreChange {
    pub node: NodeId,
    pub old_cores: u32,
    pub new_cores: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Submit {
        t: u64,
        job: JobId,
        nodes: u32,
        requested_time: u64,
        base_runtime: u64,
        malleable: bool,
    },
    Start {
        t: u64,
        job: JobId,
        mode: StartMode,
        nodes: u32,
        /// Lenders shrunk for this start, by job id (malleable mode only).
        mates: Vec<JobId>,
        free_used: u32,
        static_end: u64,
        mall_end: u64,
        impact: f64,
    },
    Shrink {
        t: u64,
        job: JobId,
        changes: Vec<CoreChange>,
    },
    Expand {
        t: u64,
        job: JobId,
        changes: Vec<CoreChange>,
    },
    Complete {
        t: u64,
        job: JobId,
    },
}

impl LogRecord {
    pub fn time(&self) -> u64 {
        match *self {
            LogRecord::Submit { t, .. }
            | LogRecord::Start { t, .. }
            | LogRecord::Shrink { t, .. }
            | LogRecord::Expand { t, .. }
            | LogRecord::Complete { t, .. } => t,
        }
    }
}

fn write_changes(f: &mut fmt::Formatter<'_>, changes: &[CoreChange]) -> fmt::Result {
    for (i, c) in changes.iter().enumerate() {
        let sep = if i == 0 { "" } else { "," };
        write!(f, "{sep}{}:{}->{}", c.node, c.old_cores, c.new_cores)?;
    }
    Ok(())
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogRecord::Submit {
                t,
                job,
                nodes,
                requested_time,
                base_runtime,
                malleable,
            } => write!(
                f,
                "t={t} ev=submit job={job} nodes={nodes} req={requested_time} base={base_runtime} mall={}",
                u8::from(*malleable)
            ),
            LogRecord::Start {
                t,
                job,
                mode: StartMode::Static,
                nodes,
                ..
            } => write!(f, "t={t} ev=start job={job} mode=static nodes={nodes}"),
            LogRecord::Start {
                t,
                job,
                mode: StartMode::Malleable,
                nodes,
                mates,
                free_used,
                static_end,
                mall_end,
                impact,
            } => {
                write!(f, "t={t} ev=start job={job} mode=malleable nodes={nodes} mates=")?;
                for (i, m) in mates.iter().enumerate() {
                    let sep = if i == 0 { "" } else { ":" };
                    write!(f, "{sep}{m}")?;
                }
                write!(
                    f,
                    " free={free_used} static_end={static_end} mall_end={mall_end} pi={impact}"
                )
            }
            LogRecord::Shrink { t, job, changes } => {
                write!(f, "t={t} ev=shrink job={job} nodes=")?;
                write_changes(f, changes)
            }
            LogRecord::Expand { t, job, changes } => {
                write!(f, "t={t} ev=expand job={job} nodes=")?;
                write_changes(f, changes)
            }
            LogRecord::Complete { t, job } => write!(f, "t={t} ev=complete job={job}"),
        }
    }
}

/// Append-only record sequence in simulation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        EventLog::default()
    }

    pub fn push(&mut self, record: LogRecord) {
        debug_assert!(
            self.records.last().map_or(0, |r| r.time()) <= record.time(),
            "records must be appended in time order"
        );
        self.records.push(record);
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The canonical byte representation, one record per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(self.render().as_bytes())?;
        Ok(())
    }
}
