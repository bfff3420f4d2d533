//! Flag, config-file and built-in-default resolution.
//!
//! Every knob can come from three places; command-line flags beat the
//! config file, which beats the built-in defaults. The config file is a
//! flat `key = value` format whose keys mirror the flag names.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use sdsim_core::{
    ClusterConfig, CutoffPolicy, Policy, RuntimeModel, SharingFactor, SimConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    /// Plain backfill; malleability flags are ignored.
    Static,
    /// Backfill plus slowdown-driven malleable starts.
    Sd,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Policy {
        match p {
            PolicyArg::Static => Policy::Static,
            PolicyArg::Sd => Policy::SlowdownDriven,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    /// Progress scales with the sum of granted cores.
    Ideal,
    /// Progress is paced by the most-shrunk node.
    Worst,
}

impl From<ModelArg> for RuntimeModel {
    fn from(m: ModelArg) -> RuntimeModel {
        match m {
            ModelArg::Ideal => RuntimeModel::Ideal,
            ModelArg::Worst => RuntimeModel::Worst,
        }
    }
}

/// `--max-slowdown` accepts `dyn` or a positive numeric cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxSlowdown {
    Dynamic,
    Fixed(f64),
}

impl FromStr for MaxSlowdown {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("dyn") {
            return Ok(MaxSlowdown::Dynamic);
        }
        let v: f64 = s
            .parse()
            .with_context(|| format!("max slowdown must be a number or 'dyn', got {s:?}"))?;
        if !v.is_finite() || v <= 0.0 {
            bail!("max slowdown must be positive, got {v}");
        }
        Ok(MaxSlowdown::Fixed(v))
    }
}

impl From<MaxSlowdown> for CutoffPolicy {
    fn from(m: MaxSlowdown) -> CutoffPolicy {
        match m {
            MaxSlowdown::Dynamic => CutoffPolicy::DynamicAverage,
            MaxSlowdown::Fixed(v) => CutoffPolicy::Fixed(v),
        }
    }
}

/// Knobs shared by `simulate` and `compare`. Defaults are filled in by
/// [`resolve`] so that a config file can sit between flags and defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Flat `key = value` config file mirroring these flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// SWF workload file to replay.
    #[arg(long)]
    pub workload: Option<PathBuf>,
    /// Execution model for actual job progress [default: ideal].
    #[arg(long, value_enum)]
    pub runtime_model: Option<ModelArg>,
    /// Mate penalty cutoff: a number or `dyn` [default: dyn].
    #[arg(long)]
    pub max_slowdown: Option<MaxSlowdown>,
    /// Fraction of a node's cores lendable to a guest, in (0, 1)
    /// [default: 0.5].
    #[arg(long)]
    pub sharing_factor: Option<f64>,
    /// Most mates shrunk for one malleable start [default: 2].
    #[arg(long)]
    pub max_mates: Option<usize>,
    /// Cheapest candidates kept before subset search [default: 64].
    #[arg(long)]
    pub candidate_cap: Option<usize>,
    /// Let free nodes complete a mate cover at zero impact.
    #[arg(long)]
    pub use_free_nodes: bool,
    /// Head-only reservations instead of conservative backfill.
    #[arg(long)]
    pub easy: bool,
    /// Seconds between periodic scheduling passes [default: 30].
    #[arg(long)]
    pub backfill_interval: Option<u64>,
    /// Queue positions examined per pass, 0 = unlimited [default: 512].
    #[arg(long)]
    pub bf_depth: Option<usize>,
    /// Probability that a replayed job is malleable [default: 0].
    #[arg(long)]
    pub malleable_fraction: Option<f64>,
    /// Seed for malleability marking; recorded in reports [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cluster node count [default: 1024].
    #[arg(long)]
    pub nodes: Option<u32>,
    /// Sockets per node [default: 2].
    #[arg(long)]
    pub sockets: Option<u32>,
    /// Cores per socket [default: 24].
    #[arg(long)]
    pub cores_per_socket: Option<u32>,
    /// Output directory [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One parsed config-file or flag set, pre-merge. Field names mirror the
/// flag names with `-` replaced by `_`.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub workload: Option<PathBuf>,
    pub policy: Option<PolicyArg>,
    pub baseline: Option<PolicyArg>,
    pub candidate: Option<PolicyArg>,
    pub runtime_model: Option<ModelArg>,
    pub max_slowdown: Option<MaxSlowdown>,
    pub sharing_factor: Option<f64>,
    pub max_mates: Option<usize>,
    pub candidate_cap: Option<usize>,
    pub use_free_nodes: Option<bool>,
    pub easy: Option<bool>,
    pub backfill_interval: Option<u64>,
    pub bf_depth: Option<usize>,
    pub malleable_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub nodes: Option<u32>,
    pub sockets: Option<u32>,
    pub cores_per_socket: Option<u32>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn from_common(args: &CommonArgs) -> Overrides {
        Overrides {
            workload: args.workload.clone(),
            policy: None,
            baseline: None,
            candidate: None,
            runtime_model: args.runtime_model,
            max_slowdown: args.max_slowdown,
            sharing_factor: args.sharing_factor,
            max_mates: args.max_mates,
            candidate_cap: args.candidate_cap,
            use_free_nodes: args.use_free_nodes.then_some(true),
            easy: args.easy.then_some(true),
            backfill_interval: args.backfill_interval,
            bf_depth: args.bf_depth,
            malleable_fraction: args.malleable_fraction,
            seed: args.seed,
            nodes: args.nodes,
            sockets: args.sockets,
            cores_per_socket: args.cores_per_socket,
            out: args.out.clone(),
        }
    }

    /// Parse a flat `key = value` file. Blank lines and lines starting
    /// with `#` or `;` are skipped; keys are the flag names.
    pub fn from_file(path: &Path) -> Result<Overrides> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut o = Overrides::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let at = || format!("{}:{}", path.display(), idx + 1);
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}: expected `key = value`, got {raw:?}", at());
            };
            let (key, value) = (key.trim(), value.trim());
            let parse_ctx = |what: &str| format!("{}: bad value for {what}: {value:?}", at());
            match key {
                "workload" => o.workload = Some(PathBuf::from(value)),
                "policy" => {
                    o.policy =
                        Some(PolicyArg::from_str(value, true).map_err(|e| {
                            anyhow::anyhow!("{}: {e}", at())
                        })?)
                }
                "baseline" => {
                    o.baseline =
                        Some(PolicyArg::from_str(value, true).map_err(|e| {
                            anyhow::anyhow!("{}: {e}", at())
                        })?)
                }
                "candidate" => {
                    o.candidate =
                        Some(PolicyArg::from_str(value, true).map_err(|e| {
                            anyhow::anyhow!("{}: {e}", at())
                        })?)
                }
                "runtime-model" => {
                    o.runtime_model =
                        Some(ModelArg::from_str(value, true).map_err(|e| {
                            anyhow::anyhow!("{}: {e}", at())
                        })?)
                }
                "max-slowdown" => {
                    o.max_slowdown = Some(value.parse().with_context(|| parse_ctx(key))?)
                }
                "sharing-factor" => {
                    o.sharing_factor = Some(value.parse().with_context(|| parse_ctx(key))?)
                }
                "max-mates" => o.max_mates = Some(value.parse().with_context(|| parse_ctx(key))?),
                "candidate-cap" => {
                    o.candidate_cap = Some(value.parse().with_context(|| parse_ctx(key))?)
                }
                "use-free-nodes" => {
                    o.use_free_nodes = Some(value.parse().with_context(|| parse_ctx(key))?)
                }
                "easy" => o.easy = Some(value.parse().with_context(|| parse_ctx(key))?),
                "backfill-interval" => {
                    o.backfill_interval = Some(value.parse().with_context(|| parse_ctx(key))?)
                }
                "bf-depth" => o.bf_depth = Some(value.parse().with_context(|| parse_ctx(key))?),
                "malleable-fraction" => {
                    o.malleable_fraction = Some(value.parse().with_context(|| parse_ctx(key))?)
                }
                "seed" => o.seed = Some(value.parse().with_context(|| parse_ctx(key))?),
                "nodes" => o.nodes = Some(value.parse().with_context(|| parse_ctx(key))?),
                "sockets" => o.sockets = Some(value.parse().with_context(|| parse_ctx(key))?),
                "cores-per-socket" => {
                    o.cores_per_socket = Some(value.parse().with_context(|| parse_ctx(key))?)
                }
                "out" => o.out = Some(PathBuf::from(value)),
                _ => bail!("{}: unknown key {key:?}", at()),
            }
        }
        Ok(o)
    }

    /// Field-wise precedence: values in `self` win over `fallback`.
    pub fn or(self, fallback: Overrides) -> Overrides {
        Overrides {
            workload: self.workload.or(fallback.workload),
            policy: self.policy.or(fallback.policy),
            baseline: self.baseline.or(fallback.baseline),
            candidate: self.candidate.or(fallback.candidate),
            runtime_model: self.runtime_model.or(fallback.runtime_model),
            max_slowdown: self.max_slowdown.or(fallback.max_slowdown),
            sharing_factor: self.sharing_factor.or(fallback.sharing_factor),
            max_mates: self.max_mates.or(fallback.max_mates),
            candidate_cap: self.candidate_cap.or(fallback.candidate_cap),
            use_free_nodes: self.use_free_nodes.or(fallback.use_free_nodes),
            easy: self.easy.or(fallback.easy),
            backfill_interval: self.backfill_interval.or(fallback.backfill_interval),
            bf_depth: self.bf_depth.or(fallback.bf_depth),
            malleable_fraction: self.malleable_fraction.or(fallback.malleable_fraction),
            seed: self.seed.or(fallback.seed),
            nodes: self.nodes.or(fallback.nodes),
            sockets: self.sockets.or(fallback.sockets),
            cores_per_socket: self.cores_per_socket.or(fallback.cores_per_socket),
            out: self.out.or(fallback.out),
        }
    }
}

/// Everything a run command needs after precedence resolution.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub workload: PathBuf,
    pub malleable_fraction: f64,
    pub out: PathBuf,
    /// Fully resolved engine configuration; `policy` is the simulate one.
    pub sim: SimConfig,
    pub baseline: Policy,
    pub candidate: Policy,
}

/// Merge flags over the config file over defaults, then validate.
pub fn resolve(
    common: &CommonArgs,
    policy: Option<PolicyArg>,
    baseline: Option<PolicyArg>,
    candidate: Option<PolicyArg>,
) -> Result<RunSettings> {
    let mut from_cli = Overrides::from_common(common);
    from_cli.policy = policy;
    from_cli.baseline = baseline;
    from_cli.candidate = candidate;
    let merged = match &common.config {
        Some(path) => from_cli.or(Overrides::from_file(path)?),
        None => from_cli,
    };

    let defaults = SimConfig::default();
    let cluster = ClusterConfig::new(
        merged.nodes.unwrap_or(1024),
        merged.sockets.unwrap_or(2),
        merged.cores_per_socket.unwrap_or(24),
    );
    cluster.validate()?;
    let sharing = match merged.sharing_factor {
        Some(f) => SharingFactor::new(f)?,
        None => defaults.sharing,
    };
    let malleable_fraction = merged.malleable_fraction.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&malleable_fraction) {
        bail!("malleable fraction must be in [0, 1], got {malleable_fraction}");
    }
    let sim = SimConfig {
        cluster,
        policy: merged.policy.unwrap_or(PolicyArg::Static).into(),
        runtime_model: merged
            .runtime_model
            .map(RuntimeModel::from)
            .unwrap_or(defaults.runtime_model),
        cutoff: merged
            .max_slowdown
            .map(CutoffPolicy::from)
            .unwrap_or(defaults.cutoff),
        sharing,
        max_mates: merged.max_mates.unwrap_or(defaults.max_mates),
        candidate_cap: merged.candidate_cap.unwrap_or(defaults.candidate_cap),
        use_free_nodes: merged.use_free_nodes.unwrap_or(defaults.use_free_nodes),
        easy: merged.easy.unwrap_or(defaults.easy),
        backfill_interval: merged
            .backfill_interval
            .unwrap_or(defaults.backfill_interval),
        reservation_depth: merged.bf_depth.unwrap_or(defaults.reservation_depth),
        max_residents: defaults.max_residents,
        validate_every_event: false,
        seed: merged.seed.unwrap_or(0),
    };
    let workload = merged
        .workload
        .clone()
        .context("no workload given: pass --workload or set it in the config file")?;
    Ok(RunSettings {
        workload,
        malleable_fraction,
        out: merged.out.unwrap_or_else(|| PathBuf::from("out")),
        sim,
        baseline: merged.baseline.unwrap_or(PolicyArg::Static).into(),
        candidate: merged.candidate.unwrap_or(PolicyArg::Sd).into(),
    })
}
