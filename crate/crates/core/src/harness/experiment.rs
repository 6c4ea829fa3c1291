//! Config-driven sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::topology::{gen_topology, GenSpec, Generated};
use super::HarnessError;
use crate::ack::{self, AckParams, AckProtocol, GossipVariant, PhasePlan};
use crate::bidir::{self, BidirPlan};
use crate::engine::{
    check_broadcast_complete, check_gossip_complete, replay_matches, run, EngineError, Run,
};
use crate::families::Strategy;
use crate::model::{ChannelModel, Label, Topology, TopologyKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    AckBroadcast,
    AckGossipCd,
    AckGossipNocd,
    BidirBroadcast,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::AckBroadcast,
        Protocol::AckGossipCd,
        Protocol::AckGossipNocd,
        Protocol::BidirBroadcast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::AckBroadcast => "ack-broadcast",
            Protocol::AckGossipCd => "ack-gossip-cd",
            Protocol::AckGossipNocd => "ack-gossip-nocd",
            Protocol::BidirBroadcast => "bidir-broadcast",
        }
    }

    pub fn default_channel(self) -> ChannelModel {
        match self {
            Protocol::AckGossipCd => ChannelModel::Cd,
            _ => ChannelModel::NoCd,
        }
    }

    /// Channels the protocol is specified for.
    pub fn allows(self, channel: ChannelModel) -> bool {
        match self {
            Protocol::AckGossipCd => channel == ChannelModel::Cd,
            Protocol::AckGossipNocd => channel == ChannelModel::NoCd,
            Protocol::AckBroadcast | Protocol::BidirBroadcast => true,
        }
    }

    pub fn is_gossip(self) -> bool {
        matches!(self, Protocol::AckGossipCd | Protocol::AckGossipNocd)
    }

    fn ack(self) -> Option<AckProtocol> {
        match self {
            Protocol::AckBroadcast => Some(AckProtocol::Broadcast),
            Protocol::AckGossipCd => Some(AckProtocol::GossipCd),
            Protocol::AckGossipNocd => Some(AckProtocol::GossipNoCd),
            Protocol::BidirBroadcast => None,
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown protocol {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "snake_case")]
pub enum TopologySource {
    /// A topology file; `source` defaults to the smallest label.
    File {
        path: PathBuf,
        #[serde(default)]
        source: Option<Label>,
    },
    /// A generator spec, run once per size and seed. An empty `sizes` uses
    /// the shape's own `n`.
    Generated {
        #[serde(flatten)]
        spec: GenSpec,
        #[serde(default)]
        sizes: Vec<usize>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default)]
    pub json: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// When set, every run records a trace, the trace is replayed against
    /// the topology, and it is written here as JSON lines.
    #[serde(default)]
    pub traces: Option<PathBuf>,
}

fn default_c() -> u32 {
    2
}

fn default_min_phase() -> u32 {
    4
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    #[serde(default)]
    pub channel: Option<ChannelModel>,
    pub topology: TopologySource,
    #[serde(default = "default_c")]
    pub c: u32,
    #[serde(default = "default_min_phase")]
    pub min_phase: u32,
    /// Strategy of the protocol's own set family (Stage-3 SSF for
    /// CD gossip, discovery family for bidirectional broadcast).
    #[serde(default)]
    pub strategy: Option<Strategy>,
    #[serde(default)]
    pub gossip: GossipVariant,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub max_rounds: Option<u64>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn new(protocol: Protocol, topology: TopologySource) -> Self {
        Self {
            protocol,
            channel: None,
            topology,
            c: default_c(),
            min_phase: default_min_phase(),
            strategy: None,
            gossip: GossipVariant::default(),
            seeds: default_seeds(),
            max_rounds: None,
            output: OutputPaths::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn channel(&self) -> ChannelModel {
        self.channel
            .unwrap_or_else(|| self.protocol.default_channel())
    }

    pub fn params(&self) -> AckParams {
        let mut p = AckParams {
            c: self.c,
            min_phase: self.min_phase,
            gossip: self.gossip,
            ..AckParams::default()
        };
        match (self.protocol, self.strategy) {
            (Protocol::BidirBroadcast, Some(s)) => p.sf_strategy = s,
            (_, Some(s)) => p.ssf_strategy = s,
            _ => {}
        }
        p
    }

    /// Checks everything that can be checked before any run.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let channel = self.channel();
        if !self.protocol.allows(channel) {
            return Err(HarnessError::Config(format!(
                "{} cannot run on the {channel:?} channel",
                self.protocol.name()
            )));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("no seeds".into()));
        }
        if self.max_rounds == Some(0) {
            return Err(HarnessError::Config("max_rounds must be positive".into()));
        }
        self.params()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if let TopologySource::Generated { spec, sizes } = &self.topology {
            if spec.c != self.c {
                return Err(HarnessError::Config(format!(
                    "generator c={} differs from c={}",
                    spec.c, self.c
                )));
            }
            if sizes.iter().any(|&n| n < 2) {
                return Err(HarnessError::Config("sizes must be at least 2".into()));
            }
            if self.protocol == Protocol::BidirBroadcast
                && spec.shape.kind() != TopologyKind::Bidirectional
            {
                return Err(HarnessError::Config(
                    "bidir-broadcast needs a bidirectional shape".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One run of a sweep. Correctness is derived from engine-observed
/// deliveries and the final node states, never from protocol reports alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub seed: u64,
    pub topology: String,
    pub protocol: Protocol,
    pub channel: ChannelModel,
    pub termination_phase: u32,
    pub rounds: u64,
    pub transmissions: u64,
    pub collisions: u64,
    pub terminated: bool,
    pub correct: bool,
    /// Bidirectional broadcast only: the final DFS tree and token trace checks.
    pub dfs_ok: Option<bool>,
    /// Only when traces are recorded: receptions replay from transmissions.
    pub trace_ok: Option<bool>,
    pub error: Option<String>,
}

/// CSV header; columns appear in exactly this order.
pub const CSV_COLUMNS: [&str; 14] = [
    "n",
    "seed",
    "topology",
    "protocol",
    "channel",
    "termination_phase",
    "rounds",
    "transmissions",
    "collisions",
    "terminated",
    "correct",
    "dfs_ok",
    "trace_ok",
    "error",
];

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn all_correct(&self) -> bool {
        self.rows.iter().all(|r| r.correct)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("rows serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        let opt = |b: Option<bool>| b.map(|b| b.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.seed.to_string(),
                r.topology.clone(),
                r.protocol.name().to_string(),
                channel_name(r.channel).to_string(),
                r.termination_phase.to_string(),
                r.rounds.to_string(),
                r.transmissions.to_string(),
                r.collisions.to_string(),
                r.terminated.to_string(),
                r.correct.to_string(),
                opt(r.dfs_ok),
                opt(r.trace_ok),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

pub fn channel_name(c: ChannelModel) -> &'static str {
    match c {
        ChannelModel::NoCd => "nocd",
        ChannelModel::Cd => "cd",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
}

pub fn export(result: &SweepResult, format: ExportFormat, path: &Path) -> Result<(), HarnessError> {
    let text = match format {
        ExportFormat::Json => result.to_json(),
        ExportFormat::Csv => result.to_csv(),
    };
    fs::write(path, text)?;
    Ok(())
}

enum Plan {
    Ack(Arc<PhasePlan>),
    Bidir(Arc<BidirPlan>),
}

struct Job {
    n: usize,
    seed: u64,
    name: String,
    topology: Result<(Topology, Label), String>,
}

fn jobs(cfg: &ExperimentConfig) -> Result<Vec<Job>, HarnessError> {
    match &cfg.topology {
        TopologySource::File { path, source } => {
            let text = fs::read_to_string(path)?;
            let t = Topology::from_json(&text)?;
            if cfg.protocol == Protocol::BidirBroadcast && !t.is_symmetric() {
                return Err(HarnessError::Config(
                    "bidir-broadcast needs a bidirectional topology".into(),
                ));
            }
            let src = match source {
                Some(s) if t.index_of(*s).is_none() => {
                    return Err(HarnessError::Config(format!(
                        "source {s} is not in the topology"
                    )));
                }
                Some(s) => *s,
                None => *t.labels().iter().min().expect("topologies are nonempty"),
            };
            let name = path
                .file_stem()
                .map_or_else(|| "file".into(), |s| s.to_string_lossy().into_owned());
            Ok(cfg
                .seeds
                .iter()
                .map(|&seed| Job {
                    n: t.len(),
                    seed,
                    name: name.clone(),
                    topology: Ok((t.clone(), src)),
                })
                .collect())
        }
        TopologySource::Generated { spec, sizes } => {
            let sizes = if sizes.is_empty() {
                vec![spec.shape.n()]
            } else {
                sizes.clone()
            };
            let mut out = Vec::new();
            for &n in &sizes {
                let spec = GenSpec {
                    shape: spec.shape.with_n(n),
                    ..spec.clone()
                };
                for &seed in &cfg.seeds {
                    let topology = gen_topology(&spec, seed)
                        .map(|Generated { topology, source }| (topology, source))
                        .map_err(|e| e.to_string());
                    out.push(Job {
                        n,
                        seed,
                        name: spec.shape.name().into(),
                        topology,
                    });
                }
            }
            Ok(out)
        }
    }
}

/// Runs every (size, seed) of the config. Rows come back ordered by
/// `(n, seed)` whatever the thread schedule; per-row failures are recorded
/// in the row and do not stop the sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    cfg.validate()?;
    let params = cfg.params();
    let plan = match cfg.protocol.ack() {
        Some(p) => Plan::Ack(PhasePlan::new(p, params)?),
        None => Plan::Bidir(BidirPlan::new(params)?),
    };
    let mut jobs = jobs(cfg)?;
    jobs.sort_by_key(|j| (j.n, j.seed));
    let traces = cfg.output.traces.as_deref();
    if let Some(dir) = traces {
        fs::create_dir_all(dir)?;
    }
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|job| run_row(cfg, &plan, job, traces))
        .collect();
    let result = SweepResult { rows };
    if let Some(p) = &cfg.output.json {
        export(&result, ExportFormat::Json, p)?;
    }
    if let Some(p) = &cfg.output.csv {
        export(&result, ExportFormat::Csv, p)?;
    }
    Ok(result)
}

fn run_row(cfg: &ExperimentConfig, plan: &Plan, job: &Job, traces: Option<&Path>) -> SweepRow {
    let channel = cfg.channel();
    let mut row = SweepRow {
        n: job.n,
        seed: job.seed,
        topology: job.name.clone(),
        protocol: cfg.protocol,
        channel,
        termination_phase: 0,
        rounds: 0,
        transmissions: 0,
        collisions: 0,
        terminated: false,
        correct: false,
        dfs_ok: None,
        trace_ok: None,
        error: None,
    };
    let (t, source) = match &job.topology {
        Ok(x) => x,
        Err(e) => {
            row.error = Some(e.clone());
            return row;
        }
    };
    let record = traces.is_some();
    let budget = match plan {
        Plan::Ack(p) => ack::default_budget(p, t.len()),
        Plan::Bidir(p) => bidir::default_budget(p, t.len()),
    };
    let budget = match (cfg.max_rounds, budget) {
        (Some(m), _) => m,
        (None, Ok(b)) => b,
        (None, Err(e)) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let result = match plan {
        Plan::Ack(p) if cfg.protocol.is_gossip() => run(
            t,
            channel,
            ack::gossip_factory(Arc::clone(p)),
            budget,
            record,
        ),
        Plan::Ack(p) => run(
            t,
            channel,
            ack::broadcast_factory(Arc::clone(p), *source),
            budget,
            record,
        ),
        Plan::Bidir(p) => run(
            t,
            channel,
            bidir::bidir_factory(Arc::clone(p), *source),
            budget,
            record,
        ),
    };
    let run = match result {
        Ok(r) => r,
        Err(EngineError::MaxRoundsExceeded { outcome, .. }) => {
            row.error = Some(format!("no termination within {budget} rounds"));
            Run {
                outcome: *outcome,
                trace: None,
            }
        }
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let out = &run.outcome;
    row.termination_phase = out.termination_phase;
    row.rounds = out.metrics.rounds;
    row.transmissions = out.metrics.transmissions;
    row.collisions = out.metrics.collisions;
    row.terminated = out.terminated;
    let complete = if cfg.protocol.is_gossip() {
        check_gossip_complete(out)
    } else {
        check_broadcast_complete(out, *source, *source)
    };
    if cfg.protocol == Protocol::BidirBroadcast && out.terminated {
        let tree = bidir::check_dfs_tree(t, out, *source).is_ok();
        let token = run
            .trace
            .as_ref()
            .is_none_or(|tr| bidir::check_token_trace(tr, *source, t.len()).is_ok());
        row.dfs_ok = Some(tree && token);
    }
    if let (Some(dir), Some(trace)) = (traces, &run.trace) {
        row.trace_ok = Some(replay_matches(t, channel, trace));
        let file = dir.join(format!(
            "{}-{}-n{}-s{}.jsonl",
            cfg.protocol.name(),
            job.name,
            job.n,
            job.seed
        ));
        let written =
            fs::File::create(&file).and_then(|f| trace.write_jsonl(std::io::BufWriter::new(f)));
        if let Err(e) = written {
            row.error = Some(format!("writing {}: {e}", file.display()));
        }
    }
    row.correct =
        complete && out.terminated && row.dfs_ok != Some(false) && row.trace_ok != Some(false);
    row
}
