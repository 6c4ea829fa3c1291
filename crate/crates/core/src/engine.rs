//! Synchronous round loop.
//!
//! Every round the engine asks each live node for its action, resolves the
//! channel for every listener from the set of transmitting in-neighbors, then
//! hands the receptions back. A node only ever sees its own label, `c`, the
//! global round number and its own receptions: that is the whole
//! [`NodeProtocol`] surface.

use std::collections::BTreeSet;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChannelModel, Label, Message, Reception, RoundAction, Topology};

/// What a node knows when it is constructed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeContext {
    pub label: Label,
    pub c: u32,
}

/// A per-node state machine driven by the engine.
pub trait NodeProtocol: Send {
    fn act(&mut self, round: u64) -> RoundAction;
    /// Called only for nodes that listened this round.
    fn observe(&mut self, round: u64, reception: &Reception);
    fn is_done(&self) -> bool;
    /// Rumors the node holds before round 0.
    fn initial_rumors(&self) -> BTreeSet<Label>;
    fn snapshot(&self) -> NodeSnapshot;
    fn take_events(&mut self) -> Vec<ProtocolEvent> {
        Vec::new()
    }
}

/// Self-reported node state at the end of a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub label: Label,
    pub rumors: BTreeSet<Label>,
    pub done: bool,
    /// Source only: the protocol concluded the broadcast is acknowledged.
    pub acknowledged: bool,
    pub phase: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutual_reach: Option<BTreeSet<Label>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discovery_index: Option<usize>,
}

/// Why a node entered the failed state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    /// (a) label above the phase's label bound.
    BigNode,
    /// (b) a directly heard label is missing from the mutual-reach list.
    NotMutual,
    /// (c) mutual-reach list larger than the size estimate.
    Oversize,
    /// The mutual-reach list holds only the node itself.
    Singleton,
    /// (A) a failure message was received.
    FailureHeard,
    /// (B) collision (observed or inferred) with at most one known sender scheduled.
    Collision,
    /// (C) a label outside the mutual-reach list was received.
    ForeignLabel,
    /// Acknowledged broadcast: a mutual-reach node heard nothing during the replay stage.
    ReplaySilent,
    /// Acknowledged broadcast: the source is outside the mutual-reach set or overflows the estimate.
    SourceCheck,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Failed {
        cause: FailureCause,
    },
    /// Acknowledged broadcast: a node was outside the mutual-reach set and jammed stage 3.
    Jamming,
    NackSent,
    NackHeard,
    HelperFound {
        helper: Label,
    },
    TokenReceived,
    JammerDetected,
    /// Bidirectional broadcast: discovery would exceed the size estimate.
    Overflow,
    /// Bidirectional broadcast: an estimate decoded to an impossible pair of receptions.
    ProtocolViolation,
    Abandoned {
        reason: String,
    },
    AckStarted,
    Done,
    PhaseAdvanced {
        next: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolEvent {
    pub round: u64,
    pub label: Label,
    pub phase: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rounds: u64,
    pub transmissions: u64,
    pub deliveries: u64,
    /// Listener-rounds with two or more transmitting in-neighbors.
    pub collisions: u64,
    pub max_payload: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeOutcome {
    pub snapshot: NodeSnapshot,
    /// Rumors the node started with plus every rumor the engine delivered to
    /// it. Independent of what the protocol reports about itself.
    pub delivered_rumors: BTreeSet<Label>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub terminated: bool,
    pub termination_round: Option<u64>,
    pub termination_phase: u32,
    pub nodes: Vec<NodeOutcome>,
    pub metrics: RunMetrics,
    pub events: Vec<ProtocolEvent>,
}

impl RunOutcome {
    pub fn node(&self, label: Label) -> Option<&NodeOutcome> {
        self.nodes.iter().find(|n| n.snapshot.label == label)
    }

    pub fn events_of<'a>(
        &'a self,
        pred: impl Fn(&EventKind) -> bool + 'a,
    ) -> impl Iterator<Item = &'a ProtocolEvent> + 'a {
        self.events.iter().filter(move |e| pred(&e.kind))
    }

    pub fn failure_causes(&self) -> BTreeSet<FailureCause> {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Failed { cause } => Some(cause),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub transmissions: Vec<Message>,
    pub receptions: Vec<(Label, Reception)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rounds: Vec<RoundRecord>,
}

impl RunTrace {
    /// One JSON object per round.
    pub fn write_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        for rec in &self.rounds {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> serde_json::Result<Self> {
        let rounds = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { rounds })
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("network needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("max_rounds must be at least 1")]
    ZeroBudget,
    #[error("no termination within {rounds} rounds")]
    MaxRoundsExceeded {
        rounds: u64,
        outcome: Box<RunOutcome>,
    },
}

/// Channel resolution shared by [`crate::model::deliver`] and the engine.
pub(crate) fn resolve(mode: ChannelModel, count: usize, only: Option<&Message>) -> Reception {
    match count {
        0 => Reception::Silence,
        1 => Reception::Received {
            message: only.expect("single transmitter").clone(),
        },
        _ => match mode {
            ChannelModel::NoCd => Reception::Silence,
            ChannelModel::Cd => Reception::Collision,
        },
    }
}

/// A run in progress. Use [`run`] for the common case; stepping manually
/// lets tests inspect truncated executions.
pub struct Simulation<'t> {
    topology: &'t Topology,
    channel: ChannelModel,
    nodes: Vec<Box<dyn NodeProtocol>>,
    initial: Vec<BTreeSet<Label>>,
    heard: Vec<BTreeSet<Label>>,
    round: u64,
    metrics: RunMetrics,
    trace: Option<RunTrace>,
    termination_round: Option<u64>,
    counts: Vec<u32>,
    sender: Vec<usize>,
}

impl<'t> Simulation<'t> {
    pub fn new<F>(
        topology: &'t Topology,
        channel: ChannelModel,
        mut factory: F,
        record_trace: bool,
    ) -> Result<Self, EngineError>
    where
        F: FnMut(NodeContext) -> Box<dyn NodeProtocol>,
    {
        let n = topology.len();
        if n < 2 {
            return Err(EngineError::TooFewNodes(n));
        }
        let nodes: Vec<_> = topology
            .labels()
            .iter()
            .map(|&label| {
                factory(NodeContext {
                    label,
                    c: topology.c(),
                })
            })
            .collect();
        let initial: Vec<_> = nodes.iter().map(|p| p.initial_rumors()).collect();
        Ok(Self {
            topology,
            channel,
            nodes,
            heard: vec![BTreeSet::new(); n],
            initial,
            round: 0,
            metrics: RunMetrics::default(),
            trace: record_trace.then(RunTrace::default),
            termination_round: None,
            counts: vec![0; n],
            sender: vec![usize::MAX; n],
        })
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn all_done(&self) -> bool {
        self.nodes.iter().all(|p| p.is_done())
    }

    /// Executes one round.
    pub fn step(&mut self) {
        let round = self.round;
        let n = self.nodes.len();
        let mut actions = Vec::with_capacity(n);
        let mut transmitters = Vec::new();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let action = if node.is_done() {
                RoundAction::Idle
            } else {
                node.act(round)
            };
            if matches!(action, RoundAction::Transmit { .. }) {
                transmitters.push(i);
            }
            actions.push(action);
        }

        let mut messages: Vec<Option<Message>> = vec![None; n];
        for &u in &transmitters {
            let RoundAction::Transmit { body } = &actions[u] else {
                unreachable!()
            };
            self.metrics.max_payload = self.metrics.max_payload.max(body.cardinality());
            messages[u] = Some(Message {
                sender: self.topology.label(u),
                body: body.clone(),
            });
            for &v in self.topology.out_neighbors(u) {
                self.counts[v] += 1;
                self.sender[v] = u;
            }
        }
        self.metrics.transmissions += transmitters.len() as u64;

        let mut record = self.trace.as_ref().map(|_| RoundRecord {
            round,
            transmissions: transmitters
                .iter()
                .map(|&u| messages[u].clone().unwrap())
                .collect(),
            receptions: Vec::new(),
        });

        for v in 0..n {
            let count = self.counts[v] as usize;
            if matches!(actions[v], RoundAction::Listen) {
                let only = (count == 1).then(|| messages[self.sender[v]].as_ref().unwrap());
                let reception = resolve(self.channel, count, only);
                if count >= 2 {
                    self.metrics.collisions += 1;
                }
                if let Reception::Received { message } = &reception {
                    self.metrics.deliveries += 1;
                    self.heard[v].extend(message.body.rumors());
                }
                self.nodes[v].observe(round, &reception);
                if let Some(rec) = record.as_mut() {
                    rec.receptions.push((self.topology.label(v), reception));
                }
            }
            self.counts[v] = 0;
        }

        if let (Some(trace), Some(rec)) = (self.trace.as_mut(), record) {
            trace.rounds.push(rec);
        }
        self.round += 1;
        self.metrics.rounds = self.round;
        if self.termination_round.is_none() && self.all_done() {
            self.termination_round = Some(round);
        }
    }

    /// Steps until every node is done or `max_rounds` rounds have elapsed.
    /// Returns whether the run terminated.
    pub fn run_until(&mut self, max_rounds: u64) -> bool {
        while self.round < max_rounds && !self.all_done() {
            self.step();
        }
        self.all_done()
    }

    pub fn outcome(&mut self) -> RunOutcome {
        let mut events: Vec<ProtocolEvent> = self
            .nodes
            .iter_mut()
            .flat_map(|p| p.take_events())
            .collect();
        events.sort_by_key(|e| (e.round, e.label));
        let nodes: Vec<NodeOutcome> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, p)| NodeOutcome {
                snapshot: p.snapshot(),
                delivered_rumors: self.initial[i].union(&self.heard[i]).copied().collect(),
            })
            .collect();
        RunOutcome {
            terminated: self.all_done(),
            termination_round: self.termination_round,
            termination_phase: nodes.iter().map(|n| n.snapshot.phase).max().unwrap_or(0),
            nodes,
            metrics: self.metrics.clone(),
            events,
        }
    }

    pub fn take_trace(&mut self) -> Option<RunTrace> {
        self.trace.take()
    }
}

/// A finished run.
#[derive(Clone, Debug)]
pub struct Run {
    pub outcome: RunOutcome,
    pub trace: Option<RunTrace>,
}

/// Runs until every node is done; exceeding `max_rounds` is an error.
pub fn run<F>(
    topology: &Topology,
    channel: ChannelModel,
    factory: F,
    max_rounds: u64,
    record_trace: bool,
) -> Result<Run, EngineError>
where
    F: FnMut(NodeContext) -> Box<dyn NodeProtocol>,
{
    if max_rounds == 0 {
        return Err(EngineError::ZeroBudget);
    }
    let mut sim = Simulation::new(topology, channel, factory, record_trace)?;
    let terminated = sim.run_until(max_rounds);
    let outcome = sim.outcome();
    if !terminated {
        return Err(EngineError::MaxRoundsExceeded {
            rounds: max_rounds,
            outcome: Box::new(outcome),
        });
    }
    Ok(Run {
        outcome,
        trace: sim.take_trace(),
    })
}

/// Every node holds the rumor (by engine-observed delivery), every node is
/// done, and the source reports the broadcast acknowledged.
pub fn check_broadcast_complete(outcome: &RunOutcome, source: Label, rumor: Label) -> bool {
    let source_ack = outcome
        .node(source)
        .is_some_and(|n| n.snapshot.acknowledged);
    source_ack
        && outcome
            .nodes
            .iter()
            .all(|n| n.snapshot.done && n.delivered_rumors.contains(&rumor))
}

/// Every node holds every node's rumor and is done.
pub fn check_gossip_complete(outcome: &RunOutcome) -> bool {
    let all: BTreeSet<Label> = outcome.nodes.iter().map(|n| n.snapshot.label).collect();
    outcome
        .nodes
        .iter()
        .all(|n| n.snapshot.done && n.delivered_rumors.is_superset(&all))
}

/// Re-derives every logged reception from the logged transmissions.
pub fn replay_matches(topology: &Topology, channel: ChannelModel, trace: &RunTrace) -> bool {
    trace.rounds.iter().enumerate().all(|(i, rec)| {
        if rec.round != i as u64 {
            return false;
        }
        rec.receptions.iter().all(|(label, reception)| {
            let Some(v) = topology.index_of(*label) else {
                return false;
            };
            let incoming: Vec<Message> = topology
                .in_neighbors(v)
                .iter()
                .filter_map(|&u| {
                    rec.transmissions
                        .iter()
                        .find(|m| m.sender == topology.label(u))
                        .cloned()
                })
                .collect();
            crate::model::deliver(channel, &incoming, &RoundAction::Listen).as_ref()
                == Some(reception)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Body, TopologyKind};

    /// Transmits `body` at round 0 if the label is in `talkers`; done after round 0.
    struct OneShot {
        label: Label,
        talk: bool,
        rounds_seen: u64,
        heard: BTreeSet<Label>,
    }

    impl NodeProtocol for OneShot {
        fn act(&mut self, _round: u64) -> RoundAction {
            self.rounds_seen += 1;
            if self.talk {
                RoundAction::transmit(Body::Rumors {
                    rumors: BTreeSet::from([self.label]),
                })
            } else {
                RoundAction::Listen
            }
        }
        fn observe(&mut self, _round: u64, r: &Reception) {
            if let Some(m) = r.message() {
                self.heard.extend(m.body.rumors());
            }
        }
        fn is_done(&self) -> bool {
            self.rounds_seen >= 1
        }
        fn initial_rumors(&self) -> BTreeSet<Label> {
            if self.talk {
                BTreeSet::from([self.label])
            } else {
                BTreeSet::new()
            }
        }
        fn snapshot(&self) -> NodeSnapshot {
            NodeSnapshot {
                label: self.label,
                rumors: self.heard.clone(),
                done: self.is_done(),
                ..Default::default()
            }
        }
    }

    fn star() -> Topology {
        let l = Label;
        Topology::new(
            TopologyKind::Bidirectional,
            2,
            [l(1), l(2), l(3)],
            [(l(1), l(2)), (l(1), l(3))],
        )
        .unwrap()
    }

    fn one_shot(talkers: &'static [u64]) -> impl FnMut(NodeContext) -> Box<dyn NodeProtocol> {
        move |ctx| {
            Box::new(OneShot {
                label: ctx.label,
                talk: talkers.contains(&ctx.label.0),
                rounds_seen: 0,
                heard: BTreeSet::new(),
            })
        }
    }

    #[test]
    fn two_node_delivery() {
        let l = Label;
        let t =
            Topology::new(TopologyKind::Bidirectional, 2, [l(1), l(2)], [(l(1), l(2))]).unwrap();
        let run = run(&t, ChannelModel::NoCd, one_shot(&[1]), 5, true).unwrap();
        let trace = run.trace.unwrap();
        assert_eq!(trace.rounds.len(), 1);
        let (who, rec) = &trace.rounds[0].receptions[0];
        assert_eq!(*who, l(2));
        assert_eq!(rec.message().unwrap().sender, l(1));
        assert!(run
            .outcome
            .node(l(2))
            .unwrap()
            .delivered_rumors
            .contains(&l(1)));
    }

    #[test]
    fn star_collision_depends_on_channel() {
        let t = star();
        for (mode, expected) in [
            (ChannelModel::NoCd, Reception::Silence),
            (ChannelModel::Cd, Reception::Collision),
        ] {
            let run = run(&t, mode, one_shot(&[2, 3]), 5, true).unwrap();
            let trace = run.trace.unwrap();
            assert_eq!(trace.rounds[0].receptions, vec![(Label(1), expected)]);
            assert_eq!(run.outcome.metrics.collisions, 1);
            assert!(replay_matches(&t, mode, &trace));
        }
    }

    #[test]
    fn rejects_single_node_and_zero_budget() {
        let t = Topology::new(TopologyKind::Directed, 2, [Label(1)], []).unwrap();
        assert!(matches!(
            run(&t, ChannelModel::NoCd, one_shot(&[]), 5, false),
            Err(EngineError::TooFewNodes(1))
        ));
        assert!(matches!(
            run(&star(), ChannelModel::NoCd, one_shot(&[]), 0, false),
            Err(EngineError::ZeroBudget)
        ));
    }

    struct Never(Label);
    impl NodeProtocol for Never {
        fn act(&mut self, _: u64) -> RoundAction {
            RoundAction::Idle
        }
        fn observe(&mut self, _: u64, _: &Reception) {}
        fn is_done(&self) -> bool {
            false
        }
        fn initial_rumors(&self) -> BTreeSet<Label> {
            BTreeSet::new()
        }
        fn snapshot(&self) -> NodeSnapshot {
            NodeSnapshot {
                label: self.0,
                ..Default::default()
            }
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let err = run(
            &star(),
            ChannelModel::NoCd,
            |ctx| Box::new(Never(ctx.label)) as Box<dyn NodeProtocol>,
            7,
            false,
        )
        .unwrap_err();
        match err {
            EngineError::MaxRoundsExceeded { rounds, outcome } => {
                assert_eq!(rounds, 7);
                assert_eq!(outcome.metrics.rounds, 7);
                assert!(!outcome.terminated);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let run = run(&star(), ChannelModel::Cd, one_shot(&[2, 3]), 5, true).unwrap();
        let trace = run.trace.unwrap();
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        assert_eq!(
            RunTrace::read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap(),
            trace
        );
    }

    #[test]
    fn completion_checks() {
        let t = star();
        let out = run(&t, ChannelModel::NoCd, one_shot(&[1]), 5, false)
            .unwrap()
            .outcome;
        // Nobody claims acknowledgement in this toy protocol.
        assert!(!check_broadcast_complete(&out, Label(1), Label(1)));
        let mut acked = out.clone();
        acked.nodes[0].snapshot.acknowledged = true;
        assert!(check_broadcast_complete(&acked, Label(1), Label(1)));
        acked.nodes[2].delivered_rumors.clear();
        assert!(!check_broadcast_complete(&acked, Label(1), Label(1)));
        assert!(!check_gossip_complete(&out));
    }
}
