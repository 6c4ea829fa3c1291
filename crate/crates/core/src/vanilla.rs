//! Known-size broadcast and gossip schedules.
//!
//! A schedule is a pure function of `(N, L)`: every node can compute where it
//! ends from the global round counter, whether or not it hears anything. The
//! default is round robin, `N` sweeps of `L` rounds with label `l` owning
//! offset `l - 1` of every sweep. A family-driven variant replaces each sweep
//! with one pass over a selective family.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{NodeContext, NodeProtocol, NodeSnapshot};
use crate::families::{FamilyKind, SetFamily};
use crate::model::{Body, Label, Reception, RoundAction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VanillaKind {
    Broadcast,
    Gossip,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransmitRule {
    RoundRobin,
    /// Set `j mod |F|` of the family names the transmitters of round `j`.
    Family(Arc<SetFamily>),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum VanillaError {
    #[error("family {kind:?} over [1..{universe}] cannot drive a schedule with N={n}, L={l}")]
    FamilyMismatch {
        kind: FamilyKind,
        universe: u64,
        n: u64,
        l: u64,
    },
    #[error("N and L must be positive")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VanillaSchedule {
    pub kind: VanillaKind,
    pub n: u64,
    pub l: u64,
    pub rule: TransmitRule,
}

impl VanillaSchedule {
    pub fn sweep_len(&self) -> u64 {
        match &self.rule {
            TransmitRule::RoundRobin => self.l,
            TransmitRule::Family(f) => f.len() as u64,
        }
    }

    pub fn rounds(&self) -> u64 {
        self.n.saturating_mul(self.sweep_len())
    }

    /// Whether `label` may transmit at offset `pos` of the schedule. Labels
    /// above `L` never have a slot.
    pub fn is_slot(&self, label: Label, pos: u64) -> bool {
        if label.0 == 0 || label.0 > self.l || pos >= self.rounds() {
            return false;
        }
        match &self.rule {
            TransmitRule::RoundRobin => pos % self.l + 1 == label.0,
            TransmitRule::Family(f) => f.contains((pos % f.len() as u64) as usize, label.0),
        }
    }

    /// Round-robin slot owner at `pos`.
    pub fn slot_owner(&self, pos: u64) -> Option<Label> {
        match self.rule {
            TransmitRule::RoundRobin if pos < self.rounds() => Some(Label(pos % self.l + 1)),
            _ => None,
        }
    }
}

pub fn round_robin_gossip(n: u64, l: u64) -> VanillaSchedule {
    VanillaSchedule {
        kind: VanillaKind::Gossip,
        n,
        l,
        rule: TransmitRule::RoundRobin,
    }
}

pub fn round_robin_broadcast(n: u64, l: u64) -> VanillaSchedule {
    VanillaSchedule {
        kind: VanillaKind::Broadcast,
        n,
        l,
        rule: TransmitRule::RoundRobin,
    }
}

/// Gossip driven by a strongly selective family with `k >= N + 1`: a listener
/// together with at most `N` in-neighbors is a set the family isolates every
/// member of, so each sweep carries every in-neighbor's knowledge one hop.
pub fn ssf_gossip(n: u64, l: u64, family: Arc<SetFamily>) -> Result<VanillaSchedule, VanillaError> {
    let ok = matches!(family.kind, FamilyKind::StronglySelective { k } if k > n || k >= family.universe_max);
    family_schedule(VanillaKind::Gossip, n, l, family, ok)
}

/// Broadcast driven by a selective family with `k >= N`: every uninformed
/// node with informed in-neighbors hears exactly one of them each sweep.
pub fn selective_broadcast(
    n: u64,
    l: u64,
    family: Arc<SetFamily>,
) -> Result<VanillaSchedule, VanillaError> {
    let ok = matches!(family.kind, FamilyKind::Selective { k } | FamilyKind::StronglySelective { k }
        if k >= n || k >= family.universe_max);
    family_schedule(VanillaKind::Broadcast, n, l, family, ok)
}

fn family_schedule(
    kind: VanillaKind,
    n: u64,
    l: u64,
    family: Arc<SetFamily>,
    ok: bool,
) -> Result<VanillaSchedule, VanillaError> {
    if n == 0 || l == 0 {
        return Err(VanillaError::Empty);
    }
    if !ok || family.universe_max < l || family.is_empty() {
        return Err(VanillaError::FamilyMismatch {
            kind: family.kind,
            universe: family.universe_max,
            n,
            l,
        });
    }
    Ok(VanillaSchedule {
        kind,
        n,
        l,
        rule: TransmitRule::Family(family),
    })
}

/// Round count of the installed gossip schedule.
pub fn nrg(n: u64, l: u64) -> u64 {
    round_robin_gossip(n, l).rounds()
}

/// Round count of the installed broadcast schedule.
pub fn nb(n: u64, l: u64) -> u64 {
    round_robin_broadcast(n, l).rounds()
}

/// Knowledge gathered by two back-to-back gossip executions: labels first,
/// then each origin's first-execution label set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TwoPassGossip {
    own: Label,
    /// Labels heard directly, in either pass.
    pub direct: BTreeSet<Label>,
    /// Labels that reached this node in the first pass (self included).
    pub first: BTreeSet<Label>,
    /// Origin -> first-pass set, as gathered in the second pass.
    pub second: BTreeMap<Label, BTreeSet<Label>>,
}

impl TwoPassGossip {
    pub fn new(own: Label) -> Self {
        Self {
            own,
            direct: BTreeSet::new(),
            first: BTreeSet::from([own]),
            second: BTreeMap::new(),
        }
    }

    pub fn first_body(&self) -> Body {
        Body::Labels {
            labels: self.first.clone(),
        }
    }

    pub fn second_body(&self) -> Body {
        Body::LabelSets {
            sets: self.second.clone(),
        }
    }

    /// Absorbs a first-pass reception; returns false for unexpected bodies.
    pub fn hear_first(&mut self, sender: Label, body: &Body) -> bool {
        let Body::Labels { labels } = body else {
            return false;
        };
        self.direct.insert(sender);
        self.first.extend(labels.iter().copied());
        true
    }

    /// Seeds the second pass with this node's own first-pass set.
    pub fn start_second(&mut self) {
        self.second.insert(self.own, self.first.clone());
    }

    pub fn hear_second(&mut self, sender: Label, body: &Body) -> bool {
        let Body::LabelSets { sets } = body else {
            return false;
        };
        self.direct.insert(sender);
        for (origin, set) in sets {
            self.second
                .entry(*origin)
                .or_default()
                .extend(set.iter().copied());
        }
        true
    }

    /// Nodes that reached this one in the first pass and whose own first-pass
    /// set came back holding this node's label.
    pub fn mutual_reach(&self) -> BTreeSet<Label> {
        let mut m: BTreeSet<Label> = self
            .first
            .iter()
            .copied()
            .filter(|u| self.second.get(u).is_some_and(|s| s.contains(&self.own)))
            .collect();
        m.insert(self.own);
        m
    }

    /// Whether `origin`'s first-pass set reached this node and contains it.
    pub fn listed_by(&self, origin: Label) -> bool {
        self.second
            .get(&origin)
            .is_some_and(|s| s.contains(&self.own))
    }
}

/// One execution of a vanilla schedule as a standalone protocol.
pub struct VanillaNode {
    label: Label,
    schedule: Arc<VanillaSchedule>,
    participating: bool,
    initial: BTreeSet<Label>,
    rumors: BTreeSet<Label>,
    done: bool,
}

impl VanillaNode {
    /// Gossip nodes start with their own label as rumor; broadcast nodes start
    /// with `rumor` when they are initiators.
    pub fn new(
        ctx: NodeContext,
        schedule: Arc<VanillaSchedule>,
        participating: bool,
        initiator_rumor: Option<Label>,
    ) -> Self {
        let initial: BTreeSet<Label> = match schedule.kind {
            VanillaKind::Gossip => BTreeSet::from([ctx.label]),
            VanillaKind::Broadcast => initiator_rumor.into_iter().collect(),
        };
        Self {
            label: ctx.label,
            schedule,
            participating,
            rumors: initial.clone(),
            initial,
            done: false,
        }
    }
}

impl NodeProtocol for VanillaNode {
    fn act(&mut self, round: u64) -> RoundAction {
        if round + 1 >= self.schedule.rounds() {
            self.done = true;
        }
        if !self.participating {
            return RoundAction::Idle;
        }
        let holds = !self.rumors.is_empty();
        if self.schedule.is_slot(self.label, round) && holds {
            RoundAction::transmit(Body::Rumors {
                rumors: self.rumors.clone(),
            })
        } else {
            RoundAction::Listen
        }
    }

    fn observe(&mut self, _round: u64, reception: &Reception) {
        if let Some(m) = reception.message() {
            self.rumors.extend(m.body.rumors());
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn initial_rumors(&self) -> BTreeSet<Label> {
        self.initial.clone()
    }

    fn snapshot(&self) -> NodeSnapshot {
        NodeSnapshot {
            label: self.label,
            rumors: self.rumors.clone(),
            done: self.done,
            ..Default::default()
        }
    }
}

/// Two gossip executions over the same schedule; reports the mutual-reach
/// set in its snapshot.
pub struct MutualReachProbe {
    schedule: Arc<VanillaSchedule>,
    participating: bool,
    gossip: TwoPassGossip,
    done: bool,
}

impl MutualReachProbe {
    pub fn new(ctx: NodeContext, schedule: Arc<VanillaSchedule>, participating: bool) -> Self {
        Self {
            schedule,
            participating,
            gossip: TwoPassGossip::new(ctx.label),
            done: false,
        }
    }

    pub fn total_rounds(schedule: &VanillaSchedule) -> u64 {
        2 * schedule.rounds()
    }
}

impl NodeProtocol for MutualReachProbe {
    fn act(&mut self, round: u64) -> RoundAction {
        let len = self.schedule.rounds();
        if round + 1 >= 2 * len {
            self.done = true;
        }
        if round == len {
            self.gossip.start_second();
        }
        if !self.participating {
            return RoundAction::Idle;
        }
        let pos = round % len;
        if !self.schedule.is_slot(self.gossip.own, pos) {
            return RoundAction::Listen;
        }
        RoundAction::transmit(if round < len {
            self.gossip.first_body()
        } else {
            self.gossip.second_body()
        })
    }

    fn observe(&mut self, round: u64, reception: &Reception) {
        if let Some(m) = reception.message() {
            if round < self.schedule.rounds() {
                self.gossip.hear_first(m.sender, &m.body);
            } else {
                self.gossip.hear_second(m.sender, &m.body);
            }
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn initial_rumors(&self) -> BTreeSet<Label> {
        BTreeSet::new()
    }

    fn snapshot(&self) -> NodeSnapshot {
        NodeSnapshot {
            label: self.gossip.own,
            done: self.done,
            mutual_reach: self.participating.then(|| self.gossip.mutual_reach()),
            ..Default::default()
        }
    }
}
