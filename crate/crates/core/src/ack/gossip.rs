//! Acknowledged gossip, with and without collision detection.
//!
//! First segment of phase `i`:
//! 0. gossip of labels (builds `L`, the labels that reached the node);
//! 1. gossip of first-pass sets (builds `M`, the mutual-reach list);
//! 2. failed nodes jam every round while the rest transmit their label on a
//!    set-family schedule: `SSF(N + 1, L)` with collision detection,
//!    `SCF(N, L)` without;
//! 3. gossip of the failure flag.
//!
//! The second segment gossips the rumors if nobody reported a failure and is
//! idle otherwise.
//!
//! A node starts stage 2 failed when it is big, when `L` is not contained in
//! `M`, when `|M| > N`, or when `M` is the node alone. After stage 2 it fails
//! on hearing a failure message, on a (detected or inferred) collision in a
//! round where at most one known in-neighbor was scheduled, and on hearing a
//! label outside `M`. Known in-neighbors are the labels heard directly during
//! stages 0 and 1.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{AckProtocol, PhaseCursor, PhasePlan};
use crate::engine::{
    EventKind, FailureCause, NodeContext, NodeProtocol, NodeSnapshot, ProtocolEvent,
};
use crate::model::{Body, Label, Reception, RoundAction};
use crate::vanilla::TwoPassGossip;

const GOSSIP_LABELS: usize = 0;
const GOSSIP_SETS: usize = 1;
const SCHEDULE: usize = 2;
const GOSSIP_FAILURE: usize = 3;
const SECOND_SEGMENT: usize = 4;

#[derive(Debug, Default)]
struct PhaseState {
    participating: bool,
    gossip: TwoPassGossip,
    m: BTreeSet<Label>,
    known: BTreeSet<Label>,
    failed: bool,
    causes: BTreeSet<FailureCause>,
    failure_known: bool,
    clean: bool,
}

pub struct AckGossipNode {
    label: Label,
    plan: Arc<PhasePlan>,
    detects_collisions: bool,
    cursor: Option<PhaseCursor>,
    stage: usize,
    st: PhaseState,
    rumors: BTreeSet<Label>,
    done: bool,
    events: Vec<ProtocolEvent>,
}

impl AckGossipNode {
    pub fn new(ctx: NodeContext, plan: Arc<PhasePlan>) -> Self {
        let mut node = Self {
            label: ctx.label,
            detects_collisions: plan.protocol == AckProtocol::GossipCd,
            cursor: None,
            stage: 0,
            st: PhaseState::default(),
            rumors: BTreeSet::from([ctx.label]),
            done: false,
            events: Vec::new(),
            plan,
        };
        match PhaseCursor::first(&node.plan) {
            Ok(c) => node.cursor = Some(c),
            Err(e) => node.abandon(0, e.to_string()),
        }
        node.reset_phase();
        node
    }

    fn phase(&self) -> u32 {
        self.cursor.as_ref().map_or(0, |c| c.phase)
    }

    fn push(&mut self, round: u64, kind: EventKind) {
        self.events.push(ProtocolEvent {
            round,
            label: self.label,
            phase: self.phase(),
            kind,
        });
    }

    fn abandon(&mut self, round: u64, reason: String) {
        self.push(round, EventKind::Abandoned { reason });
        self.done = true;
    }

    /// Marks the node failed; each distinct cause is logged once per phase.
    fn fail(&mut self, round: u64, cause: FailureCause) {
        self.st.failed = true;
        if self.st.causes.insert(cause) {
            self.push(round, EventKind::Failed { cause });
        }
    }

    fn reset_phase(&mut self) {
        self.stage = 0;
        let participating = self
            .cursor
            .as_ref()
            .is_some_and(|c| self.label.0 <= c.layout.label_bound);
        self.st = PhaseState {
            participating,
            gossip: TwoPassGossip::new(self.label),
            ..Default::default()
        };
    }

    fn end_stage(&mut self, stage: usize, round: u64) {
        match stage {
            GOSSIP_SETS => {
                if !self.st.participating {
                    self.fail(round, FailureCause::BigNode);
                    return;
                }
                let n_est = self.cursor.as_ref().map_or(0, |c| c.layout.n_est);
                self.st.m = self.st.gossip.mutual_reach();
                self.st.known = self.st.gossip.direct.clone();
                if !self.st.gossip.first.is_subset(&self.st.m) {
                    self.fail(round, FailureCause::NotMutual);
                }
                if self.st.m.len() as u64 > n_est {
                    self.fail(round, FailureCause::Oversize);
                }
                if self.st.m.len() == 1 {
                    self.fail(round, FailureCause::Singleton);
                }
            }
            GOSSIP_FAILURE => self.st.clean = self.st.participating && !self.st.failure_known,
            _ => {}
        }
    }

    fn begin_stage(&mut self, stage: usize) {
        match stage {
            GOSSIP_SETS => self.st.gossip.start_second(),
            GOSSIP_FAILURE => self.st.failure_known = self.st.failed,
            _ => {}
        }
    }

    fn end_phase(&mut self, round: u64) {
        if self.st.clean {
            self.done = true;
            self.push(round, EventKind::Done);
            return;
        }
        let next = self.phase() + 1;
        self.push(round, EventKind::PhaseAdvanced { next });
        let advanced = self.cursor.as_mut().map(|c| c.advance(&self.plan));
        if let Some(Err(e)) = advanced {
            self.abandon(round, e.to_string());
        }
        self.reset_phase();
    }

    fn sync(&mut self, round: u64) -> Option<(usize, u64)> {
        loop {
            if self.done {
                return None;
            }
            let cursor = self.cursor.as_ref()?;
            let (end, stages) = (cursor.end(), cursor.layout.stages.len());
            let target = if round >= end {
                (stages - 1, 0)
            } else {
                cursor.locate(round)
            };
            while self.stage < target.0 {
                self.end_stage(self.stage, round);
                self.stage += 1;
                self.begin_stage(self.stage);
            }
            if round < end {
                return Some(target);
            }
            self.end_stage(self.stage, round);
            self.end_phase(round);
        }
    }

    /// Known in-neighbors scheduled at stage-2 position `pos`.
    fn known_scheduled(&self, pos: u64) -> usize {
        let Some(f) = self.cursor.as_ref().and_then(|c| c.layout.stage3.clone()) else {
            return 0;
        };
        let set = &f.sets[pos as usize];
        self.st
            .known
            .iter()
            .filter(|u| set.binary_search(&u.0).is_ok())
            .count()
    }
}

impl NodeProtocol for AckGossipNode {
    fn act(&mut self, round: u64) -> RoundAction {
        let Some((stage, pos)) = self.sync(round) else {
            return RoundAction::Idle;
        };
        let layout = &self.cursor.as_ref().expect("synced").layout;
        let phase = layout.phase;
        let me = self.label;
        let st = &self.st;
        let slot = layout.rg.is_slot(me, pos);
        match stage {
            SCHEDULE if st.failed => RoundAction::transmit(Body::Failure { phase }),
            _ if !st.participating => RoundAction::Idle,
            GOSSIP_LABELS if slot => RoundAction::transmit(st.gossip.first_body()),
            GOSSIP_SETS if slot => RoundAction::transmit(st.gossip.second_body()),
            SCHEDULE => {
                let f = layout
                    .stage3
                    .as_ref()
                    .expect("gossip layouts carry a stage-3 family");
                if f.contains(pos as usize, me.0) {
                    RoundAction::transmit(Body::Id)
                } else {
                    RoundAction::Listen
                }
            }
            GOSSIP_FAILURE if slot && st.failure_known => {
                RoundAction::transmit(Body::Failure { phase })
            }
            SECOND_SEGMENT if !st.clean => RoundAction::Idle,
            SECOND_SEGMENT if slot => RoundAction::transmit(Body::Rumors {
                rumors: self.rumors.clone(),
            }),
            _ => RoundAction::Listen,
        }
    }

    fn observe(&mut self, round: u64, reception: &Reception) {
        let phase = self.phase();
        match (self.stage, reception) {
            (GOSSIP_LABELS, Reception::Received { message }) => {
                self.st.gossip.hear_first(message.sender, &message.body);
            }
            (GOSSIP_SETS, Reception::Received { message }) => {
                self.st.gossip.hear_second(message.sender, &message.body);
            }
            (SCHEDULE, Reception::Received { message }) => {
                if matches!(message.body, Body::Failure { phase: p } if p == phase) {
                    self.fail(round, FailureCause::FailureHeard);
                } else if !self.st.m.contains(&message.sender) {
                    self.fail(round, FailureCause::ForeignLabel);
                }
            }
            (SCHEDULE, Reception::Collision) => {
                let pos = self.cursor.as_ref().map(|c| c.locate(round).1).unwrap_or(0);
                if self.known_scheduled(pos) <= 1 {
                    self.fail(round, FailureCause::Collision);
                }
            }
            (SCHEDULE, Reception::Silence) if !self.detects_collisions => {
                let pos = self.cursor.as_ref().map(|c| c.locate(round).1).unwrap_or(0);
                if self.known_scheduled(pos) == 1 {
                    self.fail(round, FailureCause::Collision);
                }
            }
            (GOSSIP_FAILURE, Reception::Received { message }) => {
                if matches!(message.body, Body::Failure { phase: p } if p == phase) {
                    self.st.failure_known = true;
                }
            }
            (SECOND_SEGMENT, Reception::Received { message }) => {
                self.rumors.extend(message.body.rumors())
            }
            _ => {}
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn initial_rumors(&self) -> BTreeSet<Label> {
        BTreeSet::from([self.label])
    }

    fn snapshot(&self) -> NodeSnapshot {
        NodeSnapshot {
            label: self.label,
            rumors: self.rumors.clone(),
            done: self.done,
            phase: self.phase(),
            mutual_reach: Some(self.st.m.clone()),
            ..Default::default()
        }
    }

    fn take_events(&mut self) -> Vec<ProtocolEvent> {
        std::mem::take(&mut self.events)
    }
}
