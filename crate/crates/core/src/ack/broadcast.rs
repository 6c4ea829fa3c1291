//! Acknowledged broadcast.
//!
//! Stages of phase `i`:
//! 0. round-robin broadcast of the rumor from the source;
//! 1. gossip of labels among informed small and medium nodes;
//! 2. gossip of first-pass label sets; a node is in `M` when the source's
//!    set reached it and lists it;
//! 3. nodes outside `M` jam every round while `M` replays its stage-2 slots;
//! 4. gossip of the failure flag over the stage-2 participants;
//! 5. the source floods NACK if it failed or heard a failure, otherwise
//!    silence tells `M` the broadcast is complete. The first round belongs
//!    to the source alone, so a big source still gets its NACK out.
//!
//! The rumor is identified by the source's label.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{PhaseCursor, PhasePlan};
use crate::engine::{
    EventKind, FailureCause, NodeContext, NodeProtocol, NodeSnapshot, ProtocolEvent,
};
use crate::model::{Body, Label, Reception, RoundAction};
use crate::vanilla::TwoPassGossip;

const RB: usize = 0;
const GOSSIP_LABELS: usize = 1;
const GOSSIP_SETS: usize = 2;
const REPLAY: usize = 3;
const GOSSIP_FAILURE: usize = 4;
const NACK: usize = 5;

#[derive(Debug, Default)]
struct PhaseState {
    informed: bool,
    participating: bool,
    gossip: TwoPassGossip,
    /// Stage-2 positions at which this node transmitted.
    replay_slots: BTreeSet<u64>,
    in_m: bool,
    failed: Option<FailureCause>,
    causes: BTreeSet<FailureCause>,
    heard_in_replay: bool,
    failure_known: bool,
    nack: bool,
}

pub struct AckBroadcastNode {
    label: Label,
    plan: Arc<PhasePlan>,
    is_source: bool,
    source: Option<Label>,
    cursor: Option<PhaseCursor>,
    stage: usize,
    st: PhaseState,
    done: bool,
    acknowledged: bool,
    events: Vec<ProtocolEvent>,
}

impl AckBroadcastNode {
    pub fn new(ctx: NodeContext, plan: Arc<PhasePlan>, is_source: bool) -> Self {
        let mut node = Self {
            label: ctx.label,
            cursor: None,
            is_source,
            source: is_source.then_some(ctx.label),
            stage: 0,
            st: PhaseState::default(),
            done: false,
            acknowledged: false,
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

    /// Each distinct cause is logged once per phase.
    fn fail(&mut self, round: u64, cause: FailureCause) {
        self.st.failed.get_or_insert(cause);
        if self.st.causes.insert(cause) {
            self.push(round, EventKind::Failed { cause });
        }
    }

    fn reset_phase(&mut self) {
        self.stage = 0;
        self.st = PhaseState {
            informed: self.is_source,
            gossip: TwoPassGossip::new(self.label),
            ..Default::default()
        };
    }

    fn small_or_medium(&self) -> bool {
        self.cursor
            .as_ref()
            .is_some_and(|c| self.label.0 <= c.layout.label_bound)
    }

    fn end_stage(&mut self, stage: usize, round: u64) {
        let n_est = self.cursor.as_ref().map_or(0, |c| c.layout.n_est);
        match stage {
            RB => self.st.participating = self.st.informed && self.small_or_medium(),
            GOSSIP_SETS => {
                self.st.in_m = self.st.participating
                    && self.source.is_some_and(|s| self.st.gossip.listed_by(s));
                if self.is_source {
                    let reach = self.st.gossip.first.len() as u64;
                    if !self.st.participating || reach > n_est || reach == 1 {
                        self.fail(round, FailureCause::SourceCheck);
                    }
                }
            }
            REPLAY if self.st.in_m && !self.st.heard_in_replay => {
                self.fail(round, FailureCause::ReplaySilent)
            }
            _ => {}
        }
    }

    fn begin_stage(&mut self, stage: usize, round: u64) {
        match stage {
            GOSSIP_SETS => self.st.gossip.start_second(),
            REPLAY if !self.st.in_m => self.push(round, EventKind::Jamming),
            GOSSIP_FAILURE => {
                self.st.failure_known =
                    self.st.failed.is_some() || (self.st.participating && !self.st.in_m);
            }
            NACK if self.is_source => {
                self.st.nack = self.st.failed.is_some() || self.st.failure_known;
                if self.st.nack {
                    self.push(round, EventKind::NackSent);
                }
            }
            _ => {}
        }
    }

    fn end_phase(&mut self, round: u64) {
        let st = &self.st;
        let clean = st.in_m && st.failed.is_none() && !st.failure_known && !st.nack;
        if clean {
            self.done = true;
            self.acknowledged = self.is_source;
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

    /// Runs stage and phase transitions up to `round`; returns the current
    /// `(stage, position)`, or `None` once done.
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
                self.begin_stage(self.stage, round);
            }
            if round < end {
                return Some(target);
            }
            self.end_stage(self.stage, round);
            self.end_phase(round);
        }
    }
}

impl NodeProtocol for AckBroadcastNode {
    fn act(&mut self, round: u64) -> RoundAction {
        let Some((stage, pos)) = self.sync(round) else {
            return RoundAction::Idle;
        };
        let layout = &self.cursor.as_ref().expect("synced").layout;
        let phase = layout.phase;
        let me = self.label;
        let st = &mut self.st;
        match stage {
            RB => match self.source {
                Some(rumor) if st.informed && layout.rb.is_slot(me, pos) => {
                    RoundAction::transmit(Body::Rumors {
                        rumors: BTreeSet::from([rumor]),
                    })
                }
                _ => RoundAction::Listen,
            },
            GOSSIP_LABELS | GOSSIP_SETS if st.participating => {
                if !layout.rg.is_slot(me, pos) {
                    RoundAction::Listen
                } else if stage == GOSSIP_LABELS {
                    RoundAction::transmit(st.gossip.first_body())
                } else {
                    st.replay_slots.insert(pos);
                    RoundAction::transmit(st.gossip.second_body())
                }
            }
            REPLAY if !st.in_m => RoundAction::transmit(Body::Failure { phase }),
            REPLAY if st.replay_slots.contains(&pos) => RoundAction::transmit(Body::Replay),
            REPLAY => RoundAction::Listen,
            GOSSIP_FAILURE if st.participating => {
                if st.failure_known && layout.rg.is_slot(me, pos) {
                    RoundAction::transmit(Body::Failure { phase })
                } else {
                    RoundAction::Listen
                }
            }
            NACK if pos == 0 && self.is_source => {
                if st.nack {
                    RoundAction::transmit(Body::Nack { phase })
                } else {
                    RoundAction::Idle
                }
            }
            NACK if me.0 <= layout.label_bound => {
                if st.nack && pos > 0 && layout.rb.is_slot(me, pos - 1) {
                    RoundAction::transmit(Body::Nack { phase })
                } else {
                    RoundAction::Listen
                }
            }
            _ => RoundAction::Idle,
        }
    }

    fn observe(&mut self, round: u64, reception: &Reception) {
        let Some(message) = reception.message() else {
            return;
        };
        let phase = self.phase();
        match (self.stage, &message.body) {
            (RB, Body::Rumors { rumors }) => {
                if let Some(&rumor) = rumors.iter().next() {
                    self.st.informed = true;
                    self.source.get_or_insert(rumor);
                }
            }
            (GOSSIP_LABELS, body) => {
                self.st.gossip.hear_first(message.sender, body);
            }
            (GOSSIP_SETS, body) => {
                self.st.gossip.hear_second(message.sender, body);
            }
            (REPLAY, body) if self.st.in_m => {
                self.st.heard_in_replay = true;
                if matches!(body, Body::Failure { phase: p } if *p == phase) {
                    self.fail(round, FailureCause::FailureHeard);
                }
            }
            (GOSSIP_FAILURE, Body::Failure { phase: p }) if *p == phase => {
                self.st.failure_known = true
            }
            (NACK, Body::Nack { phase: p }) if *p == phase && !self.st.nack => {
                self.st.nack = true;
                self.push(round, EventKind::NackHeard);
            }
            _ => {}
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn initial_rumors(&self) -> BTreeSet<Label> {
        if self.is_source {
            BTreeSet::from([self.label])
        } else {
            BTreeSet::new()
        }
    }

    fn snapshot(&self) -> NodeSnapshot {
        let holds = self.is_source || self.source.is_some();
        NodeSnapshot {
            label: self.label,
            rumors: self.source.filter(|_| holds).into_iter().collect(),
            done: self.done,
            acknowledged: self.acknowledged,
            phase: self.phase(),
            mutual_reach: Some(self.st.gossip.mutual_reach()),
            ..Default::default()
        }
    }

    fn take_events(&mut self) -> Vec<ProtocolEvent> {
        std::mem::take(&mut self.events)
    }
}
