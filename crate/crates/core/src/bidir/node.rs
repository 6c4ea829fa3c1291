use std::collections::BTreeSet;
use std::sync::Arc;

use super::estimate::{decode, responds, EstimateError};
use super::select::{BinarySelect, SelectOutcome};
use super::{BidirLayout, BidirPlan, Segment};
use crate::engine::{EventKind, NodeContext, NodeProtocol, NodeSnapshot, ProtocolEvent};
use crate::model::{Body, Label, Reception, RoundAction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Target,
    Helper,
    Jammer,
}

#[derive(Debug)]
struct Holder {
    discovered: Vec<Label>,
    select: BinarySelect,
    /// Round of the announcement of the estimate in flight.
    announced: Option<u64>,
    r2: Option<Reception>,
}

#[derive(Debug, Default)]
struct PhaseState {
    heard_source: bool,
    silenced: bool,
    pending_echo: Option<Label>,
    reply: Option<(u64, Role)>,
    holder: Option<Holder>,
    outgoing: Option<Body>,
    parent: Option<Label>,
    helper: Option<Label>,
    index: Option<usize>,
    explored: bool,
    ack: bool,
}

pub struct BidirNode {
    label: Label,
    plan: Arc<BidirPlan>,
    is_source: bool,
    rumor: Option<Label>,
    /// Source only; survives phase changes.
    source_helper: Option<Label>,
    phase: u32,
    start: u64,
    layout: Option<Arc<BidirLayout>>,
    st: PhaseState,
    done: bool,
    acknowledged: bool,
    events: Vec<ProtocolEvent>,
}

impl BidirNode {
    pub fn new(ctx: NodeContext, plan: Arc<BidirPlan>, is_source: bool) -> Self {
        let phase = plan.params.min_phase;
        let mut node = Self {
            label: ctx.label,
            is_source,
            rumor: is_source.then_some(ctx.label),
            source_helper: None,
            phase,
            start: 0,
            layout: None,
            st: PhaseState::default(),
            done: false,
            acknowledged: false,
            events: Vec::new(),
            plan,
        };
        match node.plan.layout(phase) {
            Ok(l) => node.layout = Some(l),
            Err(e) => node.abandon(0, e.to_string()),
        }
        node
    }

    fn push(&mut self, round: u64, kind: EventKind) {
        self.events.push(ProtocolEvent {
            round,
            label: self.label,
            phase: self.phase,
            kind,
        });
    }

    fn abandon(&mut self, round: u64, reason: String) {
        self.push(round, EventKind::Abandoned { reason });
        self.done = true;
    }

    fn finish(&mut self, round: u64) {
        self.done = true;
        self.acknowledged = self.is_source;
        self.push(round, EventKind::Done);
    }

    fn end_phase(&mut self, round: u64) {
        if self.st.ack {
            self.finish(round);
            return;
        }
        self.push(
            round,
            EventKind::PhaseAdvanced {
                next: self.phase + 1,
            },
        );
        let len = self.layout.as_ref().map_or(0, |l| l.len());
        match self.plan.layout(self.phase + 1) {
            Ok(l) => {
                self.phase += 1;
                self.start += len;
                self.layout = Some(l);
                self.st = PhaseState::default();
            }
            Err(e) => self.abandon(round, e.to_string()),
        }
    }

    fn sync(&mut self, round: u64) -> Option<(Arc<BidirLayout>, Segment)> {
        loop {
            if self.done {
                return None;
            }
            let layout = Arc::clone(self.layout.as_ref()?);
            if let Some(seg) = layout.segment(round - self.start) {
                return Some((layout, seg));
            }
            self.end_phase(round);
        }
    }

    fn small(&self, layout: &BidirLayout) -> bool {
        self.label.0 <= layout.label_bound
    }

    fn rumor(&self) -> Label {
        self.rumor.unwrap_or(self.label)
    }

    fn act_discover(&mut self, layout: &BidirLayout, pos: u64) -> RoundAction {
        if self.is_source {
            if self.source_helper.is_some() && self.st.pending_echo.is_none() {
                return RoundAction::Idle;
            }
            return match pos {
                0 => RoundAction::transmit(Body::Rumors {
                    rumors: BTreeSet::from([self.label]),
                }),
                p if p % 2 == 0 => match self.st.pending_echo.take() {
                    Some(helper) => RoundAction::transmit(Body::Echo { helper }),
                    None => RoundAction::Listen,
                },
                _ => RoundAction::Listen,
            };
        }
        let j = (pos.wrapping_sub(1) / 2) as usize;
        let eligible = self.st.heard_source && !self.st.silenced && self.small(layout);
        if pos % 2 == 1 && eligible && layout.sf.contains(j, self.label.0) {
            RoundAction::transmit(Body::Id)
        } else {
            RoundAction::Listen
        }
    }

    fn act_traverse(&mut self, layout: &BidirLayout, round: u64, q: u64) -> RoundAction {
        if q == 0 && self.is_source {
            if let Some(h) = self.source_helper {
                self.st.index = Some(0);
                self.st.helper = Some(h);
                let discovered = vec![self.label, h];
                return RoundAction::transmit(Body::Token {
                    to: h,
                    discovered,
                    rumor: self.label,
                });
            }
        }
        if let Some(body) = self.st.outgoing.take() {
            return RoundAction::transmit(body);
        }
        let rumor = self.rumor();
        if let (Some(holder), Some(helper)) = (self.st.holder.as_mut(), self.st.helper) {
            if holder.announced.is_none() {
                holder.announced = Some(round);
                holder.r2 = None;
                return RoundAction::transmit(Body::Announce {
                    helper,
                    excluded: holder.discovered.iter().copied().collect(),
                    range: holder.select.range(),
                    rumor,
                });
            }
            return RoundAction::Listen;
        }
        if let Some((at, role)) = self.st.reply {
            let phase = layout.phase;
            let body = if role == Role::Jammer {
                Body::Failure { phase }
            } else {
                Body::Id
            };
            match round - at {
                1 if role != Role::Helper => return RoundAction::transmit(body),
                2 => {
                    self.st.reply = None;
                    return RoundAction::transmit(body);
                }
                1 => return RoundAction::Listen,
                _ => self.st.reply = None,
            }
        }
        RoundAction::Listen
    }

    fn act_ack(&mut self, round: u64, k: u64) -> RoundAction {
        if k == 0 && self.is_source && self.st.explored {
            self.st.ack = true;
            self.push(round, EventKind::AckStarted);
        }
        if !self.st.ack {
            return RoundAction::Listen;
        }
        // A node stops once its own slot has passed.
        match self.st.index {
            Some(i) if i == k as usize => RoundAction::transmit(Body::Ack {
                rumor: self.rumor(),
            }),
            Some(i) if i > k as usize => RoundAction::Idle,
            _ => {
                self.finish(round);
                RoundAction::Idle
            }
        }
    }

    fn hear_traverse(&mut self, layout: &BidirLayout, round: u64, reception: &Reception) {
        if let Some(holder) = self.st.holder.as_mut() {
            let Some(at) = holder.announced else { return };
            if round == at + 1 {
                holder.r2 = Some(reception.clone());
                return;
            }
            if round != at + 2 {
                return;
            }
            let helper = self.st.helper.expect("holders know their helper");
            let r2 = holder.r2.take().unwrap_or(Reception::Silence);
            let result = decode(&r2, reception, helper).and_then(|e| holder.select.feed(e));
            holder.announced = None;
            match result {
                Ok(None) => {}
                Ok(Some(out)) => self.finish_select(layout, round, out),
                Err(e) => {
                    self.st.holder = None;
                    let kind = match e {
                        EstimateError::ProtocolViolation => EventKind::ProtocolViolation,
                        _ => EventKind::JammerDetected,
                    };
                    self.push(round, kind);
                }
            }
            return;
        }
        let Some(message) = reception.message() else {
            return;
        };
        self.rumor = self.rumor.or(message.body.rumors().into_iter().next());
        match &message.body {
            Body::Announce {
                helper,
                excluded,
                range,
                ..
            } => {
                let role = if !self.small(layout) {
                    Some(Role::Jammer)
                } else if *helper == self.label {
                    Some(Role::Helper)
                } else {
                    responds(self.label, *helper, excluded, *range).then_some(Role::Target)
                };
                self.st.reply = role.map(|r| (round, r));
            }
            Body::Token { to, discovered, .. } if *to == self.label => {
                if self.st.index.is_none() {
                    self.st.index = discovered.iter().position(|&l| l == self.label);
                    self.st.parent = Some(message.sender);
                    self.st.helper = Some(message.sender);
                    self.push(round, EventKind::TokenReceived);
                }
                let max = discovered.iter().map(|l| l.0).max().unwrap_or(self.label.0);
                self.st.holder = Some(Holder {
                    discovered: discovered.clone(),
                    select: BinarySelect::new(layout.label_bound, max),
                    announced: None,
                    r2: None,
                });
            }
            _ => {}
        }
    }

    fn finish_select(&mut self, layout: &BidirLayout, round: u64, out: SelectOutcome) {
        let Some(holder) = self.st.holder.take() else {
            return;
        };
        let mut discovered = holder.discovered;
        let rumor = self.rumor();
        match out {
            SelectOutcome::Found(t) => {
                if discovered.len() as u64 + 1 > layout.n_est {
                    self.push(round, EventKind::Overflow);
                    return;
                }
                discovered.push(t);
                self.st.outgoing = Some(Body::Token {
                    to: t,
                    discovered,
                    rumor,
                });
            }
            SelectOutcome::NoneLeft => match self.st.parent {
                Some(p) if !self.is_source => {
                    self.st.outgoing = Some(Body::Token {
                        to: p,
                        discovered,
                        rumor,
                    })
                }
                _ => self.st.explored = self.is_source,
            },
        }
    }
}

impl NodeProtocol for BidirNode {
    fn act(&mut self, round: u64) -> RoundAction {
        let Some((layout, seg)) = self.sync(round) else {
            return RoundAction::Idle;
        };
        match seg {
            Segment::Discover(pos) => self.act_discover(&layout, pos),
            Segment::Traverse(q) => self.act_traverse(&layout, round, q),
            Segment::Ack(k) => self.act_ack(round, k),
        }
    }

    fn observe(&mut self, round: u64, reception: &Reception) {
        let Some(layout) = self.layout.clone() else {
            return;
        };
        let Some(seg) = layout.segment(round - self.start) else {
            return;
        };
        match seg {
            Segment::Discover(pos) => {
                let Some(message) = reception.message() else {
                    return;
                };
                if self.is_source {
                    if pos % 2 == 1
                        && self.source_helper.is_none()
                        && matches!(message.body, Body::Id)
                    {
                        self.source_helper = Some(message.sender);
                        self.st.pending_echo = Some(message.sender);
                        self.push(
                            round,
                            EventKind::HelperFound {
                                helper: message.sender,
                            },
                        );
                    }
                    return;
                }
                match &message.body {
                    Body::Rumors { rumors } if pos == 0 => {
                        self.st.heard_source = true;
                        self.rumor = self.rumor.or(rumors.iter().next().copied());
                    }
                    Body::Echo { .. } => self.st.silenced = true,
                    _ => {}
                }
            }
            Segment::Traverse(_) => self.hear_traverse(&layout, round, reception),
            Segment::Ack(_) => {
                if let Some(Body::Ack { rumor }) = reception.message().map(|m| &m.body) {
                    self.rumor = self.rumor.or(Some(*rumor));
                    self.st.ack = true;
                }
            }
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
        NodeSnapshot {
            label: self.label,
            rumors: self.rumor.into_iter().collect(),
            done: self.done,
            acknowledged: self.acknowledged,
            phase: self.phase,
            parent: self.st.parent,
            discovery_index: self.st.index,
            ..Default::default()
        }
    }

    fn take_events(&mut self) -> Vec<ProtocolEvent> {
        std::mem::take(&mut self.events)
    }
}
