//! Three-round neighborhood estimate.
//!
//! Round 1: the initiator `s` announces `(h, X, Y)`. Round 2: every neighbor
//! of `s` in `(Y - X) - {h}` transmits. Round 3: the same neighbors transmit
//! again together with `h`. A lone round-2 sender is therefore drowned in
//! round 3, while `h` is only heard alone when nobody else answered.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{deliver, Body, ChannelModel, Label, Message, Reception, RoundAction, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "estimate", content = "label", rename_all = "snake_case")]
pub enum Estimate {
    Zero,
    One(Label),
    TwoPlus,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EstimateError {
    #[error("jamming transmission observed")]
    JammerDetected,
    #[error("round 2 and round 3 both delivered a message")]
    ProtocolViolation,
    #[error("label {0} is not in the topology")]
    UnknownLabel(Label),
    #[error("helper {helper} is not a neighbor of {node}")]
    NotNeighbor { node: Label, helper: Label },
}

/// Inclusive label range.
pub type LabelRange = (u64, u64);

/// Whether `label` answers an estimate announced with these arguments.
pub fn responds(
    label: Label,
    helper: Label,
    excluded: &BTreeSet<Label>,
    range: LabelRange,
) -> bool {
    label != helper && (range.0..=range.1).contains(&label.0) && !excluded.contains(&label)
}

/// Decodes what the initiator heard in rounds 2 and 3.
pub fn decode(r2: &Reception, r3: &Reception, helper: Label) -> Result<Estimate, EstimateError> {
    let jam = |r: &Reception| {
        r.message()
            .is_some_and(|m| matches!(m.body, Body::Failure { .. }))
    };
    if jam(r2) || jam(r3) {
        return Err(EstimateError::JammerDetected);
    }
    match (r2.message(), r3.message()) {
        (Some(m), None) => Ok(Estimate::One(m.sender)),
        (None, Some(m)) if m.sender == helper => Ok(Estimate::Zero),
        (None, None) => Ok(Estimate::TwoPlus),
        _ => Err(EstimateError::ProtocolViolation),
    }
}

/// Runs one estimate initiated by `s` on a bidirectional topology and
/// returns what `s` decodes.
pub fn estimate(
    topology: &Topology,
    channel: ChannelModel,
    s: Label,
    h: Label,
    x: &BTreeSet<Label>,
    y: LabelRange,
) -> Result<Estimate, EstimateError> {
    let si = topology.index_of(s).ok_or(EstimateError::UnknownLabel(s))?;
    topology.index_of(h).ok_or(EstimateError::UnknownLabel(h))?;
    let neighbors: Vec<Label> = topology
        .out_neighbors(si)
        .iter()
        .map(|&v| topology.label(v))
        .collect();
    if !neighbors.contains(&h) {
        return Err(EstimateError::NotNeighbor { node: s, helper: h });
    }
    let id = |sender| Message {
        sender,
        body: Body::Id,
    };
    let targets: Vec<Message> = neighbors
        .iter()
        .copied()
        .filter(|&u| responds(u, h, x, y))
        .map(id)
        .collect();
    let mut third = targets.clone();
    third.push(id(h));
    let listen = RoundAction::Listen;
    let r2 = deliver(channel, &targets, &listen).expect("listener");
    let r3 = deliver(channel, &third, &listen).expect("listener");
    decode(&r2, &r3, h)
}
