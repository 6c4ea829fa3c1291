//! Trace and outcome checks for the token DFS.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::{RunOutcome, RunTrace};
use crate::model::{Body, Label, Topology};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DfsViolation {
    #[error("{0} has no discovery index")]
    Undiscovered(Label),
    #[error("discovery indices are not 0..{0}")]
    BadIndices(usize),
    #[error("source {0} is not the root")]
    BadRoot(Label),
    #[error("parent of {0} is missing, later, or not adjacent")]
    BadParent(Label),
    #[error("{0} breaks preorder")]
    NotPreorder(Label),
    #[error("round {0}: token used by a node that does not hold it")]
    TokenStolen(u64),
    #[error("round {0}: more than one traversal transmission")]
    TokenDuplicated(u64),
    #[error("acknowledgment wave sent {sent} messages for {nodes} nodes")]
    AckCount { sent: usize, nodes: usize },
}

/// Checks that the final parent pointers and discovery indices describe a
/// DFS preorder spanning tree rooted at `source`. Returns the tree size.
pub fn check_dfs_tree(
    topology: &Topology,
    outcome: &RunOutcome,
    source: Label,
) -> Result<usize, DfsViolation> {
    let mut order: BTreeMap<usize, (Label, Option<Label>)> = BTreeMap::new();
    for n in &outcome.nodes {
        let s = &n.snapshot;
        let idx = s
            .discovery_index
            .ok_or(DfsViolation::Undiscovered(s.label))?;
        order.insert(idx, (s.label, s.parent));
    }
    let n = outcome.nodes.len();
    if order.len() != n || order.keys().next_back() != Some(&(n - 1)) {
        return Err(DfsViolation::BadIndices(n));
    }
    let position: BTreeMap<Label, usize> = order.iter().map(|(&i, &(l, _))| (l, i)).collect();
    let parent_of: BTreeMap<Label, Option<Label>> = order.values().copied().collect();
    if order[&0] != (source, None) {
        return Err(DfsViolation::BadRoot(source));
    }
    let mut prev = source;
    for (&i, &(label, parent)) in order.iter().skip(1) {
        let p = parent.ok_or(DfsViolation::BadParent(label))?;
        if position.get(&p).is_none_or(|&pi| pi >= i) || !topology.has_edge(p, label) {
            return Err(DfsViolation::BadParent(label));
        }
        let mut anc = Some(prev);
        while let Some(a) = anc {
            if a == p {
                break;
            }
            anc = parent_of[&a];
        }
        if anc.is_none() {
            return Err(DfsViolation::NotPreorder(label));
        }
        prev = label;
    }
    Ok(n)
}

/// Checks over a trace that only the token holder announces or passes the
/// token, that no round carries two such transmissions, and that the
/// acknowledgment wave sent exactly `nodes` messages one per round.
pub fn check_token_trace(
    trace: &RunTrace,
    source: Label,
    nodes: usize,
) -> Result<(), DfsViolation> {
    let mut holder = source;
    let mut acks = 0;
    for rec in &trace.rounds {
        let mut traversal = 0;
        let mut round_acks = 0;
        for m in &rec.transmissions {
            match &m.body {
                Body::Token { to, discovered, .. } => {
                    if m.sender == source && discovered.len() == 2 {
                        holder = source;
                    }
                    if m.sender != holder {
                        return Err(DfsViolation::TokenStolen(rec.round));
                    }
                    holder = *to;
                    traversal += 1;
                }
                Body::Announce { .. } => {
                    if m.sender != holder {
                        return Err(DfsViolation::TokenStolen(rec.round));
                    }
                    traversal += 1;
                }
                Body::Ack { .. } => round_acks += 1,
                _ => {}
            }
        }
        if traversal > 1 || round_acks > 1 {
            return Err(DfsViolation::TokenDuplicated(rec.round));
        }
        acks += round_acks;
    }
    if acks != nodes {
        return Err(DfsViolation::AckCount { sent: acks, nodes });
    }
    Ok(())
}
