//! Scenario builders shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use radiocast::ack::PhasePlan;
use radiocast::engine::{NodeProtocol, NodeSnapshot};
use radiocast::model::{Body, Label, Reception, RoundAction, Topology, TopologyKind};

/// A node that ignores the protocol except for transmitting its label in its
/// own stage-3 slots of one gossip phase.
pub struct Stray {
    pub label: Label,
    pub plan: Arc<PhasePlan>,
    pub phase: u32,
}

impl NodeProtocol for Stray {
    fn act(&mut self, round: u64) -> RoundAction {
        let start = if self.phase > self.plan.params.min_phase {
            self.plan.rounds_through(self.phase - 1).unwrap()
        } else {
            0
        };
        let layout = self.plan.layout(self.phase).unwrap();
        let Some((stage, pos)) = round.checked_sub(start).and_then(|o| layout.locate(o)) else {
            return RoundAction::Idle;
        };
        let f = layout.stage3.as_ref().unwrap();
        if stage == 2 && f.contains(pos as usize, self.label.0) {
            RoundAction::transmit(Body::Id)
        } else {
            RoundAction::Idle
        }
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
            label: self.label,
            ..Default::default()
        }
    }
}

pub fn digraph(labels: &[u64], arcs: &[(u64, u64)]) -> Topology {
    let arcs = arcs.iter().map(|&(a, b)| (Label(a), Label(b)));
    Topology::new(
        TopologyKind::Directed,
        2,
        labels.iter().map(|&l| Label(l)),
        arcs,
    )
    .unwrap()
}

pub fn cycle(labels: &[u64]) -> Topology {
    let arcs: Vec<(u64, u64)> = (0..labels.len())
        .map(|i| (labels[i], labels[(i + 1) % labels.len()]))
        .collect();
    digraph(labels, &arcs)
}

/// Two directed 3-cycles joined through a bridge node. At phase 2 only the
/// first cycle participates and node 2 hears the jamming bridge together
/// with its known predecessor 1.
pub fn bridge() -> Topology {
    let arcs = [
        (1, 2),
        (2, 3),
        (3, 1),
        (20, 30),
        (30, 40),
        (40, 20),
        (3, 49),
        (49, 20),
        (40, 49),
        (49, 2),
    ];
    digraph(&[1, 2, 3, 20, 30, 40, 49], &arcs)
}

/// Strongly connected digraphs on `n` nodes, as arc lists over indices.
pub fn strongly_connected_digraphs(n: usize) -> Vec<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let reaches_all = |arcs: &[(usize, usize)], rev: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in arcs {
                let (from, to) = if rev { (b, a) } else { (a, b) };
                if from == v && !seen[to] {
                    seen[to] = true;
                    stack.push(to);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    (0u64..1 << pairs.len())
        .filter_map(|mask| {
            let arcs: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &p)| p)
                .collect();
            (reaches_all(&arcs, false) && reaches_all(&arcs, true)).then_some(arcs)
        })
        .collect()
}
