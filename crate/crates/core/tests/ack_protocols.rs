mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use radiocast::ack::{
    broadcast_factory, default_budget, gossip_factory, phase_bound, AckGossipNode, AckParams,
    AckProtocol, PhasePlan,
};
use radiocast::engine::{
    check_broadcast_complete, check_gossip_complete, run, EventKind, FailureCause, Run, Simulation,
};
use radiocast::harness::{gen_topology, GenSpec, LabelMode, Shape};
use radiocast::model::{Body, ChannelModel, Label, Topology, TopologyKind};

fn channel(p: AckProtocol) -> ChannelModel {
    if p == AckProtocol::GossipCd {
        ChannelModel::Cd
    } else {
        ChannelModel::NoCd
    }
}

fn run_ack(p: AckProtocol, t: &Topology, source: Label, params: AckParams, trace: bool) -> Run {
    let plan = PhasePlan::new(p, params).unwrap();
    let budget = default_budget(&plan, t.len()).unwrap();
    let r = match p {
        AckProtocol::Broadcast => run(
            t,
            channel(p),
            broadcast_factory(Arc::clone(&plan), source),
            budget,
            trace,
        ),
        _ => run(
            t,
            channel(p),
            gossip_factory(Arc::clone(&plan)),
            budget,
            trace,
        ),
    };
    r.unwrap()
}

fn complete(p: AckProtocol, r: &Run, source: Label) -> bool {
    match p {
        AckProtocol::Broadcast => check_broadcast_complete(&r.outcome, source, source),
        _ => check_gossip_complete(&r.outcome),
    }
}

const ALL: [AckProtocol; 3] = [
    AckProtocol::Broadcast,
    AckProtocol::GossipCd,
    AckProtocol::GossipNoCd,
];

#[test]
fn two_cycle_finishes_in_phase_four() {
    let t = common::cycle(&[1, 2]);
    for p in ALL {
        let r = run_ack(p, &t, Label(1), AckParams::default(), false);
        assert!(complete(p, &r, Label(1)), "{p:?}");
        assert_eq!(r.outcome.termination_phase, 4, "{p:?}");
        assert!(r.outcome.failure_causes().is_empty());
    }
}

#[test]
fn twenty_nodes_within_the_phase_bound() {
    for seed in 0..3 {
        let spec = GenSpec::new(
            Shape::RandomScDigraph {
                n: 20,
                extra_edges: 20,
            },
            LabelMode::Random,
            2,
        )
        .source_max(16);
        let g = gen_topology(&spec, seed).unwrap();
        for p in ALL {
            let r = run_ack(p, &g.topology, g.source, AckParams::default(), false);
            assert!(complete(p, &r, g.source));
            assert!(r.outcome.termination_phase <= 5);
        }
    }
}

#[test]
fn big_node_forces_a_nack_then_succeeds() {
    // 289 = 17^2 is the largest valid label and is big while the bound is 256
    let mut labels: Vec<u64> = (1..=16).collect();
    labels.push(289);
    let t = common::cycle(&labels);
    let r = run_ack(
        AckProtocol::Broadcast,
        &t,
        Label(1),
        AckParams::default(),
        false,
    );
    assert!(complete(AckProtocol::Broadcast, &r, Label(1)));
    assert_eq!(r.outcome.termination_phase, 5);
    let in_phase = |pred: fn(&EventKind) -> bool, phase| {
        r.outcome
            .events_of(pred)
            .filter(|e| e.phase == phase)
            .count()
    };
    assert!(in_phase(|k| matches!(k, EventKind::Jamming), 4) >= 1);
    assert_eq!(in_phase(|k| matches!(k, EventKind::NackSent), 4), 1);
    assert_eq!(in_phase(|k| matches!(k, EventKind::NackSent), 5), 0);
}

/// Listener receptions keyed by position within a stage, as `(listener, sender or none)`.
fn stage_receptions(r: &Run, start: u64, len: u64) -> Vec<BTreeSet<(Label, Option<Label>)>> {
    let trace = r.trace.as_ref().unwrap();
    (start..start + len)
        .map(|round| {
            trace.rounds[round as usize]
                .receptions
                .iter()
                .map(|(l, rec)| (*l, rec.message().map(|m| m.sender)))
                .collect()
        })
        .collect()
}

#[test]
fn replay_matches_the_second_gossip_round_for_round() {
    let t = common::digraph(
        &[1, 2, 3, 4, 5],
        &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 1), (3, 1), (5, 2)],
    );
    let plan = PhasePlan::new(AckProtocol::Broadcast, AckParams::default()).unwrap();
    let layout = plan.layout(4).unwrap();
    let r = run_ack(
        AckProtocol::Broadcast,
        &t,
        Label(1),
        AckParams::default(),
        true,
    );
    assert_eq!(r.outcome.termination_phase, 4);
    let s = &layout.stages;
    let second = stage_receptions(&r, s[0] + s[1], s[2]);
    let replay = stage_receptions(&r, s[0] + s[1] + s[2], s[3]);
    assert_eq!(second, replay);
    let trace = r.trace.as_ref().unwrap();
    let replay_bodies = (s[0] + s[1] + s[2]..s[0] + s[1] + s[2] + s[3])
        .flat_map(|round| trace.rounds[round as usize].transmissions.iter())
        .all(|m| m.body == Body::Replay);
    assert!(replay_bodies);
}

#[test]
fn jamming_is_always_detected_on_small_digraphs() {
    // min phase 1: label bound 4, so a node labelled n^2 >= 9 is big
    let params = AckParams {
        min_phase: 1,
        ..AckParams::default()
    };
    let plan = PhasePlan::new(AckProtocol::Broadcast, params).unwrap();
    let phase_len = plan.layout(1).unwrap().len();
    let mut checked = 0;
    for n in 3..=5 {
        for arcs in common::strongly_connected_digraphs(n) {
            for big in 1..n {
                let labels: Vec<Label> = (0..n)
                    .map(|i| {
                        if i == big {
                            Label((n * n) as u64)
                        } else {
                            Label(i as u64 + 1)
                        }
                    })
                    .collect();
                let arcs = arcs.iter().map(|&(a, b)| (labels[a], labels[b]));
                let t = Topology::new(TopologyKind::Directed, 2, labels.clone(), arcs).unwrap();
                let mut sim = Simulation::new(
                    &t,
                    ChannelModel::NoCd,
                    broadcast_factory(Arc::clone(&plan), Label(1)),
                    false,
                )
                .unwrap();
                sim.run_until(phase_len + 1);
                let out = sim.outcome();
                let detected = out
                    .events_of(|k| {
                        matches!(
                            k,
                            EventKind::Failed {
                                cause: FailureCause::FailureHeard | FailureCause::ReplaySilent
                            }
                        )
                    })
                    .any(|e| e.phase == 1);
                assert!(detected, "n={n} big={big} arcs={:?}", t.to_json());
                assert!(out
                    .events_of(|k| matches!(k, EventKind::Done))
                    .next()
                    .is_none());
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "{checked}");
}

#[test]
fn gossip_protocols_agree_on_the_phase() {
    for n in [3usize, 5, 8, 12] {
        for seed in 0..4 {
            for labels in [LabelMode::Random, LabelMode::Adversarial] {
                let spec = GenSpec::new(
                    Shape::RandomScDigraph {
                        n,
                        extra_edges: n / 2,
                    },
                    labels,
                    2,
                );
                let g = gen_topology(&spec, seed).unwrap();
                let params = AckParams {
                    min_phase: 1,
                    ..AckParams::default()
                };
                let cd = run_ack(
                    AckProtocol::GossipCd,
                    &g.topology,
                    g.source,
                    params.clone(),
                    false,
                );
                let nocd = run_ack(
                    AckProtocol::GossipNoCd,
                    &g.topology,
                    g.source,
                    params,
                    false,
                );
                assert!(check_gossip_complete(&cd.outcome) && check_gossip_complete(&nocd.outcome));
                assert_eq!(
                    cd.outcome.termination_phase, nocd.outcome.termination_phase,
                    "n={n} seed={seed}"
                );
                assert!(cd.outcome.termination_phase <= phase_bound(1, n));
            }
        }
    }
}

#[test]
fn bridge_node_fires_the_collision_rule() {
    let t = common::bridge();
    for p in [AckProtocol::GossipCd, AckProtocol::GossipNoCd] {
        let r = run_ack(
            p,
            &t,
            Label(1),
            AckParams {
                min_phase: 1,
                ..AckParams::default()
            },
            false,
        );
        assert!(check_gossip_complete(&r.outcome));
        assert_eq!(r.outcome.termination_phase, 3);
        let fired = r
            .outcome
            .events_of(|k| {
                matches!(
                    k,
                    EventKind::Failed {
                        cause: FailureCause::Collision
                    }
                )
            })
            .any(|e| e.label == Label(2) && e.phase == 2);
        assert!(fired, "{p:?} {:?}", r.outcome.failure_causes());
    }
}

#[test]
fn truncated_runs_are_not_complete() {
    let t = common::cycle(&[1, 2, 3]);
    let plan = PhasePlan::new(AckProtocol::Broadcast, AckParams::default()).unwrap();
    let err = run(
        &t,
        ChannelModel::NoCd,
        broadcast_factory(plan, Label(1)),
        100,
        false,
    )
    .unwrap_err();
    let radiocast::engine::EngineError::MaxRoundsExceeded { outcome, .. } = err else {
        panic!("{err}")
    };
    assert!(!check_broadcast_complete(&outcome, Label(1), Label(1)));
    assert!(outcome.nodes.iter().all(|n| !n.snapshot.done));
}

#[test]
fn stray_sender_fires_the_foreign_label_rule() {
    // 3 is silent except in its own stage-3 slots, so 1 never learned it
    let t = common::digraph(&[1, 2, 3], &[(1, 2), (2, 1), (3, 1), (1, 3)]);
    let plan = PhasePlan::new(AckProtocol::GossipCd, AckParams::default()).unwrap();
    let layout = plan.layout(4).unwrap();
    let factory =
        |ctx: radiocast::engine::NodeContext| -> Box<dyn radiocast::engine::NodeProtocol> {
            if ctx.label == Label(3) {
                Box::new(common::Stray {
                    label: ctx.label,
                    plan: Arc::clone(&plan),
                    phase: 4,
                })
            } else {
                Box::new(AckGossipNode::new(ctx, Arc::clone(&plan)))
            }
        };
    let mut sim = Simulation::new(&t, ChannelModel::Cd, factory, true).unwrap();
    sim.run_until(layout.len() + 1);
    let out = sim.outcome();
    let trace = sim.take_trace().unwrap();
    let fired: Vec<_> = out
        .events_of(|k| {
            matches!(
                k,
                EventKind::Failed {
                    cause: FailureCause::ForeignLabel
                }
            )
        })
        .map(|e| (e.label, e.round))
        .collect();
    assert_eq!(fired.len(), 1);
    assert_eq!(fired[0].0, Label(1));
    let s = &layout.stages;
    let stage3 = (s[0] + s[1]) as usize..(s[0] + s[1] + s[2]) as usize;
    let heard = trace.rounds[stage3].iter().any(|rec| {
        rec.receptions
            .iter()
            .any(|(l, r)| *l == Label(1) && r.message().is_some_and(|m| m.sender == Label(3)))
    });
    assert!(heard);
}
