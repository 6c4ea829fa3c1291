//! Seeded topology and label generators.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{label_bound, Label, Topology, TopologyKind};

/// Graph shape. Node 0 of every shape is the designated source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    DirectedCycle {
        n: usize,
    },
    /// Random Hamiltonian cycle plus `extra_edges` random arcs.
    RandomScDigraph {
        n: usize,
        extra_edges: usize,
    },
    /// Directed cycle plus arcs from every node into one hub.
    HubDigraph {
        n: usize,
    },
    BidirPath {
        n: usize,
    },
    BidirTree {
        n: usize,
    },
    BidirRandomConnected {
        n: usize,
        extra_edges: usize,
    },
    Clique {
        n: usize,
    },
}

impl Shape {
    pub fn n(&self) -> usize {
        match *self {
            Shape::DirectedCycle { n }
            | Shape::RandomScDigraph { n, .. }
            | Shape::HubDigraph { n }
            | Shape::BidirPath { n }
            | Shape::BidirTree { n }
            | Shape::BidirRandomConnected { n, .. }
            | Shape::Clique { n } => n,
        }
    }

    pub fn kind(&self) -> TopologyKind {
        match self {
            Shape::DirectedCycle { .. }
            | Shape::RandomScDigraph { .. }
            | Shape::HubDigraph { .. } => TopologyKind::Directed,
            _ => TopologyKind::Bidirectional,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shape::DirectedCycle { .. } => "directed_cycle",
            Shape::RandomScDigraph { .. } => "random_sc_digraph",
            Shape::HubDigraph { .. } => "hub_digraph",
            Shape::BidirPath { .. } => "bidir_path",
            Shape::BidirTree { .. } => "bidir_tree",
            Shape::BidirRandomConnected { .. } => "bidir_random_connected",
            Shape::Clique { .. } => "clique",
        }
    }

    /// Same shape family at another size.
    pub fn with_n(self, n: usize) -> Self {
        match self {
            Shape::DirectedCycle { .. } => Shape::DirectedCycle { n },
            Shape::RandomScDigraph { extra_edges, .. } => Shape::RandomScDigraph { n, extra_edges },
            Shape::HubDigraph { .. } => Shape::HubDigraph { n },
            Shape::BidirPath { .. } => Shape::BidirPath { n },
            Shape::BidirTree { .. } => Shape::BidirTree { n },
            Shape::BidirRandomConnected { extra_edges, .. } => {
                Shape::BidirRandomConnected { n, extra_edges }
            }
            Shape::Clique { .. } => Shape::Clique { n },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Node `j` gets label `j + 1`.
    #[default]
    Identity,
    /// Distinct uniform labels in `[1..n^c]`; the source is kept at or below
    /// `source_max` when one is given.
    Random,
    /// Like `Random`, but cut nodes (high in-degree nodes for directed
    /// shapes) get labels from the top half of the range.
    Adversarial,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSpec {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default)]
    pub labels: LabelMode,
    #[serde(default = "default_c")]
    pub c: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_max: Option<u64>,
}

fn default_c() -> u32 {
    2
}

impl GenSpec {
    pub fn new(shape: Shape, labels: LabelMode, c: u32) -> Self {
        Self {
            shape,
            labels,
            c,
            source_max: None,
        }
    }

    pub fn source_max(mut self, max: u64) -> Self {
        self.source_max = Some(max);
        self
    }
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub topology: Topology,
    pub source: Label,
}

pub fn gen_topology(spec: &GenSpec, seed: u64) -> Result<Generated, HarnessError> {
    let n = spec.shape.n();
    if n < 2 {
        return Err(HarnessError::InvalidSpec(format!(
            "need at least 2 nodes, got {n}"
        )));
    }
    if spec.c == 0 {
        return Err(HarnessError::InvalidSpec("c must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = structure(spec.shape, &mut rng);
    let labels = assign_labels(spec, &edges, &mut rng)?;
    let topology = Topology::new(
        spec.shape.kind(),
        spec.c,
        labels.iter().copied(),
        edges.iter().map(|&(a, b)| (labels[a], labels[b])),
    )?;
    if !topology.is_strongly_connected() {
        return Err(HarnessError::InvalidSpec(format!(
            "{:?} did not produce a connected network",
            spec.shape
        )));
    }
    Ok(Generated {
        topology,
        source: labels[0],
    })
}

fn structure(shape: Shape, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let n = shape.n();
    let cycle = |order: &[usize]| -> Vec<(usize, usize)> {
        (0..order.len())
            .map(|i| (order[i], order[(i + 1) % order.len()]))
            .collect()
    };
    match shape {
        Shape::DirectedCycle { .. } => cycle(&(0..n).collect::<Vec<_>>()),
        Shape::RandomScDigraph { extra_edges, .. } => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            let mut edges: BTreeSet<(usize, usize)> = cycle(&order).into_iter().collect();
            add_random_arcs(&mut edges, n, extra_edges, false, rng);
            edges.into_iter().collect()
        }
        Shape::HubDigraph { .. } => {
            let hub = n / 2;
            let mut edges: BTreeSet<(usize, usize)> =
                cycle(&(0..n).collect::<Vec<_>>()).into_iter().collect();
            edges.extend((0..n).filter(|&u| u != hub).map(|u| (u, hub)));
            edges.into_iter().collect()
        }
        Shape::BidirPath { .. } => (1..n).map(|i| (i - 1, i)).collect(),
        Shape::BidirTree { .. } => random_tree(n, rng),
        Shape::BidirRandomConnected { extra_edges, .. } => {
            let mut edges: BTreeSet<(usize, usize)> = random_tree(n, rng).into_iter().collect();
            add_random_arcs(&mut edges, n, extra_edges, true, rng);
            edges.into_iter().collect()
        }
        Shape::Clique { .. } => (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .collect(),
    }
}

/// Random recursive tree: node `i` hangs off a uniform earlier node.
fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    (1..n).map(|i| (rng.gen_range(0..i), i)).collect()
}

fn add_random_arcs(
    edges: &mut BTreeSet<(usize, usize)>,
    n: usize,
    extra: usize,
    undirected: bool,
    rng: &mut ChaCha8Rng,
) {
    let key = |a: usize, b: usize| {
        if undirected {
            (a.min(b), a.max(b))
        } else {
            (a, b)
        }
    };
    let capacity = if undirected {
        n * (n - 1) / 2
    } else {
        n * (n - 1)
    };
    let target = (edges.len() + extra).min(capacity);
    while edges.len() < target {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            edges.insert(key(a, b));
        }
    }
}

fn assign_labels(
    spec: &GenSpec,
    edges: &[(usize, usize)],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Label>, HarnessError> {
    let n = spec.shape.n();
    let max = label_bound(n as u64, spec.c);
    if max > (1 << 40) {
        return Err(HarnessError::InvalidSpec(format!(
            "label range n^c = {max} too large"
        )));
    }
    match spec.labels {
        LabelMode::Identity => Ok((1..=n as u64).map(Label).collect()),
        LabelMode::Random => {
            let source_max = spec.source_max.unwrap_or(max).clamp(1, max);
            let source = rng.gen_range(1..=source_max);
            let mut rest = distinct_excluding(rng, 1, max, n - 1, source);
            rest.shuffle(rng);
            Ok(std::iter::once(source).chain(rest).map(Label).collect())
        }
        LabelMode::Adversarial => {
            let source_max = spec.source_max.unwrap_or(1).clamp(1, max);
            let source = rng.gen_range(1..=source_max);
            let cuts = cut_nodes(spec.shape, n, edges);
            let half = max / 2;
            let high_pool = max - half;
            let n_high = cuts.len().min(high_pool as usize);
            let mut high: Vec<u64> = rand::seq::index::sample(rng, high_pool as usize, n_high)
                .into_iter()
                .map(|i| half + 1 + i as u64)
                .filter(|&l| l != source)
                .collect();
            let mut labels = vec![0u64; n];
            labels[0] = source;
            for &v in &cuts {
                if let Some(l) = high.pop() {
                    labels[v] = l;
                }
            }
            let taken: BTreeSet<u64> = labels.iter().copied().filter(|&l| l != 0).collect();
            let free: Vec<u64> = (1..=max).filter(|l| !taken.contains(l)).collect();
            let missing = labels.iter().filter(|&&l| l == 0).count();
            let mut fill: Vec<u64> = rand::seq::index::sample(rng, free.len(), missing)
                .into_iter()
                .map(|i| free[i])
                .collect();
            for l in labels.iter_mut().filter(|l| **l == 0) {
                *l = fill.pop().expect("enough free labels");
            }
            Ok(labels.into_iter().map(Label).collect())
        }
    }
}

/// `count` distinct values of `[lo..=hi]` other than `skip`.
fn distinct_excluding(rng: &mut ChaCha8Rng, lo: u64, hi: u64, count: usize, skip: u64) -> Vec<u64> {
    let span = (hi - lo) as usize; // one value fewer than the range, `skip` is removed
    rand::seq::index::sample(rng, span, count)
        .into_iter()
        .map(|i| {
            let v = lo + i as u64;
            if v >= skip {
                v + 1
            } else {
                v
            }
        })
        .collect()
}

/// Non-source nodes whose removal disconnects the rest (bidirectional), or
/// the nodes of highest in-degree (directed).
fn cut_nodes(shape: Shape, n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    if shape.kind() == TopologyKind::Directed {
        let mut indeg = vec![0usize; n];
        for &(_, b) in edges {
            indeg[b] += 1;
        }
        let mut order: Vec<usize> = (1..n).collect();
        order.sort_by_key(|&v| (std::cmp::Reverse(indeg[v]), v));
        order.truncate(n.div_ceil(4));
        return order;
    }
    let adj = |removed: usize| {
        let mut seen = vec![false; n];
        let start = if removed == 0 { 1 } else { 0 };
        let mut stack = vec![start];
        seen[start] = true;
        seen[removed] = true;
        while let Some(u) = stack.pop() {
            for &(a, b) in edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == u && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    (1..n).filter(|&v| !adj(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(shape: Shape, labels: LabelMode, seed: u64) -> Generated {
        gen_topology(&GenSpec::new(shape, labels, 2), seed).unwrap()
    }

    #[test]
    fn directed_cycle_identity() {
        let g = gen(Shape::DirectedCycle { n: 3 }, LabelMode::Identity, 0);
        let l = Label;
        assert!(
            g.topology.has_edge(l(1), l(2))
                && g.topology.has_edge(l(2), l(3))
                && g.topology.has_edge(l(3), l(1))
        );
        assert_eq!(g.topology.edge_count(), 3);
        assert_eq!(g.source, l(1));
    }

    #[test]
    fn random_sc_digraph_arc_count() {
        let g = gen(
            Shape::RandomScDigraph {
                n: 8,
                extra_edges: 5,
            },
            LabelMode::Identity,
            9,
        );
        assert!(g.topology.is_strongly_connected());
        assert_eq!(g.topology.edge_count(), 13);
    }

    #[test]
    fn bidir_tree_random_labels() {
        let g = gen(Shape::BidirTree { n: 6 }, LabelMode::Random, 2);
        assert!(g.topology.is_strongly_connected());
        assert!(g.topology.labels().iter().all(|l| l.0 <= 36));
        assert_eq!(g.topology.edge_count(), 10);
    }

    #[test]
    fn source_cap_is_respected() {
        for seed in 0..50 {
            let spec = GenSpec::new(
                Shape::RandomScDigraph {
                    n: 12,
                    extra_edges: 6,
                },
                LabelMode::Random,
                2,
            )
            .source_max(2);
            let g = gen_topology(&spec, seed).unwrap();
            assert!(g.source.0 <= 2);
        }
    }

    #[test]
    fn adversarial_labels_put_cut_nodes_high() {
        let g = gen(Shape::BidirPath { n: 8 }, LabelMode::Adversarial, 4);
        assert_eq!(g.source, Label(1));
        let high = g.topology.labels().iter().filter(|l| l.0 > 32).count();
        assert_eq!(high, 6);
    }

    #[test]
    fn all_shapes_connected_and_deterministic() {
        let shapes = [
            Shape::DirectedCycle { n: 7 },
            Shape::RandomScDigraph {
                n: 7,
                extra_edges: 4,
            },
            Shape::HubDigraph { n: 7 },
            Shape::BidirPath { n: 7 },
            Shape::BidirTree { n: 7 },
            Shape::BidirRandomConnected {
                n: 7,
                extra_edges: 3,
            },
            Shape::Clique { n: 7 },
        ];
        for shape in shapes {
            for mode in [
                LabelMode::Identity,
                LabelMode::Random,
                LabelMode::Adversarial,
            ] {
                let a = gen(shape, mode, 11);
                let b = gen(shape, mode, 11);
                assert!(a.topology.is_strongly_connected());
                assert_eq!(a.topology.to_json(), b.topology.to_json());
            }
        }
        assert!(gen_topology(
            &GenSpec::new(Shape::Clique { n: 1 }, LabelMode::Identity, 2),
            0
        )
        .is_err());
    }
}
