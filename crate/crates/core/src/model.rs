//! Network, label and message types plus the single-round channel rule.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A node label. Labels are positive and unique within a topology.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Label(pub u64);

impl Label {
    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for Label {
    fn from(v: u64) -> Self {
        Label(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Directed,
    Bidirectional,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("label 0 is not allowed")]
    ZeroLabel,
    #[error("duplicate label {0}")]
    DuplicateLabel(Label),
    #[error("label {label} exceeds n^c = {max}")]
    LabelTooLarge { label: Label, max: u64 },
    #[error("self-loop on {0}")]
    SelfLoop(Label),
    #[error("edge endpoint {0} is not a node")]
    UnknownEndpoint(Label),
    #[error("constant c must be at least 1")]
    BadConstant,
    #[error("malformed topology file: {0}")]
    Parse(String),
}

/// On-disk topology format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyFile {
    pub kind: TopologyKind,
    pub c: u32,
    pub nodes: Vec<u64>,
    pub edges: Vec<[u64; 2]>,
}

/// A labeled network. Nodes are kept sorted by label and addressed by index
/// internally; adjacency is stored both ways for the engine's delivery pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    kind: TopologyKind,
    c: u32,
    labels: Vec<Label>,
    index: BTreeMap<Label, usize>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(
        kind: TopologyKind,
        c: u32,
        nodes: impl IntoIterator<Item = Label>,
        edges: impl IntoIterator<Item = (Label, Label)>,
    ) -> Result<Self, TopologyError> {
        if c == 0 {
            return Err(TopologyError::BadConstant);
        }
        let mut labels: Vec<Label> = nodes.into_iter().collect();
        labels.sort();
        for w in labels.windows(2) {
            if w[0] == w[1] {
                return Err(TopologyError::DuplicateLabel(w[0]));
            }
        }
        if labels.first() == Some(&Label(0)) {
            return Err(TopologyError::ZeroLabel);
        }
        let max = label_bound(labels.len() as u64, c);
        if let Some(&top) = labels.last() {
            if top.0 > max {
                return Err(TopologyError::LabelTooLarge { label: top, max });
            }
        }
        let index: BTreeMap<Label, usize> =
            labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let mut out_sets = vec![BTreeSet::new(); labels.len()];
        for (from, to) in edges {
            if from == to {
                return Err(TopologyError::SelfLoop(from));
            }
            let &a = index
                .get(&from)
                .ok_or(TopologyError::UnknownEndpoint(from))?;
            let &b = index.get(&to).ok_or(TopologyError::UnknownEndpoint(to))?;
            out_sets[a].insert(b);
            if kind == TopologyKind::Bidirectional {
                out_sets[b].insert(a);
            }
        }
        let out_adj: Vec<Vec<usize>> = out_sets
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect();
        let mut in_adj = vec![Vec::new(); labels.len()];
        for (a, outs) in out_adj.iter().enumerate() {
            for &b in outs {
                in_adj[b].push(a);
            }
        }
        Ok(Self {
            kind,
            c,
            labels,
            index,
            out_adj,
            in_adj,
        })
    }

    pub fn from_file(file: &TopologyFile) -> Result<Self, TopologyError> {
        Self::new(
            file.kind,
            file.c,
            file.nodes.iter().map(|&l| Label(l)),
            file.edges.iter().map(|e| (Label(e[0]), Label(e[1]))),
        )
    }

    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile =
            serde_json::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
        Self::from_file(&file)
    }

    /// Bidirectional edges are written once, smaller label first.
    pub fn to_file(&self) -> TopologyFile {
        let mut edges = Vec::new();
        for (a, outs) in self.out_adj.iter().enumerate() {
            for &b in outs {
                if self.kind == TopologyKind::Bidirectional && b < a {
                    continue;
                }
                edges.push([self.labels[a].0, self.labels[b].0]);
            }
        }
        TopologyFile {
            kind: self.kind,
            c: self.c,
            nodes: self.labels.iter().map(|l| l.0).collect(),
            edges,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("topology serializes")
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn c(&self) -> u32 {
        self.c
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> Label {
        self.labels[idx]
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.index.get(&label).copied()
    }

    pub fn out_neighbors(&self, idx: usize) -> &[usize] {
        &self.out_adj[idx]
    }

    pub fn in_neighbors(&self, idx: usize) -> &[usize] {
        &self.in_adj[idx]
    }

    pub fn edge_count(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, from: Label, to: Label) -> bool {
        match (self.index_of(from), self.index_of(to)) {
            (Some(a), Some(b)) => self.out_adj[a].binary_search(&b).is_ok(),
            _ => false,
        }
    }

    /// Indices reachable from `start` following out-edges, restricted to
    /// nodes accepted by `allow` (the start node is always included).
    pub fn reachable_from(&self, start: usize, allow: impl Fn(usize) -> bool) -> BTreeSet<usize> {
        bfs(start, |u| self.out_adj[u].as_slice(), &allow)
    }

    pub fn reaching(&self, target: usize, allow: impl Fn(usize) -> bool) -> BTreeSet<usize> {
        bfs(target, |u| self.in_adj[u].as_slice(), &allow)
    }

    /// Strong connectivity for directed kinds, plain connectivity for
    /// bidirectional ones (the adjacency is symmetric, so it is the same test).
    pub fn is_strongly_connected(&self) -> bool {
        if self.labels.is_empty() {
            return false;
        }
        let all = |_| true;
        self.reachable_from(0, all).len() == self.len() && self.reaching(0, all).len() == self.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.out_adj.iter().enumerate().all(|(a, outs)| {
            outs.iter()
                .all(|&b| self.out_adj[b].binary_search(&a).is_ok())
        })
    }
}

fn bfs<'a>(
    start: usize,
    next: impl Fn(usize) -> &'a [usize],
    allow: &dyn Fn(usize) -> bool,
) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in next(u) {
            if allow(v) && seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    seen
}

/// `n^c`, saturating.
pub fn label_bound(n: u64, c: u32) -> u64 {
    n.checked_pow(c).unwrap_or(u64::MAX)
}

/// `2^e`, saturating.
pub fn pow2(e: u64) -> u64 {
    if e >= 63 {
        u64::MAX
    } else {
        1u64 << e
    }
}

/// Payload of a transmission. Rumors are identified by the label of the node
/// that originated them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Body {
    /// Rumors being disseminated.
    Rumors {
        rumors: BTreeSet<Label>,
    },
    /// Label sets (first gossip execution).
    Labels {
        labels: BTreeSet<Label>,
    },
    /// Origin -> label set pairs (second gossip execution).
    LabelSets {
        sets: BTreeMap<Label, BTreeSet<Label>>,
    },
    /// Stage-3 replay of a gossip transmission schedule.
    Replay,
    Failure {
        phase: u32,
    },
    Nack {
        phase: u32,
    },
    /// Estimate round 1: search request from the token holder.
    Announce {
        helper: Label,
        excluded: BTreeSet<Label>,
        range: (u64, u64),
        rumor: Label,
    },
    /// Source echo of the first label heard while discovering a neighbor.
    Echo {
        helper: Label,
    },
    Token {
        to: Label,
        discovered: Vec<Label>,
        rumor: Label,
    },
    Ack {
        rumor: Label,
    },
    /// A bare label transmission (selective-family slots, estimate replies).
    Id,
}

impl Body {
    /// Rumors whose content this body carries.
    pub fn rumors(&self) -> BTreeSet<Label> {
        match self {
            Body::Rumors { rumors } => rumors.clone(),
            Body::Announce { rumor, .. } | Body::Token { rumor, .. } | Body::Ack { rumor } => {
                BTreeSet::from([*rumor])
            }
            _ => BTreeSet::new(),
        }
    }

    /// Number of labels the payload carries; used for size reporting only.
    pub fn cardinality(&self) -> usize {
        match self {
            Body::Rumors { rumors } => rumors.len(),
            Body::Labels { labels } => labels.len(),
            Body::LabelSets { sets } => sets.values().map(|s| s.len() + 1).sum(),
            Body::Announce { excluded, .. } => excluded.len() + 3,
            Body::Token { discovered, .. } => discovered.len() + 2,
            Body::Echo { .. } | Body::Ack { .. } | Body::Failure { .. } | Body::Nack { .. } => 1,
            Body::Replay | Body::Id => 0,
        }
    }
}

/// An authenticated transmission. The engine stamps `sender` with the
/// transmitting node's label; protocols cannot forge it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub sender: Label,
    pub body: Body,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RoundAction {
    Transmit { body: Body },
    Listen,
    Idle,
}

impl RoundAction {
    pub fn transmit(body: Body) -> Self {
        RoundAction::Transmit { body }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reception", rename_all = "snake_case")]
pub enum Reception {
    Received { message: Message },
    Silence,
    Collision,
}

impl Reception {
    pub fn message(&self) -> Option<&Message> {
        match self {
            Reception::Received { message } => Some(message),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelModel {
    /// Two or more transmitters are indistinguishable from none.
    #[serde(rename = "nocd")]
    NoCd,
    /// Listeners can tell a collision from silence.
    #[serde(rename = "cd")]
    Cd,
}

/// What a listener hears given the messages of its transmitting in-neighbors.
/// Nodes that transmit or idle hear nothing and get `None`.
pub fn deliver(
    mode: ChannelModel,
    transmitters: &[Message],
    action: &RoundAction,
) -> Option<Reception> {
    if !matches!(action, RoundAction::Listen) {
        return None;
    }
    Some(crate::engine::resolve(
        mode,
        transmitters.len(),
        transmitters.first(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeClass {
    Small,
    Medium,
    Big,
}

/// Small: label <= 2^phase. Medium: up to 2^(phase*c). Big: above that.
pub fn classify_node(label: Label, phase: u32, c: u32) -> NodeClass {
    let small = pow2(u64::from(phase));
    let medium = pow2(u64::from(phase) * u64::from(c));
    if label.0 <= small {
        NodeClass::Small
    } else if label.0 <= medium {
        NodeClass::Medium
    } else {
        NodeClass::Big
    }
}
