//! Acknowledged broadcast on bidirectional networks.
//!
//! Phase `i` has two stages. Neighbor discovery lasts `1 + 2|SF|` rounds for
//! a selective family `SF(2^i, 2^(ic))`: the source speaks once, its
//! neighbors answer on the family's schedule in odd rounds and the source
//! echoes the first label it hears in the following even round. That label
//! becomes the source's helper, kept across phases.
//!
//! The second stage lasts `7 * 2^i * ceil(lg 2^(ic))` rounds: a token DFS in
//! the first 4/7 and an acknowledgment wave in the last 3/7. The wave sends
//! one `Ack` per round in discovery order, so a parent always speaks before
//! its children and no two nodes ever transmit together.

pub mod check;
pub mod estimate;
mod node;
pub mod select;

use std::sync::{Arc, OnceLock};

use crate::ack::{AckError, AckParams};
use crate::engine::{NodeContext, NodeProtocol};
use crate::families::{family_cache_get_or_build, FamilyRequest, SetFamily};
use crate::model::{label_bound, pow2, Label};

pub use check::{check_dfs_tree, check_token_trace, DfsViolation};
pub use estimate::{decode, estimate, responds, Estimate, EstimateError, LabelRange};
pub use node::BidirNode;
pub use select::{binary_select, BinarySelect, SelectOutcome};

/// Round layout of one phase.
#[derive(Clone, Debug)]
pub struct BidirLayout {
    pub phase: u32,
    pub n_est: u64,
    pub label_bound: u64,
    pub sf: Arc<SetFamily>,
    pub discover: u64,
    pub traverse: u64,
    pub ack: u64,
}

impl BidirLayout {
    pub fn len(&self) -> u64 {
        self.discover + self.traverse + self.ack
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Segment {
    Discover(u64),
    Traverse(u64),
    Ack(u64),
}

impl BidirLayout {
    pub(crate) fn segment(&self, offset: u64) -> Option<Segment> {
        if offset < self.discover {
            Some(Segment::Discover(offset))
        } else if offset < self.discover + self.traverse {
            Some(Segment::Traverse(offset - self.discover))
        } else if offset < self.len() {
            Some(Segment::Ack(offset - self.discover - self.traverse))
        } else {
            None
        }
    }
}

#[derive(Debug)]
pub struct BidirPlan {
    pub params: AckParams,
    max_phase: u32,
    layouts: Vec<OnceLock<Result<Arc<BidirLayout>, AckError>>>,
}

impl BidirPlan {
    pub fn new(params: AckParams) -> Result<Arc<Self>, AckError> {
        let max_phase = params.validate()?;
        let layouts = (0..=max_phase).map(|_| OnceLock::new()).collect();
        Ok(Arc::new(Self {
            params,
            max_phase,
            layouts,
        }))
    }

    pub fn max_phase(&self) -> u32 {
        self.max_phase
    }

    pub fn layout(&self, phase: u32) -> Result<Arc<BidirLayout>, AckError> {
        let slot = self
            .layouts
            .get(phase as usize)
            .ok_or(AckError::PhaseTooLarge(phase))?;
        slot.get_or_init(|| self.build(phase).map(Arc::new)).clone()
    }

    pub fn rounds_through(&self, last_phase: u32) -> Result<u64, AckError> {
        (self.params.min_phase..=last_phase)
            .try_fold(0u64, |acc, i| Ok(acc.saturating_add(self.layout(i)?.len())))
    }

    fn build(&self, phase: u32) -> Result<BidirLayout, AckError> {
        if phase == 0 || phase > self.max_phase {
            return Err(AckError::PhaseTooLarge(phase));
        }
        let p = &self.params;
        let n_est = pow2(u64::from(phase));
        let l_bound = label_bound(n_est, p.c);
        let req = FamilyRequest::Selective {
            k: n_est.min(l_bound),
            m: l_bound,
            strategy: p.sf_strategy,
        };
        let sf = family_cache_get_or_build(&req, p.family_seed, p.cache_dir.as_deref())?;
        // ceil(lg 2^(ic)) = ic
        let unit = n_est * u64::from(phase) * u64::from(p.c);
        Ok(BidirLayout {
            phase,
            n_est,
            label_bound: l_bound,
            discover: 1 + 2 * sf.len() as u64,
            traverse: 4 * unit,
            ack: 3 * unit,
            sf,
        })
    }
}

/// Engine budget: four times the rounds through the phase bound.
pub fn default_budget(plan: &BidirPlan, n: usize) -> Result<u64, AckError> {
    let last = crate::ack::phase_bound(plan.params.min_phase, n);
    Ok(plan
        .rounds_through(last.min(plan.max_phase()))?
        .saturating_mul(4))
}

pub fn bidir_factory(
    plan: Arc<BidirPlan>,
    source: Label,
) -> impl FnMut(NodeContext) -> Box<dyn NodeProtocol> {
    move |ctx| Box::new(BidirNode::new(ctx, Arc::clone(&plan), ctx.label == source))
}
