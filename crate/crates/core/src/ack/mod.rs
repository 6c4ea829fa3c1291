//! Acknowledged broadcast and gossip on strongly connected networks.
//!
//! All three protocols run in phases `i = min_phase, min_phase + 1, ..` with
//! size estimate `N = 2^i` and label bound `L = 2^(i*c)`. Stage boundaries are
//! pure functions of `i`, so every node stays in step with the global round
//! counter whether or not it hears anything.

pub mod broadcast;
pub mod gossip;

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{NodeContext, NodeProtocol};
use crate::families::{family_cache_get_or_build, FamilyError, FamilyRequest, SetFamily, Strategy};
use crate::model::{label_bound, pow2, Label};
use crate::vanilla::{
    round_robin_broadcast, round_robin_gossip, ssf_gossip, VanillaError, VanillaSchedule,
};

pub use broadcast::AckBroadcastNode;
pub use gossip::AckGossipNode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AckProtocol {
    /// Acknowledged broadcast.
    Broadcast,
    /// Gossip with a strongly selective Stage 3, collision detection required.
    GossipCd,
    /// Gossip with a selecting-colliding Stage 3, no collision detection.
    GossipNoCd,
}

/// Which vanilla gossip the stages run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GossipVariant {
    #[default]
    RoundRobin,
    /// Sweeps over a randomized `SSF(N + 1, L)`.
    Ssf { seed: u64 },
}

/// Largest phase whose label bound is still simulated.
pub const MAX_PHASE_BITS: u64 = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AckParams {
    pub c: u32,
    pub min_phase: u32,
    pub gossip: GossipVariant,
    /// Strategy for the Stage-3 strongly selective family of CD gossip.
    pub ssf_strategy: Strategy,
    /// Strategy for the neighbor-discovery selective family of bidirectional broadcast.
    pub sf_strategy: Strategy,
    /// Density-count constant of the selecting-colliding family.
    pub scf_d: f64,
    pub family_seed: u64,
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for AckParams {
    fn default() -> Self {
        Self {
            c: 2,
            min_phase: 4,
            gossip: GossipVariant::RoundRobin,
            ssf_strategy: Strategy::Singleton,
            sf_strategy: Strategy::Randomized,
            scf_d: crate::families::scf::DEFAULT_D,
            family_seed: 1,
            cache_dir: None,
        }
    }
}

impl AckParams {
    pub fn with_c(c: u32) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<u32, AckError> {
        if self.c == 0 {
            return Err(AckError::BadParams("c must be at least 1".into()));
        }
        if self.min_phase == 0 {
            return Err(AckError::BadParams("min_phase must be at least 1".into()));
        }
        if self.scf_d.is_nan() || self.scf_d <= 0.0 {
            return Err(AckError::BadParams("scf_d must be positive".into()));
        }
        let max_phase = (MAX_PHASE_BITS / u64::from(self.c)) as u32;
        if self.min_phase > max_phase {
            return Err(AckError::PhaseTooLarge(self.min_phase));
        }
        Ok(max_phase)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AckError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("phase {0} exceeds the simulated label range")]
    PhaseTooLarge(u32),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Vanilla(#[from] VanillaError),
}

/// Stage layout of one phase.
#[derive(Clone, Debug)]
pub struct PhaseLayout {
    pub phase: u32,
    pub n_est: u64,
    pub label_bound: u64,
    pub rb: VanillaSchedule,
    pub rg: VanillaSchedule,
    /// Stage-3 schedule of the gossip protocols.
    pub stage3: Option<Arc<SetFamily>>,
    /// Length of every stage, in order.
    pub stages: Vec<u64>,
}

impl PhaseLayout {
    pub fn len(&self) -> u64 {
        self.stages.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(stage index, position within the stage)` of a phase offset.
    pub fn locate(&self, mut offset: u64) -> Option<(usize, u64)> {
        for (k, &len) in self.stages.iter().enumerate() {
            if offset < len {
                return Some((k, offset));
            }
            offset -= len;
        }
        None
    }
}

/// Phase layouts of one protocol, built on first use and shared by all nodes.
#[derive(Debug)]
pub struct PhasePlan {
    pub protocol: AckProtocol,
    pub params: AckParams,
    max_phase: u32,
    layouts: Vec<OnceLock<Result<Arc<PhaseLayout>, AckError>>>,
}

impl PhasePlan {
    pub fn new(protocol: AckProtocol, params: AckParams) -> Result<Arc<Self>, AckError> {
        let max_phase = params.validate()?;
        let layouts = (0..=max_phase).map(|_| OnceLock::new()).collect();
        Ok(Arc::new(Self {
            protocol,
            params,
            max_phase,
            layouts,
        }))
    }

    pub fn max_phase(&self) -> u32 {
        self.max_phase
    }

    pub fn layout(&self, phase: u32) -> Result<Arc<PhaseLayout>, AckError> {
        let slot = self
            .layouts
            .get(phase as usize)
            .ok_or(AckError::PhaseTooLarge(phase))?;
        slot.get_or_init(|| self.build(phase).map(Arc::new)).clone()
    }

    /// Rounds from the start of the run to the end of `last_phase`.
    pub fn rounds_through(&self, last_phase: u32) -> Result<u64, AckError> {
        (self.params.min_phase..=last_phase)
            .try_fold(0u64, |acc, i| Ok(acc.saturating_add(self.layout(i)?.len())))
    }

    fn build(&self, phase: u32) -> Result<PhaseLayout, AckError> {
        if phase == 0 || phase > self.max_phase {
            return Err(AckError::PhaseTooLarge(phase));
        }
        let p = &self.params;
        let n_est = pow2(u64::from(phase));
        let l_bound = label_bound(n_est, p.c);
        let rg = match p.gossip {
            GossipVariant::RoundRobin => round_robin_gossip(n_est, l_bound),
            GossipVariant::Ssf { seed } => {
                let req = if n_est + 1 >= l_bound {
                    FamilyRequest::StronglySelective {
                        k: l_bound,
                        m: l_bound,
                        strategy: Strategy::Singleton,
                    }
                } else {
                    FamilyRequest::StronglySelective {
                        k: n_est + 1,
                        m: l_bound,
                        strategy: Strategy::Randomized,
                    }
                };
                ssf_gossip(
                    n_est,
                    l_bound,
                    family_cache_get_or_build(&req, seed, p.cache_dir.as_deref())?,
                )?
            }
        };
        let rb = round_robin_broadcast(n_est, l_bound);
        let (nb, nrg) = (rb.rounds(), rg.rounds());
        let (stages, stage3) = match self.protocol {
            // Stage 5 opens with a round reserved for the source, which may be
            // above the label bound and so own no round-robin slot.
            AckProtocol::Broadcast => (vec![nb, nrg, nrg, nrg, nrg, nb + 1], None),
            AckProtocol::GossipCd => {
                let k = (n_est + 1).min(l_bound);
                let req = FamilyRequest::StronglySelective {
                    k,
                    m: l_bound,
                    strategy: p.ssf_strategy,
                };
                let f = family_cache_get_or_build(&req, p.family_seed, p.cache_dir.as_deref())?;
                (vec![nrg, nrg, f.len() as u64, nrg, nrg], Some(f))
            }
            AckProtocol::GossipNoCd => {
                let req = FamilyRequest::Scf {
                    l: n_est,
                    c: p.c,
                    d: p.scf_d,
                };
                let f = family_cache_get_or_build(&req, p.family_seed, p.cache_dir.as_deref())?;
                (vec![nrg, nrg, f.len() as u64, nrg, nrg], Some(f))
            }
        };
        Ok(PhaseLayout {
            phase,
            n_est,
            label_bound: l_bound,
            rb,
            rg,
            stage3,
            stages,
        })
    }
}

/// Phase at which a correct run must have finished: `max(min_phase, ceil(lg n))`.
pub fn phase_bound(min_phase: u32, n: usize) -> u32 {
    min_phase.max(ceil_lg(n as u64))
}

pub(crate) fn ceil_lg(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Engine budget: four times the rounds through the phase bound. Looking no
/// further keeps the next phase's family from being built for nothing.
pub fn default_budget(plan: &PhasePlan, n: usize) -> Result<u64, AckError> {
    let last = phase_bound(plan.params.min_phase, n);
    Ok(plan
        .rounds_through(last.min(plan.max_phase()))?
        .saturating_mul(4))
}

pub fn broadcast_factory(
    plan: Arc<PhasePlan>,
    source: Label,
) -> impl FnMut(NodeContext) -> Box<dyn NodeProtocol> {
    move |ctx| {
        Box::new(AckBroadcastNode::new(
            ctx,
            Arc::clone(&plan),
            ctx.label == source,
        ))
    }
}

pub fn gossip_factory(plan: Arc<PhasePlan>) -> impl FnMut(NodeContext) -> Box<dyn NodeProtocol> {
    move |ctx| Box::new(AckGossipNode::new(ctx, Arc::clone(&plan)))
}

/// Tracks a node's position in the phase sequence.
#[derive(Clone, Debug)]
pub(crate) struct PhaseCursor {
    pub phase: u32,
    pub start: u64,
    pub layout: Arc<PhaseLayout>,
}

impl PhaseCursor {
    pub fn first(plan: &PhasePlan) -> Result<Self, AckError> {
        let phase = plan.params.min_phase;
        Ok(Self {
            phase,
            start: 0,
            layout: plan.layout(phase)?,
        })
    }

    pub fn end(&self) -> u64 {
        self.start + self.layout.len()
    }

    pub fn advance(&mut self, plan: &PhasePlan) -> Result<(), AckError> {
        let start = self.end();
        let layout = plan.layout(self.phase + 1)?;
        self.phase += 1;
        self.start = start;
        self.layout = layout;
        Ok(())
    }

    pub fn locate(&self, round: u64) -> (usize, u64) {
        self.layout
            .locate(round - self.start)
            .expect("round inside the current phase")
    }
}
