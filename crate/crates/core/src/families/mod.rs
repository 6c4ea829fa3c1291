//! Transmission-schedule set families.
//!
//! A family is an ordered list of subsets of `[1..m]`; the index of a set is
//! the round offset at which its members transmit. Randomized constructions
//! are always checked before they are handed out: exhaustively when the
//! parameters are small enough, by sampling otherwise, and the family records
//! which of the two it got.

mod bits;
pub mod cache;
pub mod scf;
pub mod selective;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{family_cache_get_or_build, FamilyRequest, CACHE_DIR_ENV};
pub use scf::{build_scf, verify_scf, ScfParams};
pub use selective::{
    build_selective, build_strongly_selective, verify_selective, verify_strongly_selective,
};

/// Which combinatorial property a family is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    Selective { k: u64 },
    StronglySelective { k: u64 },
    SelectingColliding { l: u64, c: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// The `m` singletons; always correct, size `m`.
    Singleton,
    /// Random sets, reseeded until the verifier accepts.
    Randomized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Provenance {
    Singleton,
    RandomizedVerified { seed: u64, attempts: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    Exhaustive,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetFamily {
    pub universe_max: u64,
    pub kind: FamilyKind,
    pub provenance: Provenance,
    pub verification: Verification,
    /// Each set sorted ascending.
    pub sets: Vec<Vec<u64>>,
}

impl SetFamily {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn contains(&self, set: usize, element: u64) -> bool {
        self.sets[set].binary_search(&element).is_ok()
    }

    /// Bare family for verifier tests and hand-built schedules.
    pub fn from_sets(universe_max: u64, kind: FamilyKind, sets: Vec<Vec<u64>>) -> Self {
        let sets = sets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        Self {
            universe_max,
            kind,
            provenance: Provenance::Singleton,
            verification: Verification::Exhaustive,
            sets,
        }
    }

    pub fn singletons(m: u64, kind: FamilyKind) -> Self {
        Self::from_sets(m, kind, (1..=m).map(|z| vec![z]).collect())
    }

    pub fn is_well_formed(&self) -> bool {
        self.sets
            .iter()
            .all(|s| s.iter().all(|&z| (1..=self.universe_max).contains(&z)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyMode {
    /// Decide the property exactly; `limit` bounds the enumeration work.
    Exhaustive { limit: u64 },
    /// Check `trials` random instances.
    Sampled { trials: u64, seed: u64 },
}

pub const DEFAULT_EXHAUSTIVE_LIMIT: u64 = 60_000_000;
pub const DEFAULT_SAMPLE_TRIALS: u64 = 20_000;
pub const DEFAULT_RETRY_BUDGET: u32 = 200;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum FamilyError {
    #[error("parameters out of range: {0}")]
    BadParams(String),
    #[error("exhaustive verification needs {needed} steps, limit is {limit}")]
    LimitExceeded { needed: u64, limit: u64 },
    #[error("no verified family after {attempts} attempts")]
    ConstructionFailed { attempts: u32 },
    #[error("cache file is corrupt: {0}")]
    CacheCorrupt(String),
    #[error("cache io: {0}")]
    Io(String),
}

/// Exhaustive when the work fits the default limit, sampled otherwise.
pub(crate) fn verify_auto(
    exact: impl Fn(u64) -> Result<bool, FamilyError>,
    sampled: impl Fn(u64, u64) -> bool,
    seed: u64,
) -> (bool, Verification) {
    match exact(DEFAULT_EXHAUSTIVE_LIMIT) {
        Ok(ok) => (ok, Verification::Exhaustive),
        Err(_) => (
            sampled(DEFAULT_SAMPLE_TRIALS, seed ^ 0x5eed_5eed),
            Verification::Sampled,
        ),
    }
}

pub(crate) fn attempt_rng(seed: u64, attempt: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_add(u64::from(attempt).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    )
}

pub(crate) fn lg(x: f64) -> f64 {
    x.log2()
}

/// `C(n, k)`, saturating.
pub(crate) fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    acc as u64
}
