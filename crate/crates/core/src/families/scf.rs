//! Selecting-colliding families.
//!
//! For a listener with known in-neighbors `N_k` (fewer than `l`) and unknown
//! in-neighbors `N_uk`, some round of the family must either isolate one
//! unknown neighbor while every known one is silent (condition A), or let
//! exactly one known neighbor transmit together with at least one unknown
//! neighbor (condition B). Under B the listener hears silence although it
//! expected exactly one sender, and so infers the collision.
//!
//! The construction is the union of a dense random part, one block per
//! sampling rate `1/m` for `m = 2, 4, .., 2^(floor(lg l)+1)` with
//! `ceil(d * l * m * lg l)` sets each, and a strongly selective family
//! `SSF(2l, l^c)` for the small-`N_uk` case.

use rand::Rng;

use super::bits::{for_each_subset, mask, Bits};
use super::selective::build_strongly_selective;
use super::{
    attempt_rng, binomial, lg, verify_auto, FamilyError, FamilyKind, Provenance, SetFamily,
    Strategy, VerifyMode, DEFAULT_RETRY_BUDGET,
};
use crate::model::label_bound;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScfParams {
    pub l: u64,
    pub c: u32,
    /// Density-count constant of the random part.
    pub d: f64,
    pub ssf_strategy: Strategy,
    pub seed: u64,
    pub retry_budget: u32,
}

impl ScfParams {
    pub fn new(l: u64, c: u32, d: f64, seed: u64) -> Self {
        Self {
            l,
            c,
            d,
            ssf_strategy: Strategy::Singleton,
            seed,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }
}

pub const DEFAULT_D: f64 = 4.0;

/// Sampling rates `m` and block sizes `t_m` of the random part.
pub fn scf_blocks(l: u64, d: f64) -> Vec<(u64, usize)> {
    let top = (l as f64).log2().floor() as u32 + 1;
    (1..=top)
        .map(|j| {
            let m = 1u64 << j;
            (m, (d * l as f64 * m as f64 * lg(l as f64)).ceil() as usize)
        })
        .collect()
}

pub fn build_scf(l: u64, c: u32, d: f64, seed: u64) -> Result<SetFamily, FamilyError> {
    build_scf_with(&ScfParams::new(l, c, d, seed))
}

pub fn build_scf_with(p: &ScfParams) -> Result<SetFamily, FamilyError> {
    if p.l < 2 || p.c < 1 || p.d <= 0.0 {
        return Err(FamilyError::BadParams(format!(
            "need l >= 2, c >= 1, d > 0; got l={} c={} d={}",
            p.l, p.c, p.d
        )));
    }
    let universe = label_bound(p.l, p.c);
    if universe > 1 << 24 {
        return Err(FamilyError::BadParams(format!(
            "universe l^c = {universe} too large"
        )));
    }
    let kind = FamilyKind::SelectingColliding { l: p.l, c: p.c };
    let ssf_k = (2 * p.l).min(universe);
    let blocks = scf_blocks(p.l, p.d);
    for attempt in 0..p.retry_budget {
        let mut rng = attempt_rng(p.seed, attempt);
        let mut sets = Vec::with_capacity(blocks.iter().map(|b| b.1).sum());
        for &(m, t) in &blocks {
            let prob = 1.0 / m as f64;
            for _ in 0..t {
                sets.push(sample_sparse(&mut rng, universe, prob));
            }
        }
        let ssf = build_strongly_selective(
            ssf_k,
            universe,
            p.ssf_strategy,
            p.seed.wrapping_add(u64::from(attempt)),
        )?;
        sets.extend(ssf.sets);
        let mut fam = SetFamily::from_sets(universe, kind, sets);
        let (ok, how) = verify_auto(
            |limit| verify_scf(&fam, p.l, p.c, VerifyMode::Exhaustive { limit }),
            |trials, s| {
                verify_scf(&fam, p.l, p.c, VerifyMode::Sampled { trials, seed: s }).unwrap_or(false)
            },
            p.seed,
        );
        if ok {
            fam.provenance = Provenance::RandomizedVerified {
                seed: p.seed,
                attempts: attempt + 1,
            };
            fam.verification = how;
            return Ok(fam);
        }
    }
    Err(FamilyError::ConstructionFailed {
        attempts: p.retry_budget,
    })
}

/// Bernoulli(prob) subset of `[1..universe]` drawn by geometric skips.
fn sample_sparse(rng: &mut impl Rng, universe: u64, prob: f64) -> Vec<u64> {
    if prob >= 1.0 {
        return (1..=universe).collect();
    }
    let log_q = (1.0 - prob).ln();
    let mut out = Vec::new();
    let mut pos = 0u64;
    loop {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        pos += (u.ln() / log_q).floor() as u64 + 1;
        if pos > universe {
            return out;
        }
        out.push(pos);
    }
}

fn cond_a(k_hits: u32, uk_hits: u32) -> bool {
    k_hits == 0 && uk_hits == 1
}

fn cond_b(k_hits: u32, uk_hits: u32) -> bool {
    k_hits == 1 && uk_hits >= 1
}

/// Checks the selecting-colliding property over disjoint `(N_k, N_uk)` with
/// `|N_k| < l`:
/// * every nonempty `N_uk` with `|N_uk| < l` is served by condition A or B;
/// * every `N_uk` with `|N_uk| = l` and nonempty `N_k` is served by condition B.
///
/// Condition B only gets easier as `N_uk` grows, so the second clause covers
/// all larger unknown sets. An empty `N_k` cannot satisfy B at all; larger
/// unknown sets with no known neighbor are left to condition A and are not
/// checked here.
pub fn verify_scf(f: &SetFamily, l: u64, c: u32, mode: VerifyMode) -> Result<bool, FamilyError> {
    if l < 2 {
        return Err(FamilyError::BadParams(format!("need l >= 2, got {l}")));
    }
    let universe = label_bound(l, c);
    if !f.is_well_formed() || f.universe_max > universe {
        return Ok(false);
    }
    match mode {
        VerifyMode::Exhaustive { limit } => {
            let needed = scf_pair_count(l, universe);
            if universe > 64 || needed > limit {
                return Err(FamilyError::LimitExceeded { needed, limit });
            }
            let masks: Vec<u64> = f.sets.iter().map(|s| mask(s)).collect();
            let pool: Vec<u32> = (0..universe as u32).collect();
            let ok = (0..l as usize).all(|ks| {
                for_each_subset(&pool, ks, |known| {
                    let a_sets: Vec<u64> =
                        masks.iter().copied().filter(|s| s & known == 0).collect();
                    let b_sets: Vec<u64> = masks
                        .iter()
                        .copied()
                        .filter(|s| (s & known).count_ones() == 1)
                        .collect();
                    let rest: Vec<u32> = pool
                        .iter()
                        .copied()
                        .filter(|&i| known >> i & 1 == 0)
                        .collect();
                    let max_uk = if ks == 0 { l as usize - 1 } else { l as usize };
                    (1..=max_uk).all(|us| {
                        for_each_subset(&rest, us, |unknown| {
                            let by_b = b_sets.iter().any(|s| s & unknown != 0);
                            by_b || (us < l as usize
                                && a_sets.iter().any(|s| (s & unknown).count_ones() == 1))
                        })
                    })
                })
            });
            Ok(ok)
        }
        VerifyMode::Sampled { trials, seed } => {
            let bits: Vec<Bits> = f
                .sets
                .iter()
                .map(|s| Bits::from_elems(universe, s.iter().copied()))
                .collect();
            let mut rng = attempt_rng(seed, 0);
            Ok((0..trials).all(|_| {
                let ks = rng.gen_range(0..l.min(universe));
                let max_uk = if ks == 0 { l - 1 } else { l };
                let us = rng.gen_range(1..=max_uk.min(universe - ks));
                let picked =
                    rand::seq::index::sample(&mut rng, universe as usize, (ks + us) as usize)
                        .into_vec();
                let known = Bits::from_elems(
                    universe,
                    picked[..ks as usize].iter().map(|&i| i as u64 + 1),
                );
                let unknown = Bits::from_elems(
                    universe,
                    picked[ks as usize..].iter().map(|&i| i as u64 + 1),
                );
                bits.iter().any(|s| {
                    let kh = s.intersection_count(&known);
                    let uh = s.intersection_count(&unknown);
                    cond_b(kh, uh) || (us < l && cond_a(kh, uh))
                })
            }))
        }
    }
}

/// Number of `(N_k, N_uk)` pairs the exhaustive check visits.
pub fn scf_pair_count(l: u64, universe: u64) -> u64 {
    let mut total = 0u64;
    for ks in 0..l {
        let max_uk = if ks == 0 { l - 1 } else { l };
        let uk: u64 = (1..=max_uk)
            .map(|us| binomial(universe.saturating_sub(ks), us))
            .fold(0, u64::saturating_add);
        total = total.saturating_add(binomial(universe, ks).saturating_mul(uk));
    }
    total
}
