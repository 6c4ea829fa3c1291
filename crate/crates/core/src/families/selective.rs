//! (k,m)-selective and (k,m)-strongly-selective families.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::bits::{for_each_subset, mask, Bits};
use super::{
    attempt_rng, binomial, lg, verify_auto, FamilyError, FamilyKind, Provenance, SetFamily,
    Strategy, VerifyMode, DEFAULT_RETRY_BUDGET,
};

fn check_km(k: u64, m: u64) -> Result<(), FamilyError> {
    if k == 0 || k > m {
        return Err(FamilyError::BadParams(format!(
            "need 1 <= k <= m, got k={k} m={m}"
        )));
    }
    Ok(())
}

fn random_set(rng: &mut ChaCha8Rng, m: u64, p: f64) -> Vec<u64> {
    (1..=m).filter(|_| rng.gen_bool(p)).collect()
}

/// Number of sets drawn per density level for a randomized selective family.
fn selective_sets_per_density(k: u64, m: u64) -> usize {
    let levels = (k as f64).log2().ceil() as u64 + 1;
    let per =
        2.0 * k as f64 * lg(m as f64 / k as f64).max(1.0) / levels as f64 + 2.0 * lg(m as f64);
    (per.ceil() as usize).max(1)
}

pub fn build_selective(
    k: u64,
    m: u64,
    strategy: Strategy,
    seed: u64,
) -> Result<SetFamily, FamilyError> {
    build_selective_with_budget(k, m, strategy, seed, DEFAULT_RETRY_BUDGET)
}

pub fn build_selective_with_budget(
    k: u64,
    m: u64,
    strategy: Strategy,
    seed: u64,
    budget: u32,
) -> Result<SetFamily, FamilyError> {
    check_km(k, m)?;
    let kind = FamilyKind::Selective { k };
    if strategy == Strategy::Singleton {
        return Ok(SetFamily::singletons(m, kind));
    }
    let levels = (k as f64).log2().ceil() as u32;
    let per = selective_sets_per_density(k, m);
    for attempt in 0..budget {
        let mut rng = attempt_rng(seed, attempt);
        let mut sets = Vec::with_capacity(per * (levels as usize + 1));
        for j in 0..=levels {
            let p = 0.5f64.powi(j as i32);
            sets.extend((0..per).map(|_| random_set(&mut rng, m, p)));
        }
        let mut fam = SetFamily::from_sets(m, kind, sets);
        let (ok, how) = verify_auto(
            |limit| verify_selective(&fam, k, m, VerifyMode::Exhaustive { limit }),
            |trials, s| {
                verify_selective(&fam, k, m, VerifyMode::Sampled { trials, seed: s })
                    .unwrap_or(false)
            },
            seed,
        );
        if ok {
            fam.provenance = Provenance::RandomizedVerified {
                seed,
                attempts: attempt + 1,
            };
            fam.verification = how;
            return Ok(fam);
        }
    }
    Err(FamilyError::ConstructionFailed { attempts: budget })
}

pub fn build_strongly_selective(
    k: u64,
    m: u64,
    strategy: Strategy,
    seed: u64,
) -> Result<SetFamily, FamilyError> {
    build_strongly_selective_with_budget(k, m, strategy, seed, DEFAULT_RETRY_BUDGET)
}

pub fn build_strongly_selective_with_budget(
    k: u64,
    m: u64,
    strategy: Strategy,
    seed: u64,
    budget: u32,
) -> Result<SetFamily, FamilyError> {
    check_km(k, m)?;
    let kind = FamilyKind::StronglySelective { k };
    if strategy == Strategy::Singleton {
        return Ok(SetFamily::singletons(m, kind));
    }
    let count = (3.0 * (k * k) as f64 * lg(m as f64 / k as f64).max(1.0)).ceil() as usize;
    let p = 1.0 / k as f64;
    for attempt in 0..budget {
        let mut rng = attempt_rng(seed, attempt);
        let sets = (0..count).map(|_| random_set(&mut rng, m, p)).collect();
        let mut fam = SetFamily::from_sets(m, kind, sets);
        let (ok, how) = verify_auto(
            |limit| verify_strongly_selective(&fam, k, m, VerifyMode::Exhaustive { limit }),
            |trials, s| {
                verify_strongly_selective(&fam, k, m, VerifyMode::Sampled { trials, seed: s })
                    .unwrap_or(false)
            },
            seed,
        );
        if ok {
            fam.provenance = Provenance::RandomizedVerified {
                seed,
                attempts: attempt + 1,
            };
            fam.verification = how;
            return Ok(fam);
        }
    }
    Err(FamilyError::ConstructionFailed { attempts: budget })
}

/// Every nonempty subset of `[1..m]` of size at most `k` meets some set in
/// exactly one element.
///
/// Exhaustive mode first tries the strongly-selective test (which implies
/// selectivity and is cheap for sparse or singleton-rich families) and
/// otherwise enumerates every candidate subset.
pub fn verify_selective(
    f: &SetFamily,
    k: u64,
    m: u64,
    mode: VerifyMode,
) -> Result<bool, FamilyError> {
    check_km(k, m)?;
    if !f.is_well_formed() || f.universe_max > m {
        return Ok(false);
    }
    match mode {
        VerifyMode::Exhaustive { limit } => {
            if let Ok(true) = strongly_selective_exact(f, k, m, limit) {
                return Ok(true);
            }
            let needed: u64 = (1..=k)
                .map(|j| binomial(m, j))
                .fold(0u64, u64::saturating_add);
            if m > 64 || needed > limit {
                return Err(FamilyError::LimitExceeded { needed, limit });
            }
            let masks: Vec<u64> = f.sets.iter().map(|s| mask(s)).collect();
            let pool: Vec<u32> = (0..m as u32).collect();
            Ok((1..=k as usize).all(|size| {
                for_each_subset(&pool, size, |sub| {
                    masks.iter().any(|&s| (s & sub).count_ones() == 1)
                })
            }))
        }
        VerifyMode::Sampled { trials, seed } => {
            let bits: Vec<Bits> = f
                .sets
                .iter()
                .map(|s| Bits::from_elems(m, s.iter().copied()))
                .collect();
            let mut rng = attempt_rng(seed, 0);
            Ok((0..trials).all(|_| {
                let size = rng.gen_range(1..=k);
                let sub = Bits::from_elems(
                    m,
                    rand::seq::index::sample(&mut rng, m as usize, size as usize)
                        .into_iter()
                        .map(|i| i as u64 + 1),
                );
                bits.iter().any(|s| s.intersection_count(&sub) == 1)
            }))
        }
    }
}

/// For every subset of size at most `k` and every member `z` of it, some set
/// meets the subset in exactly `{z}`.
pub fn verify_strongly_selective(
    f: &SetFamily,
    k: u64,
    m: u64,
    mode: VerifyMode,
) -> Result<bool, FamilyError> {
    check_km(k, m)?;
    if !f.is_well_formed() || f.universe_max > m {
        return Ok(false);
    }
    match mode {
        VerifyMode::Exhaustive { limit } => strongly_selective_exact(f, k, m, limit),
        VerifyMode::Sampled { trials, seed } => {
            let bits: Vec<Bits> = f
                .sets
                .iter()
                .map(|s| Bits::from_elems(m, s.iter().copied()))
                .collect();
            let mut rng = attempt_rng(seed, 0);
            Ok((0..trials).all(|_| {
                let size = rng.gen_range(1..=k);
                let picked =
                    rand::seq::index::sample(&mut rng, m as usize, size as usize).into_vec();
                let z = picked[0] as u64 + 1;
                let rest = Bits::from_elems(m, picked[1..].iter().map(|&i| i as u64 + 1));
                f.sets
                    .iter()
                    .zip(&bits)
                    .any(|(s, b)| s.binary_search(&z).is_ok() && !b.intersects(&rest))
            }))
        }
    }
}

/// Exact test. The family fails iff for some `z` there is a set `T` of at
/// most `k-1` other elements hitting every family set that contains `z`
/// (then `T + z` is a subset in which `z` is never isolated). The search for
/// such a hitting set branches on the elements of the first unhit set, so
/// its cost is bounded by (set size)^(k-1) per element.
fn strongly_selective_exact(
    f: &SetFamily,
    k: u64,
    m: u64,
    limit: u64,
) -> Result<bool, FamilyError> {
    let mut budget = limit;
    for z in 1..=m {
        let containing: Vec<Vec<u64>> = f
            .sets
            .iter()
            .filter(|s| s.binary_search(&z).is_ok())
            .map(|s| s.iter().copied().filter(|&x| x != z).collect())
            .collect();
        let mut chosen = Vec::new();
        match hitting_set_exists(&containing, (k - 1) as usize, &mut chosen, &mut budget) {
            Some(true) => return Ok(false),
            Some(false) => {}
            None => {
                return Err(FamilyError::LimitExceeded {
                    needed: limit.saturating_add(1),
                    limit,
                })
            }
        }
    }
    Ok(true)
}

/// `Some(true)` if `chosen` can be extended by at most `room` elements to hit
/// every set. `None` when the step budget runs out.
fn hitting_set_exists(
    sets: &[Vec<u64>],
    room: usize,
    chosen: &mut Vec<u64>,
    budget: &mut u64,
) -> Option<bool> {
    if *budget == 0 {
        return None;
    }
    *budget -= 1;
    let unhit = sets.iter().find(|s| !s.iter().any(|x| chosen.contains(x)));
    let Some(unhit) = unhit else {
        return Some(true);
    };
    if room == 0 || unhit.is_empty() {
        return Some(false);
    }
    for &x in unhit {
        chosen.push(x);
        let r = hitting_set_exists(sets, room - 1, chosen, budget);
        chosen.pop();
        match r {
            Some(false) => {}
            other => return other,
        }
    }
    Some(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{Verification, DEFAULT_EXHAUSTIVE_LIMIT};

    const EX: VerifyMode = VerifyMode::Exhaustive {
        limit: DEFAULT_EXHAUSTIVE_LIMIT,
    };

    fn fam(m: u64, sets: Vec<Vec<u64>>) -> SetFamily {
        SetFamily::from_sets(m, FamilyKind::Selective { k: 1 }, sets)
    }

    /// Direct reading of the definitions over every subset of [1..m].
    fn oracle(f: &SetFamily, k: u64, m: u64, strong: bool) -> bool {
        (1u64..1 << m)
            .filter(|s| u64::from(s.count_ones()) <= k)
            .all(|sub| {
                let masks = f.sets.iter().map(|s| mask(s));
                if strong {
                    (0..m)
                        .filter(|z| sub >> z & 1 == 1)
                        .all(|z| masks.clone().any(|s| s & sub == 1 << z))
                } else {
                    masks.clone().any(|s| (s & sub).count_ones() == 1)
                }
            })
    }

    #[test]
    fn singleton_examples() {
        let f = build_selective(1, 4, Strategy::Singleton, 0).unwrap();
        assert_eq!(f.sets, vec![vec![1], vec![2], vec![3], vec![4]]);
        assert!(verify_selective(&f, 4, 4, EX).unwrap());
        let f = build_strongly_selective(2, 3, Strategy::Singleton, 0).unwrap();
        assert_eq!(f.sets, vec![vec![1], vec![2], vec![3]]);
        assert!(verify_strongly_selective(&f, 2, 3, EX).unwrap());
        let f = build_strongly_selective(2, 2, Strategy::Singleton, 0).unwrap();
        assert_eq!(f.sets, vec![vec![1], vec![2]]);
    }

    #[test]
    fn small_verifier_examples() {
        assert!(!verify_selective(&fam(2, vec![vec![1, 2]]), 2, 2, EX).unwrap());
        assert!(
            verify_strongly_selective(&fam(2, vec![vec![1, 2], vec![1], vec![2]]), 2, 2, EX)
                .unwrap()
        );
        assert!(!verify_strongly_selective(&fam(2, vec![vec![1, 2]]), 2, 2, EX).unwrap());
        assert!(!verify_selective(&fam(3, vec![]), 1, 3, EX).unwrap());
    }

    #[test]
    fn randomized_examples_verify() {
        let f = build_selective(3, 16, Strategy::Randomized, 7).unwrap();
        assert_eq!(f.verification, Verification::Exhaustive);
        assert!(oracle(&f, 3, 16, false));
        let f = build_strongly_selective(2, 8, Strategy::Randomized, 3).unwrap();
        assert!(oracle(&f, 2, 8, true));
    }

    #[test]
    fn bad_params() {
        assert!(matches!(
            build_selective(0, 4, Strategy::Singleton, 0),
            Err(FamilyError::BadParams(_))
        ));
        assert!(matches!(
            build_strongly_selective(5, 4, Strategy::Singleton, 0),
            Err(FamilyError::BadParams(_))
        ));
    }

    #[test]
    fn limit_is_enforced() {
        let f = fam(40, vec![(1..=40).collect()]);
        let r = verify_selective(&f, 8, 40, VerifyMode::Exhaustive { limit: 1000 });
        assert!(matches!(r, Err(FamilyError::LimitExceeded { .. })));
    }

    #[test]
    fn verifiers_agree_with_oracle_on_random_families() {
        let mut rng = attempt_rng(11, 0);
        for _ in 0..300 {
            let m = rng.gen_range(1..=7u64);
            let k = rng.gen_range(1..=m);
            let n_sets = rng.gen_range(0..=9);
            let p = rng.gen_range(0.1..0.9);
            let f = fam(m, (0..n_sets).map(|_| random_set(&mut rng, m, p)).collect());
            assert_eq!(
                verify_selective(&f, k, m, EX).unwrap(),
                oracle(&f, k, m, false)
            );
            assert_eq!(
                verify_strongly_selective(&f, k, m, EX).unwrap(),
                oracle(&f, k, m, true)
            );
        }
    }

    #[test]
    fn selective_property_shrinks_with_k() {
        let f = build_selective(4, 12, Strategy::Randomized, 5).unwrap();
        for k in 1..=4 {
            assert!(verify_selective(&f, k, 12, EX).unwrap());
        }
    }
}
