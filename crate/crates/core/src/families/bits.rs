//! Small bitset helpers for the verifiers.

/// Fixed-width bitset over `[1..universe]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Bits {
    words: Vec<u64>,
}

impl Bits {
    pub fn empty(universe: u64) -> Self {
        Self {
            words: vec![0; (universe as usize).div_ceil(64).max(1)],
        }
    }

    pub fn from_elems(universe: u64, elems: impl IntoIterator<Item = u64>) -> Self {
        let mut b = Self::empty(universe);
        for z in elems {
            b.insert(z);
        }
        b
    }

    pub fn insert(&mut self, z: u64) {
        let i = (z - 1) as usize;
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn intersection_count(&self, other: &Bits) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub fn intersects(&self, other: &Bits) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }
}

/// Single-word mask of a sorted element list over a universe of at most 64.
pub(crate) fn mask(elems: &[u64]) -> u64 {
    elems.iter().fold(0u64, |acc, &z| acc | 1 << (z - 1))
}

/// Calls `f` with every `size`-subset of `pool` (as a mask), stopping early
/// when `f` returns false. Returns false iff stopped early.
pub(crate) fn for_each_subset(pool: &[u32], size: usize, mut f: impl FnMut(u64) -> bool) -> bool {
    if size > pool.len() {
        return true;
    }
    if size == 0 {
        return f(0);
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        let m = idx.iter().fold(0u64, |acc, &i| acc | 1 << pool[i]);
        if !f(m) {
            return false;
        }
        // advance to the next combination in lexicographic order
        let mut pos = size;
        while pos > 0 {
            pos -= 1;
            if idx[pos] != pos + pool.len() - size {
                idx[pos] += 1;
                for j in pos + 1..size {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_enumeration_counts() {
        let pool: Vec<u32> = (0..6).collect();
        for size in 0..=7 {
            let mut n = 0u64;
            for_each_subset(&pool, size, |m| {
                assert_eq!(m.count_ones() as usize, size);
                n += 1;
                true
            });
            assert_eq!(n, super::super::binomial(6, size as u64));
        }
    }

    #[test]
    fn bits_intersections() {
        let a = Bits::from_elems(130, [1, 64, 65, 130]);
        let b = Bits::from_elems(130, [64, 130, 7]);
        assert_eq!(a.intersection_count(&b), 2);
        assert!(a.intersects(&b));
        assert_eq!(mask(&[1, 3]), 0b101);
    }
}
