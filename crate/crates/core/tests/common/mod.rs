#![allow(dead_code)]

use dynorm_core::preference::ProfileEntry;
use dynorm_core::{Alternative, PreferenceSet, Weight, WeightedProfile};
use num_bigint::BigInt;
use proptest::prelude::*;

/// A profile in raw form: per entry, the tier index of every alternative and an integer weight.
#[derive(Debug, Clone)]
pub struct RawProfile {
    pub n: usize,
    pub ranks: Vec<Vec<usize>>,
    pub counts: Vec<u32>,
}

pub fn label(i: usize) -> Alternative {
    Alternative::new(((b'A' + i as u8) as char).to_string())
}

impl RawProfile {
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn weight(&self, entry: usize) -> Weight {
        Weight::new(BigInt::from(self.counts[entry]), BigInt::from(self.total()))
    }

    pub fn set(&self, entry: usize) -> PreferenceSet {
        let ranks = &self.ranks[entry];
        let mut levels: Vec<usize> = ranks.clone();
        levels.sort_unstable();
        levels.dedup();
        let tiers = levels
            .iter()
            .map(|lv| {
                (0..self.n)
                    .filter(|&a| ranks[a] == *lv)
                    .map(label)
                    .collect()
            })
            .collect();
        PreferenceSet::new(tiers)
    }

    pub fn profile(&self) -> WeightedProfile {
        let entries = (0..self.counts.len())
            .map(|i| ProfileEntry {
                set: self.set(i),
                weight: self.weight(i),
            })
            .collect();
        WeightedProfile::coherent((0..self.n).map(label).collect(), entries)
            .expect("generated profiles are coherent")
    }

    /// Total weight of entries ranking `x` strictly above `y`.
    pub fn support(&self, x: usize, y: usize) -> Weight {
        (0..self.counts.len())
            .filter(|&e| self.ranks[e][x] < self.ranks[e][y])
            .map(|e| self.weight(e))
            .sum()
    }

    pub fn tied(&self, x: usize, y: usize) -> Weight {
        (0..self.counts.len())
            .filter(|&e| self.ranks[e][x] == self.ranks[e][y])
            .map(|e| self.weight(e))
            .sum()
    }

    /// Weighted count of alternatives below minus alternatives above.
    pub fn borda(&self, x: usize) -> Weight {
        (0..self.counts.len())
            .map(|e| {
                let r = &self.ranks[e];
                let below = (0..self.n).filter(|&y| r[y] > r[x]).count() as i64;
                let above = (0..self.n).filter(|&y| r[y] < r[x]).count() as i64;
                self.weight(e) * BigInt::from(below - above)
            })
            .sum()
    }

    pub fn condorcet_winner(&self) -> Option<usize> {
        (0..self.n)
            .find(|&x| (0..self.n).all(|y| y == x || self.support(x, y) > self.support(y, x)))
    }

    pub fn condorcet_loser(&self) -> Option<usize> {
        if self.n < 2 {
            return None;
        }
        (0..self.n)
            .find(|&x| (0..self.n).all(|y| y == x || self.support(x, y) < self.support(y, x)))
    }
}

pub fn raw_profile(max_alts: usize, max_sets: usize) -> impl Strategy<Value = RawProfile> {
    (2..=max_alts, 1..=max_sets).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(prop::collection::vec(0..n, n), m),
            prop::collection::vec(1u32..=20, m),
        )
            .prop_map(move |(ranks, counts)| RawProfile { n, ranks, counts })
    })
}

/// Strict rankings only.
pub fn strict_profile(max_alts: usize, max_sets: usize) -> impl Strategy<Value = RawProfile> {
    (2..=max_alts, 1..=max_sets).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(Just((0..n).collect::<Vec<usize>>()).prop_shuffle(), m),
            prop::collection::vec(1u32..=20, m),
        )
            .prop_map(move |(ranks, counts)| RawProfile { n, ranks, counts })
    })
}
