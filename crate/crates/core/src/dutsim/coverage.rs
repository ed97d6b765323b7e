// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::refmodel::{Cond, EdgeKind, LineSite, Observer, Privilege};

use super::universe::{site_id, Site, UNIVERSE_SIZE};

const WORDS: usize = UNIVERSE_SIZE.div_ceil(64);

/// Exact bitset over coverage point ids.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CoverageSet {
    bits: [u64; WORDS],
}

impl CoverageSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u32) {
        let id = id as usize;
        assert!(id < UNIVERSE_SIZE, "coverage id {id} outside universe");
        self.bits[id / 64] |= 1 << (id % 64);
    }

    pub fn contains(&self, id: u32) -> bool {
        let id = id as usize;
        id < UNIVERSE_SIZE && self.bits[id / 64] & (1 << (id % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn union_with(&mut self, other: &CoverageSet) {
        for (a, b) in self.bits.iter_mut().zip(other.bits) {
            *a |= b;
        }
    }

    pub fn union(&self, other: &CoverageSet) -> CoverageSet {
        let mut s = *self;
        s.union_with(other);
        s
    }

    pub fn difference(&self, other: &CoverageSet) -> CoverageSet {
        let mut s = *self;
        for (a, b) in s.bits.iter_mut().zip(other.bits) {
            *a &= !b;
        }
        s
    }

    pub fn intersection(&self, other: &CoverageSet) -> CoverageSet {
        let mut s = *self;
        for (a, b) in s.bits.iter_mut().zip(other.bits) {
            *a &= b;
        }
        s
    }

    pub fn is_subset(&self, other: &CoverageSet) -> bool {
        self.bits.iter().zip(other.bits).all(|(a, b)| a & !b == 0)
    }

    /// Ids in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &bits)| {
            let mut b = bits;
            std::iter::from_fn(move || {
                if b == 0 {
                    return None;
                }
                let t = b.trailing_zeros();
                b &= b - 1;
                Some((w * 64) as u32 + t)
            })
        })
    }

    pub fn to_vec(&self) -> Vec<u32> {
        self.iter().collect()
    }

    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        let mut s = Self::new();
        for id in ids {
            s.insert(id);
        }
        s
    }
}

impl std::fmt::Debug for CoverageSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<u32> for CoverageSet {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        Self::from_ids(iter)
    }
}

impl Serialize for CoverageSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for CoverageSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids = Vec::<u32>::deserialize(d)?;
        if let Some(bad) = ids.iter().find(|&&i| i as usize >= UNIVERSE_SIZE) {
            return Err(serde::de::Error::custom(format!("coverage id {bad} outside universe")));
        }
        Ok(Self::from_ids(ids))
    }
}

/// Observer that records every touched site.
#[derive(Default)]
pub struct CoverageObserver {
    pub set: CoverageSet,
}

impl Observer for CoverageObserver {
    fn line(&mut self, site: LineSite) {
        self.set.insert(site_id(Site::Line(site)));
    }

    fn cond(&mut self, pred: Cond, value: bool) {
        self.set.insert(site_id(Site::Cond(pred, value)));
    }

    fn edge(&mut self, from: Privilege, to: Privilege, kind: EdgeKind) {
        self.set.insert(site_id(Site::Edge(from, to, kind)));
    }
}
