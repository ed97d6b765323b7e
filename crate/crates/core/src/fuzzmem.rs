// SPDX-License-Identifier: Apache-2.0

//! Rolling FIFO memory of exemplar blocks and preference pairs with
//! exponential recency sampling.

use std::collections::VecDeque;
use std::io::{self, BufRead, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::PreferencePair;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("iteration {got} is not after the newest stored iteration {newest}")]
    OutOfOrder { newest: u64, got: u64 },
    #[error("memory holds nothing to sample")]
    Empty,
    #[error("entry for iteration {0} has neither blocks nor pairs")]
    EmptyEntry(u64),
    #[error("window must hold at least one entry and lambda must be in (0, 1]")]
    BadParams,
    #[error("malformed memory checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry<B> {
    pub iteration: u64,
    pub blocks: Vec<B>,
    pub pairs: Vec<PreferencePair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzMemory<B> {
    window: VecDeque<MemoryEntry<B>>,
    capacity: usize,
    recency_lambda: f64,
}

impl<B: Clone> FuzzMemory<B> {
    pub fn new(capacity: usize, recency_lambda: f64) -> Result<Self, MemoryError> {
        if capacity == 0 || !(recency_lambda > 0.0 && recency_lambda <= 1.0) {
            return Err(MemoryError::BadParams);
        }
        Ok(FuzzMemory { window: VecDeque::with_capacity(capacity), capacity, recency_lambda })
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn recency_lambda(&self) -> f64 {
        self.recency_lambda
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry<B>> {
        self.window.iter()
    }

    pub fn iterations(&self) -> Vec<u64> {
        self.window.iter().map(|e| e.iteration).collect()
    }

    pub fn newest_iteration(&self) -> Option<u64> {
        self.window.back().map(|e| e.iteration)
    }

    /// Appends `entry`, evicting the oldest entry when full.
    pub fn update(&mut self, entry: MemoryEntry<B>) -> Result<(), MemoryError> {
        if entry.blocks.is_empty() && entry.pairs.is_empty() {
            return Err(MemoryError::EmptyEntry(entry.iteration));
        }
        if let Some(newest) = self.newest_iteration() {
            if entry.iteration <= newest {
                return Err(MemoryError::OutOfOrder { newest, got: entry.iteration });
            }
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(entry);
        Ok(())
    }

    /// Drops every stored pair; blocks stay.
    pub fn clear_pairs(&mut self) {
        for e in self.window.iter_mut() {
            e.pairs.clear();
        }
        self.window.retain(|e| !e.blocks.is_empty());
    }

    /// λ^age for each entry, age counted from the newest entry.
    pub fn weights(&self) -> Vec<f64> {
        let newest = self.newest_iteration().unwrap_or(0);
        self.window.iter().map(|e| self.recency_lambda.powf((newest - e.iteration) as f64)).collect()
    }

    fn sample_from<T: Clone, R: Rng + ?Sized>(
        &self,
        k: usize,
        rng: &mut R,
        items: impl Fn(&MemoryEntry<B>) -> &[T],
    ) -> Result<Vec<T>, MemoryError> {
        let weights: Vec<f64> = self
            .weights()
            .into_iter()
            .zip(&self.window)
            .map(|(w, e)| if items(e).is_empty() { 0.0 } else { w })
            .collect();
        let dist = WeightedIndex::new(&weights).map_err(|_| MemoryError::Empty)?;
        Ok((0..k)
            .map(|_| {
                let list = items(&self.window[dist.sample(rng)]);
                list[rng.gen_range(0..list.len())].clone()
            })
            .collect())
    }

    /// `k` blocks with replacement; entry weight λ^age, uniform within an entry.
    pub fn sample_blocks<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<B>, MemoryError> {
        self.sample_from(k, rng, |e| &e.blocks)
    }

    pub fn sample_pairs<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<PreferencePair>, MemoryError> {
        self.sample_from(k, rng, |e| &e.pairs)
    }
}

impl<B: Clone + Serialize + DeserializeOwned> FuzzMemory<B> {
    /// One JSON header line, then one line per entry, oldest first.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), MemoryError> {
        let header = serde_json::json!({ "capacity": self.capacity, "recency_lambda": self.recency_lambda });
        writeln!(w, "{header}")?;
        for e in &self.window {
            let line = serde_json::to_string(e).map_err(|e| MemoryError::Malformed(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, MemoryError> {
        let mut lines = r.lines();
        let header: serde_json::Value = match lines.next() {
            Some(l) => serde_json::from_str(&l?).map_err(|e| MemoryError::Malformed(e.to_string()))?,
            None => return Err(MemoryError::Malformed("missing header".into())),
        };
        let capacity = header["capacity"].as_u64().ok_or_else(|| MemoryError::Malformed("capacity".into()))?;
        let lambda = header["recency_lambda"].as_f64().ok_or_else(|| MemoryError::Malformed("lambda".into()))?;
        let mut mem = FuzzMemory::new(capacity as usize, lambda)?;
        for l in lines {
            let l = l?;
            if l.trim().is_empty() {
                continue;
            }
            let e: MemoryEntry<B> = serde_json::from_str(&l).map_err(|e| MemoryError::Malformed(e.to_string()))?;
            mem.update(e)?;
        }
        Ok(mem)
    }
}
