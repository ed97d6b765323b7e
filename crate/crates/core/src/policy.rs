// SPDX-License-Identifier: Apache-2.0

//! Autoregressive next-token policy over logit tables.
//!
//! The logits for a context are the sum of every materialized feature row
//! that fires for it: a unigram row, rows keyed by the last one, two and three
//! tokens, and a structural row keyed by the current instruction's head token
//! and operand slot. Contexts whose higher-order rows were never materialized
//! fall back to the lower-order rows that do exist.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("token {0} outside the vocabulary")]
    TokenOutOfRange(u16),
    #[error("empty sequence")]
    EmptySequence,
    #[error("empty preference batch")]
    EmptyBatch,
    #[error("checkpoint vocabulary hash {found} does not match {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// n-gram order: rows keyed by up to `order - 1` previous tokens.
    pub order: usize,
    /// Higher-order rows need this many pretraining occurrences.
    pub min_count: u32,
    /// Enables the (head token, operand slot) feature.
    pub structural: bool,
    /// Token that ends an instruction.
    pub eoi: u16,
    pub temperature: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { order: 4, min_count: 2, structural: true, eoi: 0, temperature: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub reward_scale: f64,
    pub margin: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams { reward_scale: 10.0, margin: 0.8 }
    }
}

/// Identity of one logit row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKey {
    Unigram,
    Prev1(u16),
    Prev2(u16, u16),
    Prev3(u16, u16, u16),
    /// Head token of the current instruction and the slot being predicted.
    Slot(u16, u8),
    /// Head token of the previous instruction, at an instruction boundary.
    Boundary(u16),
    /// Empty context.
    Start,
}

impl FeatureKey {
    fn pack(self) -> (u8, [u16; 3]) {
        match self {
            FeatureKey::Unigram => (0, [0; 3]),
            FeatureKey::Prev1(a) => (1, [a, 0, 0]),
            FeatureKey::Prev2(a, b) => (2, [a, b, 0]),
            FeatureKey::Prev3(a, b, c) => (3, [a, b, c]),
            FeatureKey::Slot(h, s) => (4, [h, s as u16, 0]),
            FeatureKey::Boundary(h) => (5, [h, 0, 0]),
            FeatureKey::Start => (6, [0; 3]),
        }
    }

    fn unpack(tag: u8, v: [u16; 3]) -> Option<FeatureKey> {
        Some(match tag {
            0 => FeatureKey::Unigram,
            1 => FeatureKey::Prev1(v[0]),
            2 => FeatureKey::Prev2(v[0], v[1]),
            3 => FeatureKey::Prev3(v[0], v[1], v[2]),
            4 => FeatureKey::Slot(v[0], v[1] as u8),
            5 => FeatureKey::Boundary(v[0]),
            6 => FeatureKey::Start,
            _ => return None,
        })
    }

    fn is_higher_order(self) -> bool {
        matches!(self, FeatureKey::Prev2(..) | FeatureKey::Prev3(..))
    }
}

/// Fuzzing stage a pair or iteration belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Stage {
    Grm,
    Dut,
}

/// (winner, loser) blocks with the contexts they were generated from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub winner_context: Vec<u16>,
    pub winner: Vec<u16>,
    pub loser_context: Vec<u16>,
    pub loser: Vec<u16>,
    pub iteration: u64,
    pub stage: Stage,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainReport {
    pub initial_nll: f64,
    pub final_nll: f64,
    pub epochs: usize,
}

const MAX_SLOT: usize = 31;
const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const CHECKPOINT_MAGIC: &[u8; 8] = b"GRMPOL01";

#[derive(Clone, Debug)]
pub struct Policy {
    pub config: PolicyConfig,
    vocab_size: usize,
    vocab_hash: String,
    rows: HashMap<FeatureKey, Vec<f64>>,
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Policy {
    /// Uniform policy with no materialized rows except the unigram row.
    pub fn uniform(vocab_size: usize, vocab_hash: impl Into<String>, config: PolicyConfig) -> Self {
        let mut rows = HashMap::new();
        rows.insert(FeatureKey::Unigram, vec![0.0; vocab_size]);
        Policy { config, vocab_size, vocab_hash: vocab_hash.into(), rows }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Every candidate feature for predicting the token after `ctx`.
    pub fn features(&self, ctx: &[u16]) -> Vec<FeatureKey> {
        let n = ctx.len();
        let mut out = Vec::with_capacity(6);
        out.push(FeatureKey::Unigram);
        if n == 0 {
            out.push(FeatureKey::Start);
        }
        if n >= 1 && self.config.order >= 2 {
            out.push(FeatureKey::Prev1(ctx[n - 1]));
        }
        if n >= 2 && self.config.order >= 3 {
            out.push(FeatureKey::Prev2(ctx[n - 2], ctx[n - 1]));
        }
        if n >= 3 && self.config.order >= 4 {
            out.push(FeatureKey::Prev3(ctx[n - 3], ctx[n - 2], ctx[n - 1]));
        }
        if self.config.structural {
            let eoi = self.config.eoi;
            let since = ctx.iter().rev().take(MAX_SLOT + 2).position(|&t| t == eoi);
            match since {
                Some(0) => {
                    // At a boundary: key on the head of the instruction just finished.
                    let prev = &ctx[..n - 1];
                    let start = prev.iter().rposition(|&t| t == eoi).map_or(0, |p| p + 1);
                    if start < prev.len() {
                        out.push(FeatureKey::Boundary(prev[start]));
                    }
                }
                Some(k) => out.push(FeatureKey::Slot(ctx[n - k], k.min(MAX_SLOT) as u8)),
                None if n == 0 => {}
                None if n <= MAX_SLOT => out.push(FeatureKey::Slot(ctx[0], n as u8)),
                None => {}
            }
        }
        out
    }

    fn active(&self, ctx: &[u16]) -> Vec<FeatureKey> {
        self.features(ctx).into_iter().filter(|k| self.rows.contains_key(k)).collect()
    }

    fn logits_for(&self, keys: &[FeatureKey]) -> Vec<f64> {
        let mut l = vec![0.0; self.vocab_size];
        for k in keys {
            for (a, b) in l.iter_mut().zip(&self.rows[k]) {
                *a += b;
            }
        }
        l
    }

    pub fn logits(&self, ctx: &[u16]) -> Vec<f64> {
        self.logits_for(&self.active(ctx))
    }

    /// Next-token distribution at temperature 1.
    pub fn probs(&self, ctx: &[u16]) -> Vec<f64> {
        let mut l = self.logits(ctx);
        softmax_in_place(&mut l);
        l
    }

    /// Draws from softmax(logits / temperature); argmax when temperature is ~0.
    pub fn sample_next<R: Rng + ?Sized>(&self, ctx: &[u16], rng: &mut R) -> u16 {
        self.sample_with_temperature(ctx, self.config.temperature, rng)
    }

    pub fn sample_with_temperature<R: Rng + ?Sized>(&self, ctx: &[u16], t: f64, rng: &mut R) -> u16 {
        let mut l = self.logits(ctx);
        if t < 1e-6 {
            let mut best = 0;
            for (i, &v) in l.iter().enumerate() {
                if v > l[best] {
                    best = i;
                }
            }
            return best as u16;
        }
        for x in l.iter_mut() {
            *x /= t;
        }
        softmax_in_place(&mut l);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in l.iter().enumerate() {
            acc += p;
            if u < acc {
                return i as u16;
            }
        }
        (self.vocab_size - 1) as u16
    }

    fn check_tokens(&self, toks: &[u16]) -> Result<(), PolicyError> {
        match toks.iter().find(|&&t| t as usize >= self.vocab_size) {
            Some(&t) => Err(PolicyError::TokenOutOfRange(t)),
            None => Ok(()),
        }
    }

    /// Σ log π(t_i | context, t_<i).
    pub fn sequence_logprob(&self, context: &[u16], seq: &[u16]) -> f64 {
        let mut ctx = context.to_vec();
        let mut total = 0.0;
        for &t in seq {
            let p = self.probs(&ctx);
            total += p[t as usize].ln();
            ctx.push(t);
        }
        total
    }

    /// Length-normalized, scaled log-likelihood.
    pub fn sequence_reward(&self, context: &[u16], seq: &[u16], rp: &RewardParams) -> Result<f64, PolicyError> {
        if seq.is_empty() {
            return Err(PolicyError::EmptySequence);
        }
        self.check_tokens(context)?;
        self.check_tokens(seq)?;
        Ok(rp.reward_scale / seq.len() as f64 * self.sequence_logprob(context, seq))
    }

    /// Mean per-token negative log-likelihood over documents.
    pub fn nll(&self, corpus: &[Vec<u16>]) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for doc in corpus {
            total -= self.sequence_logprob(&[], doc);
            n += doc.len();
        }
        total / n.max(1) as f64
    }

    /// Fits the tables to `corpus` by full-batch gradient descent on the NLL.
    ///
    /// Each row's gradient is divided by the number of positions that used it
    /// and fed to Adam with step size `lr`.
    pub fn pretrain(
        corpus: &[Vec<u16>],
        vocab_size: usize,
        vocab_hash: impl Into<String>,
        config: PolicyConfig,
        epochs: usize,
        lr: f64,
    ) -> Result<(Policy, PretrainReport), PolicyError> {
        if corpus.iter().all(|d| d.is_empty()) {
            return Err(PolicyError::EmptyCorpus);
        }
        let mut policy = Policy::uniform(vocab_size, vocab_hash, config);
        for doc in corpus {
            policy.check_tokens(doc)?;
        }
        // Materialize rows by occurrence count.
        let mut counts: HashMap<FeatureKey, u32> = HashMap::new();
        let mut positions: Vec<(Vec<FeatureKey>, u16)> = Vec::new();
        for doc in corpus {
            for i in 0..doc.len() {
                let keys = policy.features(&doc[..i]);
                for k in &keys {
                    *counts.entry(*k).or_default() += 1;
                }
                positions.push((keys, doc[i]));
            }
        }
        let min = policy.config.min_count;
        for (k, c) in &counts {
            if !k.is_higher_order() || *c >= min {
                policy.rows.insert(*k, vec![0.0; vocab_size]);
            }
        }
        let mut slots: HashMap<FeatureKey, usize> = HashMap::new();
        let mut order: Vec<FeatureKey> = policy.rows.keys().copied().collect();
        order.sort();
        for (i, k) in order.iter().enumerate() {
            slots.insert(*k, i);
        }
        let positions: Vec<(Vec<usize>, u16)> = positions
            .into_iter()
            .map(|(keys, t)| (keys.iter().filter_map(|k| slots.get(k).copied()).collect(), t))
            .collect();
        let mut uses = vec![0f64; order.len()];
        for (ks, _) in &positions {
            for &k in ks {
                uses[k] += 1.0;
            }
        }
        let mut table: Vec<Vec<f64>> = order.iter().map(|k| policy.rows[k].clone()).collect();
        let nll_of = |table: &Vec<Vec<f64>>| -> f64 {
            let mut total = 0.0;
            let mut l = vec![0.0; vocab_size];
            for (ks, t) in &positions {
                l.iter_mut().for_each(|x| *x = 0.0);
                for &k in ks {
                    for (a, b) in l.iter_mut().zip(&table[k]) {
                        *a += b;
                    }
                }
                softmax_in_place(&mut l);
                total -= l[*t as usize].ln();
            }
            total / positions.len() as f64
        };
        let initial_nll = nll_of(&table);
        let mut grad: Vec<Vec<f64>> = vec![vec![0.0; vocab_size]; order.len()];
        let mut mom1 = vec![vec![0.0; vocab_size]; order.len()];
        let mut mom2 = vec![vec![0.0; vocab_size]; order.len()];
        let mut step = 0i32;
        let mut l = vec![0.0; vocab_size];
        for _ in 0..epochs {
            grad.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x = 0.0));
            for (ks, t) in &positions {
                l.iter_mut().for_each(|x| *x = 0.0);
                for &k in ks {
                    for (a, b) in l.iter_mut().zip(&table[k]) {
                        *a += b;
                    }
                }
                softmax_in_place(&mut l);
                l[*t as usize] -= 1.0;
                for &k in ks {
                    for (g, d) in grad[k].iter_mut().zip(&l) {
                        *g += d;
                    }
                }
            }
            step += 1;
            let c1 = 1.0 - ADAM_B1.powi(step);
            let c2 = 1.0 - ADAM_B2.powi(step);
            for (k, g) in grad.iter().enumerate() {
                let inv = 1.0 / uses[k].max(1.0);
                let (m, v) = (&mut mom1[k], &mut mom2[k]);
                for j in 0..vocab_size {
                    let d = g[j] * inv;
                    m[j] = ADAM_B1 * m[j] + (1.0 - ADAM_B1) * d;
                    v[j] = ADAM_B2 * v[j] + (1.0 - ADAM_B2) * d * d;
                    table[k][j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + 1e-8);
                }
            }
        }
        let final_nll = nll_of(&table);
        for (k, row) in order.into_iter().zip(table) {
            policy.rows.insert(k, row);
        }
        Ok((policy, PretrainReport { initial_nll, final_nll, epochs }))
    }

    fn check_batch(&self, batch: &[PreferencePair]) -> Result<(), PolicyError> {
        if batch.is_empty() {
            return Err(PolicyError::EmptyBatch);
        }
        for p in batch {
            if p.winner.is_empty() || p.loser.is_empty() {
                return Err(PolicyError::EmptySequence);
            }
            self.check_tokens(&p.winner_context)?;
            self.check_tokens(&p.loser_context)?;
            self.check_tokens(&p.winner)?;
            self.check_tokens(&p.loser)?;
        }
        Ok(())
    }

    fn margin(&self, p: &PreferencePair, rp: &RewardParams) -> f64 {
        let rw = rp.reward_scale / p.winner.len() as f64 * self.sequence_logprob(&p.winner_context, &p.winner);
        let rl = rp.reward_scale / p.loser.len() as f64 * self.sequence_logprob(&p.loser_context, &p.loser);
        rw - rl
    }

    /// Mean of r(b_w) − r(b_l) over the batch.
    pub fn mean_reward_margin(&self, batch: &[PreferencePair], rp: &RewardParams) -> f64 {
        batch.iter().map(|p| self.margin(p, rp)).sum::<f64>() / batch.len().max(1) as f64
    }

    /// −mean log σ(r_w − r_l − γ).
    pub fn simpo_loss(&self, batch: &[PreferencePair], rp: &RewardParams) -> Result<f64, PolicyError> {
        self.check_batch(batch)?;
        let s: f64 = batch.iter().map(|p| -log_sigmoid(self.margin(p, rp) - rp.margin)).sum();
        Ok(s / batch.len() as f64)
    }

    /// Adds `weight · ∂(Σ log π(seq))/∂row` for every row used along `seq`.
    fn accumulate_logprob_grad(
        &self,
        context: &[u16],
        seq: &[u16],
        weight: f64,
        grad: &mut HashMap<FeatureKey, Vec<f64>>,
    ) {
        let mut ctx = context.to_vec();
        for &t in seq {
            let keys = self.active(&ctx);
            let mut p = self.logits_for(&keys);
            softmax_in_place(&mut p);
            for k in keys {
                let g = grad.entry(k).or_insert_with(|| vec![0.0; self.vocab_size]);
                for (gi, pi) in g.iter_mut().zip(&p) {
                    *gi -= weight * pi;
                }
                g[t as usize] += weight;
            }
            ctx.push(t);
        }
    }

    /// ∂L/∂row for every row the batch touches.
    pub fn simpo_gradient(
        &self,
        batch: &[PreferencePair],
        rp: &RewardParams,
    ) -> Result<HashMap<FeatureKey, Vec<f64>>, PolicyError> {
        self.check_batch(batch)?;
        let n = batch.len() as f64;
        let mut grad = HashMap::new();
        for p in batch {
            let delta = self.margin(p, rp) - rp.margin;
            // dL/dΔ for this pair.
            let coef = -(1.0 - sigmoid(delta)) / n;
            let ww = coef * rp.reward_scale / p.winner.len() as f64;
            let wl = -coef * rp.reward_scale / p.loser.len() as f64;
            self.accumulate_logprob_grad(&p.winner_context, &p.winner, ww, &mut grad);
            self.accumulate_logprob_grad(&p.loser_context, &p.loser, wl, &mut grad);
        }
        Ok(grad)
    }

    /// One gradient step on the SimPO loss; returns the loss before the step.
    pub fn simpo_update(&mut self, batch: &[PreferencePair], rp: &RewardParams, lr: f64) -> Result<f64, PolicyError> {
        let loss = self.simpo_loss(batch, rp)?;
        let grad = self.simpo_gradient(batch, rp)?;
        for (k, g) in grad {
            let row = self.rows.get_mut(&k).expect("gradient only for existing rows");
            for (w, d) in row.iter_mut().zip(g) {
                *w -= lr * d;
            }
        }
        Ok(loss)
    }

    pub fn param(&self, key: FeatureKey, idx: usize) -> Option<f64> {
        self.rows.get(&key).map(|r| r[idx])
    }

    pub fn set_param(&mut self, key: FeatureKey, idx: usize, v: f64) {
        if let Some(r) = self.rows.get_mut(&key) {
            r[idx] = v;
        }
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), PolicyError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        let hash = self.vocab_hash.as_bytes();
        w.write_all(&(hash.len() as u32).to_le_bytes())?;
        w.write_all(hash)?;
        let cfg = serde_json::to_vec(&self.config).map_err(|e| PolicyError::Malformed(e.to_string()))?;
        w.write_all(&(cfg.len() as u32).to_le_bytes())?;
        w.write_all(&cfg)?;
        w.write_all(&(self.vocab_size as u32).to_le_bytes())?;
        let mut keys: Vec<&FeatureKey> = self.rows.keys().collect();
        keys.sort();
        w.write_all(&(keys.len() as u64).to_le_bytes())?;
        for k in keys {
            let (tag, v) = k.pack();
            w.write_all(&[tag])?;
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
            for x in &self.rows[k] {
                w.write_all(&x.to_bits().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    /// SHA-256 of the checkpoint encoding.
    pub fn checkpoint_hash(&self) -> String {
        hex::encode(Sha256::digest(self.checkpoint_bytes()))
    }

    /// Loads a checkpoint, refusing one built for a different vocabulary.
    pub fn read_checkpoint<R: Read>(mut r: R, expected_vocab_hash: &str) -> Result<Policy, PolicyError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(PolicyError::Malformed("bad magic".into()));
        }
        let mut u32b = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32, PolicyError> {
            r.read_exact(&mut u32b)?;
            Ok(u32::from_le_bytes(u32b))
        };
        let hlen = read_u32(&mut r)? as usize;
        let mut hash = vec![0u8; hlen];
        r.read_exact(&mut hash)?;
        let hash = String::from_utf8(hash).map_err(|e| PolicyError::Malformed(e.to_string()))?;
        if hash != expected_vocab_hash {
            return Err(PolicyError::VocabMismatch { expected: expected_vocab_hash.to_string(), found: hash });
        }
        let clen = read_u32(&mut r)? as usize;
        let mut cfg = vec![0u8; clen];
        r.read_exact(&mut cfg)?;
        let config: PolicyConfig = serde_json::from_slice(&cfg).map_err(|e| PolicyError::Malformed(e.to_string()))?;
        let vocab_size = read_u32(&mut r)? as usize;
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b)?;
        let nrows = u64::from_le_bytes(u64b);
        let mut rows = HashMap::new();
        for _ in 0..nrows {
            let mut tag = [0u8; 1];
            r.read_exact(&mut tag)?;
            let mut v = [0u16; 3];
            for x in v.iter_mut() {
                let mut b = [0u8; 2];
                r.read_exact(&mut b)?;
                *x = u16::from_le_bytes(b);
            }
            let key = FeatureKey::unpack(tag[0], v).ok_or_else(|| PolicyError::Malformed("bad row tag".into()))?;
            let mut row = Vec::with_capacity(vocab_size);
            for _ in 0..vocab_size {
                r.read_exact(&mut u64b)?;
                row.push(f64::from_bits(u64::from_le_bytes(u64b)));
            }
            rows.insert(key, row);
        }
        Ok(Policy { config, vocab_size, vocab_hash: hash, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_track_instruction_structure() {
        let p = Policy::uniform(10, "toy", PolicyConfig { eoi: 0, ..Default::default() });
        assert_eq!(p.features(&[]), vec![FeatureKey::Unigram, FeatureKey::Start]);
        let f = p.features(&[5, 6]);
        assert!(f.contains(&FeatureKey::Slot(5, 2)));
        let f = p.features(&[5, 6, 0]);
        assert!(f.contains(&FeatureKey::Boundary(5)));
        assert!(f.contains(&FeatureKey::Prev3(5, 6, 0)));
        let f = p.features(&[5, 6, 0, 7]);
        assert!(f.contains(&FeatureKey::Slot(7, 1)));
    }

    #[test]
    fn log_sigmoid_values() {
        assert!((-log_sigmoid(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((-log_sigmoid(1.0) - 0.313_261_687_518_222_8).abs() < 1e-12);
        assert!(log_sigmoid(-800.0).is_finite());
    }
}
