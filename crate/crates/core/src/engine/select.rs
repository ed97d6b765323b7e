// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dutsim::CoverageSet;
use crate::isa::{encode, InstructionBlock, Token, Vocabulary};
use crate::policy::{Policy, PreferencePair, Stage};
use crate::refmodel::{DeadReason, Validity};

/// Tokens of lineage history handed to the policy as context.
pub const CONTEXT_TAIL: usize = 40;

/// A partial test case: environment plus the blocks accepted so far.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub env_seed: u64,
    pub blocks: Vec<InstructionBlock>,
    pub tokens: Vec<u16>,
    /// Transition score of each accepted block (DUT stage only).
    #[serde(default)]
    pub scores: Vec<f64>,
}

impl Lineage {
    pub fn root(env_seed: u64) -> Self {
        Lineage { env_seed, blocks: Vec::new(), tokens: Vec::new(), scores: Vec::new() }
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn context(&self) -> &[u16] {
        &self.tokens[self.tokens.len().saturating_sub(CONTEXT_TAIL)..]
    }

    pub fn extend(&self, block: InstructionBlock, tokens: &[u16], score: Option<f64>) -> Lineage {
        let mut next = self.clone();
        next.blocks.push(block);
        next.tokens.extend_from_slice(tokens);
        next.scores.extend(score);
        next
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub prefix: usize,
    /// Position in generation order; breaks score ties.
    pub index: usize,
    pub tokens: Vec<u16>,
    /// `None` when the tokens do not form encodable instructions.
    pub block: Option<InstructionBlock>,
    pub validity: Validity,
    pub score: Option<f64>,
    pub coverage: Option<CoverageSet>,
}

#[derive(Clone, Copy, Debug)]
pub struct GenParams {
    pub candidates_per_prefix: usize,
    pub instructions_per_block: usize,
    pub token_cap: usize,
    pub temperature: f64,
}

/// Samples until `n_inst` end-of-instruction tokens; `None` when one
/// instruction exceeds `cap` tokens.
pub fn sample_block<R: Rng + ?Sized>(
    policy: &Policy,
    context: &[u16],
    params: &GenParams,
    rng: &mut R,
) -> (Vec<u16>, bool) {
    let eoi = policy.config.eoi;
    let mut ctx = context.to_vec();
    let start = ctx.len();
    for _ in 0..params.instructions_per_block {
        let mut n = 0;
        loop {
            let t = policy.sample_with_temperature(&ctx, params.temperature, rng);
            ctx.push(t);
            if t == eoi {
                break;
            }
            n += 1;
            if n > params.token_cap {
                return (ctx.split_off(start), false);
            }
        }
    }
    (ctx.split_off(start), true)
}

/// Detokenizes and checks every instruction encodes.
pub fn parse_block(vocab: &Vocabulary, tokens: &[u16], origin: u64) -> Option<InstructionBlock> {
    let toks: Option<Vec<Token>> = tokens.iter().map(|&id| vocab.token(id)).collect();
    let block = InstructionBlock::from_tokens(vocab, &toks?, origin).ok()?;
    if block.is_empty() || block.instructions.iter().any(|i| encode(i).is_err()) {
        return None;
    }
    Some(block)
}

/// `candidates_per_prefix` children for every prefix, in prefix order.
pub fn generate_blocks(
    prefixes: &[Lineage],
    policy: &Policy,
    vocab: &Vocabulary,
    params: &GenParams,
    iteration: u64,
    rng_for: impl Fn(usize) -> ChaCha8Rng + Sync,
) -> Vec<Candidate> {
    let per = params.candidates_per_prefix;
    let groups: Vec<Vec<Candidate>> = prefixes
        .par_iter()
        .enumerate()
        .map(|(p, lineage)| {
            let mut rng = rng_for(p);
            (0..per)
                .map(|k| {
                    let (tokens, complete) = sample_block(policy, lineage.context(), params, &mut rng);
                    let block = if complete { parse_block(vocab, &tokens, iteration) } else { None };
                    let validity = if block.is_some() { Validity::Valid } else { Validity::Dead(DeadReason::Syntax) };
                    Candidate { prefix: p, index: p * per + k, tokens, block, validity, score: None, coverage: None }
                })
                .collect()
        })
        .collect();
    groups.into_iter().flatten().collect()
}

/// Indices of the candidates to extend.
///
/// GRM stage: a uniform subset of the valid ones. DUT stage: the best by
/// score, ties to the earlier index.
pub fn filter_and_select<R: Rng + ?Sized>(candidates: &[Candidate], stage: Stage, n: usize, rng: &mut R) -> Vec<usize> {
    let valid: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].validity.is_valid()).collect();
    match stage {
        Stage::Grm => {
            if valid.len() <= n {
                return valid;
            }
            let mut picked: Vec<usize> = index::sample(rng, valid.len(), n).into_iter().map(|k| valid[k]).collect();
            picked.sort_unstable();
            picked
        }
        Stage::Dut => {
            let mut scored: Vec<usize> = valid.into_iter().filter(|&i| candidates[i].score.is_some()).collect();
            scored.sort_by(|&a, &b| {
                let (sa, sb) = (candidates[a].score.unwrap_or(0.0), candidates[b].score.unwrap_or(0.0));
                sb.total_cmp(&sa).then(candidates[a].index.cmp(&candidates[b].index))
            });
            scored.truncate(n);
            scored
        }
    }
}

fn make_pair(prefixes: &[Lineage], w: &Candidate, l: &Candidate, iteration: u64, stage: Stage) -> PreferencePair {
    PreferencePair {
        winner_context: prefixes[w.prefix].context().to_vec(),
        winner: w.tokens.clone(),
        loser_context: prefixes[l.prefix].context().to_vec(),
        loser: l.tokens.clone(),
        iteration,
        stage,
    }
}

/// Preference pairs for this iteration.
///
/// GRM stage: valid winners against dead losers of the same prefix first,
/// leftovers paired across prefixes. DUT stage: best against worst score in
/// each prefix group.
pub fn form_pairs(candidates: &[Candidate], prefixes: &[Lineage], stage: Stage, iteration: u64) -> Vec<PreferencePair> {
    let mut groups: BTreeMap<usize, Vec<&Candidate>> = BTreeMap::new();
    for c in candidates {
        groups.entry(c.prefix).or_default().push(c);
    }
    let mut pairs = Vec::new();
    match stage {
        Stage::Grm => {
            let mut spare_w = Vec::new();
            let mut spare_l = Vec::new();
            for group in groups.values() {
                let w: Vec<&Candidate> = group.iter().copied().filter(|c| c.validity.is_valid()).collect();
                let l: Vec<&Candidate> = group.iter().copied().filter(|c| !c.validity.is_valid()).collect();
                let k = w.len().min(l.len());
                for i in 0..k {
                    pairs.push(make_pair(prefixes, w[i], l[i], iteration, stage));
                }
                spare_w.extend_from_slice(&w[k..]);
                spare_l.extend_from_slice(&l[k..]);
            }
            for (w, l) in spare_w.iter().zip(&spare_l) {
                pairs.push(make_pair(prefixes, w, l, iteration, stage));
            }
        }
        Stage::Dut => {
            for group in groups.values() {
                let scored: Vec<&Candidate> =
                    group.iter().copied().filter(|c| c.validity.is_valid() && c.score.is_some()).collect();
                if scored.len() < 2 {
                    continue;
                }
                let key = |c: &&Candidate| c.score.unwrap_or(0.0);
                let best =
                    scored.iter().copied().reduce(|a, b| if key(&b) > key(&a) { b } else { a }).expect("non-empty");
                let worst =
                    scored.iter().copied().reduce(|a, b| if key(&b) < key(&a) { b } else { a }).expect("non-empty");
                if key(&best) > key(&worst) {
                    pairs.push(make_pair(prefixes, best, worst, iteration, stage));
                }
            }
        }
    }
    pairs
}
