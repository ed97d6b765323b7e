// SPDX-License-Identifier: Apache-2.0

use grmfuzz::isa::{tokenize, Vocabulary};
use grmfuzz::policy::{Policy, PolicyConfig, PolicyError, PreferencePair, RewardParams, Stage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn toy_config(order: usize) -> PolicyConfig {
    PolicyConfig { order, min_count: 1, structural: true, eoi: 0, temperature: 1.0 }
}

fn pair(context: Vec<u16>, winner: Vec<u16>, loser: Vec<u16>) -> PreferencePair {
    PreferencePair {
        winner_context: context.clone(),
        winner,
        loser_context: context,
        loser,
        iteration: 0,
        stage: Stage::Grm,
    }
}

/// Random small model with every row of a corpus materialized and perturbed.
fn random_toy(v: usize, order: usize, seed: u64) -> (Policy, Vec<PreferencePair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<Vec<u16>> = (0..20).map(|_| (0..8).map(|_| rng.gen_range(0..v as u16)).collect()).collect();
    let (mut p, _) = Policy::pretrain(&corpus, v, "toy", toy_config(order), 3, 0.5).unwrap();
    for doc in &corpus {
        for i in 0..doc.len() {
            for k in p.features(&doc[..i]) {
                for j in 0..v {
                    if let Some(x) = p.param(k, j) {
                        p.set_param(k, j, x + rng.gen_range(-0.3..0.3));
                    }
                }
            }
        }
    }
    let batch = (0..4)
        .map(|i| {
            let d = &corpus[i];
            let e = &corpus[i + 4];
            pair(d[..2].to_vec(), d[2..6].to_vec(), e[2..5].to_vec())
        })
        .collect();
    (p, batch)
}

#[test]
fn simpo_gradient_matches_finite_differences() {
    let rp = RewardParams::default();
    for (v, order, seed) in [(4, 1, 1), (6, 2, 2), (8, 2, 3), (5, 2, 4)] {
        let (p, batch) = random_toy(v, order, seed);
        let grad = p.simpo_gradient(&batch, &rp).unwrap();
        assert!(!grad.is_empty());
        let h = 1e-5;
        for (k, g) in &grad {
            for j in 0..v {
                let x = p.param(*k, j).unwrap();
                let mut plus = p.clone();
                plus.set_param(*k, j, x + h);
                let mut minus = p.clone();
                minus.set_param(*k, j, x - h);
                let fd = (plus.simpo_loss(&batch, &rp).unwrap() - minus.simpo_loss(&batch, &rp).unwrap()) / (2.0 * h);
                let err = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-3);
                assert!(err < 1e-5, "{k:?}[{j}] analytic {} numeric {fd}", g[j]);
            }
        }
    }
}

#[test]
fn simpo_loss_reference_values() {
    // Uniform policy: equal-length sequences have equal rewards.
    let p = Policy::uniform(8, "toy", toy_config(2));
    let b = vec![pair(vec![], vec![1, 2], vec![3, 4])];
    let zero_margin = RewardParams { reward_scale: 10.0, margin: 0.0 };
    let l = p.simpo_loss(&b, &zero_margin).unwrap();
    assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    // Margin -1 turns the argument into +1: -ln σ(1).
    let neg = RewardParams { reward_scale: 10.0, margin: -1.0 };
    assert!((p.simpo_loss(&b, &neg).unwrap() - 0.313_261_687_518_222_8).abs() < 1e-12);
    // Reward of a 2-token sequence under uniform |V| = e^1: each token ln p = -1.
    let r = p.sequence_reward(&[], &[1, 2], &zero_margin).unwrap();
    assert!((r - 10.0 * -(8f64).ln()).abs() < 1e-12);
}

#[test]
fn simpo_update_moves_rewards_apart() {
    let (mut p, batch) = random_toy(8, 2, 9);
    let rp = RewardParams::default();
    let m0 = p.mean_reward_margin(&batch, &rp);
    let mut last = f64::INFINITY;
    for _ in 0..20 {
        last = p.simpo_update(&batch, &rp, 0.05).unwrap();
    }
    assert!(p.mean_reward_margin(&batch, &rp) > m0);
    assert!(p.simpo_loss(&batch, &rp).unwrap() < last + 1e-12);
}

#[test]
fn reward_rejects_bad_input() {
    let p = Policy::uniform(4, "toy", toy_config(2));
    let rp = RewardParams::default();
    assert!(matches!(p.sequence_reward(&[], &[], &rp), Err(PolicyError::EmptySequence)));
    assert!(matches!(p.sequence_reward(&[], &[9], &rp), Err(PolicyError::TokenOutOfRange(9))));
    assert!(matches!(p.simpo_loss(&[], &rp), Err(PolicyError::EmptyBatch)));
}

#[test]
fn sampling_matches_softmax_chi_square() {
    let (p, _) = random_toy(8, 2, 5);
    let ctx = [3u16, 1];
    let probs = p.probs(&ctx);
    let n = 100_000;
    let mut counts = [0u64; 8];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..n {
        counts[p.sample_next(&ctx, &mut rng) as usize] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(&c, &q)| {
            let e = q * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let pval = 1.0 - ChiSquared::new(7.0).unwrap().cdf(stat);
    assert!(pval > 0.001, "chi-square {stat}, p = {pval}");
}

#[test]
fn zero_temperature_is_argmax() {
    let (p, _) = random_toy(8, 2, 6);
    let ctx = [2u16];
    let l = p.logits(&ctx);
    let best = (0..8).max_by(|&a, &b| l[a].partial_cmp(&l[b]).unwrap().then(b.cmp(&a))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        assert_eq!(p.sample_with_temperature(&ctx, 0.0, &mut rng) as usize, best);
    }
}

#[test]
fn uniform_corpus_nll_is_near_log_vocab() {
    let v = 12usize;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let corpus: Vec<Vec<u16>> = (0..2000).map(|_| (0..100).map(|_| rng.gen_range(0..v as u16)).collect()).collect();
    let cfg = PolicyConfig { eoi: u16::MAX, min_count: 4, ..Default::default() };
    let (p, rep) = Policy::pretrain(&corpus, v, "toy", cfg, 40, 0.05).unwrap();
    let ln_v = (v as f64).ln();
    assert!((rep.initial_nll - ln_v).abs() < 1e-9);
    assert!((rep.final_nll - ln_v).abs() / ln_v < 0.05, "{}", rep.final_nll);
    let mut held = ChaCha8Rng::seed_from_u64(12);
    let test: Vec<Vec<u16>> = (0..50).map(|_| (0..100).map(|_| held.gen_range(0..v as u16)).collect()).collect();
    assert!((p.nll(&test) - ln_v).abs() / ln_v < 0.05);
}

fn isa_single_instruction_policy() -> (Policy, Vec<u16>, Vocabulary) {
    let vocab = Vocabulary::default();
    let toks: Vec<u16> = tokenize(&vocab, "addi x1, x2, 5").unwrap().iter().map(|t| t.id).collect();
    let mut doc = Vec::new();
    for _ in 0..6 {
        doc.extend(&toks);
    }
    let corpus = vec![doc; 4];
    let cfg = PolicyConfig { eoi: vocab.eoi().id, ..Default::default() };
    let (p, rep) = Policy::pretrain(&corpus, vocab.len(), vocab.hash(), cfg, 300, 0.1).unwrap();
    assert!(rep.final_nll < rep.initial_nll);
    (p, toks, vocab)
}

#[test]
fn single_instruction_corpus_is_memorized() {
    let (p, toks, _) = isa_single_instruction_policy();
    let lp = p.sequence_logprob(&[], &toks);
    assert!(lp.exp() > 0.99, "p = {}", lp.exp());
    let lp2 = p.sequence_logprob(&toks, &toks);
    assert!(lp2.exp() > 0.99);
}

#[test]
fn pretraining_is_reproducible_and_checkpoints_round_trip() {
    let (a, _, vocab) = isa_single_instruction_policy();
    let (b, _, _) = isa_single_instruction_policy();
    assert_eq!(a.checkpoint_hash(), b.checkpoint_hash());
    let bytes = a.checkpoint_bytes();
    let back = Policy::read_checkpoint(bytes.as_slice(), &vocab.hash()).unwrap();
    assert_eq!(back.checkpoint_hash(), a.checkpoint_hash());
    assert!(matches!(Policy::read_checkpoint(bytes.as_slice(), "other"), Err(PolicyError::VocabMismatch { .. })));
    assert!(Policy::read_checkpoint(&bytes[..20], &vocab.hash()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distributions_stay_normalized_after_updates(seed in 0u64..1000, lr in 0.0f64..2.0) {
        let (mut p, batch) = random_toy(6, 2, seed);
        p.simpo_update(&batch, &RewardParams::default(), lr).unwrap();
        for b in &batch {
            let mut ctx = b.winner_context.clone();
            for &t in &b.winner {
                let s: f64 = p.probs(&ctx).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                ctx.push(t);
            }
        }
    }

    #[test]
    fn reward_is_nonpositive_and_scaled(seed in 0u64..1000, scale in 0.1f64..20.0) {
        let (p, batch) = random_toy(5, 2, seed);
        let rp = RewardParams { reward_scale: scale, margin: 0.0 };
        for b in &batch {
            let r = p.sequence_reward(&b.winner_context, &b.winner, &rp).unwrap();
            prop_assert!(r <= 0.0);
            let lp = p.sequence_logprob(&b.winner_context, &b.winner);
            prop_assert!((r - scale * lp / b.winner.len() as f64).abs() < 1e-9);
        }
    }
}
