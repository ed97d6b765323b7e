// SPDX-License-Identifier: Apache-2.0

use grmfuzz::fuzzmem::{FuzzMemory, MemoryEntry, MemoryError};
use grmfuzz::policy::{PreferencePair, Stage};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn entry(iteration: u64, blocks: Vec<u32>) -> MemoryEntry<u32> {
    MemoryEntry { iteration, blocks, pairs: vec![] }
}

fn pair(tag: u16, iteration: u64) -> PreferencePair {
    PreferencePair {
        winner_context: vec![],
        winner: vec![tag],
        loser_context: vec![],
        loser: vec![tag + 1],
        iteration,
        stage: Stage::Grm,
    }
}

fn chi_square_p(counts: &[u64], weights: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let total: f64 = weights.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(weights)
        .map(|(&c, &w)| {
            let e = n as f64 * w / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn fifo_eviction() {
    let mut m = FuzzMemory::new(3, 0.9).unwrap();
    m.update(entry(1, vec![1])).unwrap();
    assert_eq!(m.iterations(), vec![1]);
    for i in 2..=4 {
        m.update(entry(i, vec![i as u32])).unwrap();
    }
    assert_eq!(m.iterations(), vec![2, 3, 4]);
    assert!(matches!(m.update(entry(3, vec![0])), Err(MemoryError::OutOfOrder { newest: 4, got: 3 })));
    assert!(matches!(m.update(entry(9, vec![])), Err(MemoryError::EmptyEntry(9))));
    assert!(FuzzMemory::<u32>::new(0, 0.9).is_err());
    assert!(FuzzMemory::<u32>::new(3, 0.0).is_err());
}

#[test]
fn recency_weights() {
    let mut m = FuzzMemory::new(10, 0.9).unwrap();
    for i in 0..3 {
        m.update(entry(i, vec![i as u32])).unwrap();
    }
    let w = m.weights();
    assert!((w[0] - 0.81).abs() < 1e-12 && (w[1] - 0.9).abs() < 1e-12 && w[2] == 1.0);
    let mut flat = FuzzMemory::new(10, 1.0).unwrap();
    for i in 0..3 {
        flat.update(entry(i, vec![i as u32])).unwrap();
    }
    assert_eq!(flat.weights(), vec![1.0; 3]);
}

#[test]
fn block_sampling_matches_weights() {
    let mut m = FuzzMemory::new(10, 0.9).unwrap();
    // Entry sizes differ: within-entry choice is uniform, so entry mass is still λ^age.
    for i in 0..5u64 {
        m.update(entry(i, (0..=i as u32).map(|b| i as u32 * 100 + b).collect())).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = m.sample_blocks(100_000, &mut rng).unwrap();
    let mut counts = vec![0u64; 5];
    let mut within = vec![0u64; 5];
    for b in draws {
        counts[(b / 100) as usize] += 1;
        if b / 100 == 4 {
            within[(b % 100) as usize] += 1;
        }
    }
    let p = chi_square_p(&counts, &m.weights());
    assert!(p > 0.001, "entry chi-square p = {p}");
    let p = chi_square_p(&within, &[1.0; 5]);
    assert!(p > 0.001, "within-entry chi-square p = {p}");
}

#[test]
fn pair_sampling() {
    let mut m: FuzzMemory<u32> = FuzzMemory::new(10, 1.0).unwrap();
    m.update(MemoryEntry { iteration: 0, blocks: vec![1], pairs: vec![] }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    assert!(matches!(m.sample_pairs(1, &mut rng), Err(MemoryError::Empty)));
    m.update(MemoryEntry { iteration: 1, blocks: vec![], pairs: vec![pair(1, 1)] }).unwrap();
    assert_eq!(m.sample_pairs(3, &mut rng).unwrap(), vec![pair(1, 1); 3]);
    m.update(MemoryEntry { iteration: 2, blocks: vec![2], pairs: vec![pair(7, 2)] }).unwrap();
    let draws = m.sample_pairs(20_000, &mut rng).unwrap();
    let ones = draws.iter().filter(|p| p.iteration == 1).count() as u64;
    assert!(chi_square_p(&[ones, 20_000 - ones], &[1.0, 1.0]) > 0.001);
    // Blocks only come from entries that have blocks.
    let blocks = m.sample_blocks(1000, &mut rng).unwrap();
    assert!(blocks.iter().all(|&b| b == 1 || b == 2));
    m.clear_pairs();
    assert_eq!(m.iterations(), vec![0, 2]);
    assert!(matches!(m.sample_pairs(1, &mut rng), Err(MemoryError::Empty)));
}

#[test]
fn empty_memory_sampling_errors() {
    let m: FuzzMemory<u32> = FuzzMemory::new(4, 0.9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(matches!(m.sample_blocks(1, &mut rng), Err(MemoryError::Empty)));
}

#[test]
fn jsonl_round_trip() {
    let mut m = FuzzMemory::new(3, 0.8).unwrap();
    for i in 0..5 {
        m.update(MemoryEntry { iteration: i, blocks: vec![i as u32], pairs: vec![pair(i as u16, i)] }).unwrap();
    }
    let mut buf = Vec::new();
    m.write_jsonl(&mut buf).unwrap();
    let back: FuzzMemory<u32> = FuzzMemory::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, m);
    assert!(FuzzMemory::<u32>::read_jsonl(&b""[..]).is_err());
}

proptest! {
    #[test]
    fn window_is_contiguous_suffix(cap in 1usize..8, gaps in prop::collection::vec(1u64..4, 1..40), k in 1usize..50, seed: u64) {
        let mut m = FuzzMemory::new(cap, 0.9).unwrap();
        let mut inserted = Vec::new();
        let mut it = 0;
        for g in gaps {
            it += g;
            m.update(entry(it, vec![it as u32])).unwrap();
            inserted.push(it);
            prop_assert!(m.len() <= cap);
        }
        let keep = inserted.len().min(cap);
        prop_assert_eq!(m.iterations(), inserted[inserted.len() - keep..].to_vec());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let live = m.iterations();
        for b in m.sample_blocks(k, &mut rng).unwrap() {
            prop_assert!(live.contains(&(b as u64)));
        }
    }
}
