// SPDX-License-Identifier: Apache-2.0

use grmfuzz::dutsim::CoverageSet;
use grmfuzz::scoring::{adjusted_beta, score_transition, FrequencyMap, ScoringParams};
use proptest::prelude::*;

/// Naive per-point loop over an explicit small universe.
fn brute_force(h: &[bool], g: &[bool], f: &[u64], p: &ScoringParams) -> f64 {
    let mut total = 0.0;
    for x in 0..g.len() {
        if !g[x] {
            continue;
        }
        total += if h[x] {
            p.alpha
        } else {
            let b = p.beta_w - (f[x] as f64) * p.factor;
            if b < p.alpha {
                p.alpha
            } else {
                b
            }
        };
    }
    total
}

fn small_instance() -> impl Strategy<Value = (Vec<bool>, Vec<bool>, Vec<u64>, ScoringParams)> {
    (1usize..=32).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(0u64..200_000, n),
            (0.01f64..0.5, 0.5f64..2.0, 0.0f64..1e-4),
        )
            .prop_map(|(h, g, f, (alpha, beta_w, factor))| (h, g, f, ScoringParams { alpha, beta_w, factor }))
    })
}

fn to_set(bits: &[bool]) -> CoverageSet {
    bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i as u32).collect()
}

fn to_freq(f: &[u64]) -> FrequencyMap {
    let mut m = FrequencyMap::new();
    for (i, c) in f.iter().enumerate() {
        m.set(i as u32, *c);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_brute_force((h, g, f, p) in small_instance()) {
        let s = score_transition(&to_set(&h), &to_set(&g), &to_freq(&f), &p);
        prop_assert!((s.value - brute_force(&h, &g, &f, &p)).abs() <= 1e-9);
    }

    #[test]
    fn penalty_is_monotone_and_bounded(a in 0u64..1_000_000, b in 0u64..1_000_000) {
        let p = ScoringParams::default();
        let (lo, hi) = (a.min(b), a.max(b));
        let mut f = FrequencyMap::new();
        f.set(0, lo);
        let at_lo = adjusted_beta(0, &f, &p);
        f.set(0, hi);
        let at_hi = adjusted_beta(0, &f, &p);
        prop_assert!(at_hi <= at_lo);
        prop_assert!((p.alpha..=p.beta_w).contains(&at_hi));
    }

    #[test]
    fn disjoint_additivity((h, g, f, p) in small_instance(), split in any::<u32>()) {
        let g1: Vec<bool> = g.iter().enumerate().map(|(i, &b)| b && (split >> (i % 32)) & 1 == 1).collect();
        let g2: Vec<bool> = g.iter().zip(&g1).map(|(&a, &b)| a && !b).collect();
        let (hs, fm) = (to_set(&h), to_freq(&f));
        let whole = score_transition(&hs, &to_set(&g), &fm, &p).value;
        let parts = score_transition(&hs, &to_set(&g1), &fm, &p).value + score_transition(&hs, &to_set(&g2), &fm, &p).value;
        prop_assert!((whole - parts).abs() <= 1e-9);
    }

    #[test]
    fn moving_a_point_into_h_never_increases((h, g, f, p) in small_instance(), pick in any::<usize>()) {
        let (gs, fm) = (to_set(&g), to_freq(&f));
        let before = score_transition(&to_set(&h), &gs, &fm, &p).value;
        let mut h2 = h.clone();
        h2[pick % h.len()] = true;
        let after = score_transition(&to_set(&h2), &gs, &fm, &p).value;
        prop_assert!(after <= before + 1e-12);
    }
}
