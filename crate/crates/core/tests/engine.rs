// SPDX-License-Identifier: Apache-2.0

use std::sync::OnceLock;

use grmfuzz::engine::*;
use grmfuzz::isa::{InstructionBlock, Vocabulary};
use grmfuzz::policy::Policy;
use grmfuzz::refmodel::{DeadReason, Validity};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config(seed: u64) -> CampaignConfig {
    let mut c = CampaignConfig::default();
    c.seed = seed;
    c.prefixes_per_iteration = 12;
    c.grm_stage.max_iterations = 4;
    c.dut_stage.max_iterations = 4;
    c.pretrain.corpus_documents = 300;
    c.pretrain.epochs = 20;
    c
}

fn policy() -> &'static Policy {
    static P: OnceLock<Policy> = OnceLock::new();
    P.get_or_init(|| pretrain_policy(&small_config(1), &Vocabulary::default()).unwrap())
}

fn csv_of(c: &Campaign) -> String {
    let mut buf = Vec::new();
    write_reports_csv(&mut buf, &c.progress.reports).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn generation_shape_matches_configuration() {
    let vocab = Vocabulary::default();
    let cfg = CampaignConfig::default();
    let prefixes: Vec<Lineage> = (0..cfg.prefixes_per_iteration as u64).map(Lineage::root).collect();
    let params = GenParams {
        candidates_per_prefix: cfg.candidates_per_prefix,
        instructions_per_block: cfg.instructions_per_block,
        token_cap: cfg.token_cap,
        temperature: 1.0,
    };
    let cands =
        generate_blocks(&prefixes, policy(), &vocab, &params, 0, |p| derive_rng(7, Stage::Grm, 0, "g", p as u64));
    assert_eq!(cands.len(), 400);
    let eoi = vocab.eoi().id;
    let mut complete = 0;
    for (i, c) in cands.iter().enumerate() {
        assert_eq!(c.index, i);
        assert_eq!(c.prefix, i / cfg.candidates_per_prefix);
        if let Some(b) = &c.block {
            complete += 1;
            assert_eq!(c.tokens.iter().filter(|&&t| t == eoi).count(), 6);
            assert_eq!(b.len(), 6);
        }
    }
    assert!(complete > 200, "only {complete} parsed blocks");
}

fn cand(prefix: usize, index: usize, validity: Validity, score: Option<f64>) -> Candidate {
    Candidate {
        prefix,
        index,
        tokens: vec![index as u16 + 1, 0],
        block: validity.is_valid().then(|| InstructionBlock::new(vec!["addi x1, x1, 1".parse().unwrap()], 0)),
        validity,
        score,
        coverage: None,
    }
}

const DEAD: Validity = Validity::Dead(DeadReason::Exception);

#[test]
fn grm_pairs_prefer_same_prefix_then_cross_prefix() {
    let other = Lineage::root(2).extend(InstructionBlock::new(vec![], 0), &[9, 0], None);
    let prefixes = vec![Lineage::root(1), other];
    let mut cands: Vec<Candidate> = [Validity::Valid, DEAD, Validity::Valid, DEAD, Validity::Valid]
        .into_iter()
        .enumerate()
        .map(|(i, v)| cand(0, i, v, None))
        .collect();
    let pairs = form_pairs(&cands, &prefixes, Stage::Grm, 3);
    assert_eq!(pairs.len(), 2);
    assert_eq!((pairs[0].winner[0], pairs[0].loser[0]), (1, 2));
    assert_eq!((pairs[1].winner[0], pairs[1].loser[0]), (3, 4));
    assert!(pairs.iter().all(|p| p.iteration == 3 && p.stage == Stage::Grm));

    cands.extend((5..8).map(|i| cand(1, i, DEAD, None)));
    let pairs = form_pairs(&cands, &prefixes, Stage::Grm, 3);
    assert_eq!(pairs.len(), 3);
    let cross = &pairs[2];
    assert_eq!((cross.winner[0], cross.loser[0]), (5, 6));
    assert!(cross.winner_context.is_empty());
    assert_eq!(cross.loser_context, vec![9, 0]);
}

#[test]
fn dut_pairs_take_best_and_worst_per_prefix() {
    let prefixes = vec![Lineage::root(1), Lineage::root(2)];
    let cands = vec![
        cand(0, 0, Validity::Valid, Some(1.0)),
        cand(0, 1, Validity::Valid, Some(3.0)),
        cand(0, 2, DEAD, None),
        cand(0, 3, Validity::Valid, Some(0.5)),
        cand(1, 4, Validity::Valid, Some(2.0)),
        cand(1, 5, Validity::Valid, Some(2.0)),
    ];
    let pairs = form_pairs(&cands, &prefixes, Stage::Dut, 0);
    assert_eq!(pairs.len(), 1);
    assert_eq!((pairs[0].winner[0], pairs[0].loser[0]), (2, 4));
}

proptest! {
    #[test]
    fn dut_selection_is_a_stable_sort(scores in prop::collection::vec(prop::option::of(0u8..6), 0..40), n in 0usize..50) {
        let cands: Vec<Candidate> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                Some(v) => cand(0, i, Validity::Valid, Some(*v as f64)),
                None => cand(0, i, DEAD, None),
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = filter_and_select(&cands, Stage::Dut, n, &mut rng);
        let mut want: Vec<(i64, usize)> =
            scores.iter().enumerate().filter_map(|(i, s)| s.map(|v| (-(v as i64), i))).collect();
        want.sort();
        let want: Vec<usize> = want.into_iter().take(n).map(|(_, i)| i).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn grm_selection_is_a_sorted_valid_subset(valid in prop::collection::vec(any::<bool>(), 0..40), n in 0usize..50) {
        let cands: Vec<Candidate> = valid
            .iter()
            .enumerate()
            .map(|(i, &v)| cand(0, i, if v { Validity::Valid } else { DEAD }, None))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let got = filter_and_select(&cands, Stage::Grm, n, &mut rng);
        prop_assert_eq!(got.len(), n.min(valid.iter().filter(|&&v| v).count()));
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(got.iter().all(|&i| valid[i]));
    }
}

#[test]
fn campaigns_are_deterministic_and_coverage_only_grows() {
    let run = || {
        let mut c = Campaign::new(small_config(5), policy().clone()).unwrap();
        c.run().unwrap();
        c
    };
    let (a, b) = (run(), run());
    assert_eq!(csv_of(&a), csv_of(&b));
    assert_eq!(a.progress.new_mismatches, b.progress.new_mismatches);
    assert_eq!(a.policy.checkpoint_hash(), b.policy.checkpoint_hash());
    assert_eq!(a.progress.reports.len(), 8);
    let cov: Vec<usize> = a.progress.reports.iter().map(|r| r.cum_coverage).collect();
    assert!(cov.windows(2).all(|w| w[0] <= w[1]), "{cov:?}");
    assert!(a.progress.reports[..4].iter().all(|r| r.stage == Stage::Grm && r.cum_coverage == 0));
    assert!(*cov.last().unwrap() > 0);
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let cfg = small_config(9);
    let mut full = Campaign::new(cfg.clone(), policy().clone()).unwrap();
    full.run().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = Campaign::new(cfg.clone(), policy().clone()).unwrap();
    for _ in 0..5 {
        first.run_iteration().unwrap();
    }
    first.checkpoint(dir.path()).unwrap();
    drop(first);
    let mut resumed = Campaign::resume(cfg, dir.path()).unwrap();
    resumed.run().unwrap();

    assert_eq!(csv_of(&full), csv_of(&resumed));
    assert_eq!(full.policy.checkpoint_hash(), resumed.policy.checkpoint_hash());
    assert_eq!(full.progress, resumed.progress);
}

#[test]
fn syntactic_collapse_aborts_the_campaign() {
    let vocab = Vocabulary::default();
    let cfg = small_config(2);
    let flat = Policy::uniform(vocab.len(), vocab.hash(), policy_config_for(&cfg, &vocab));
    let mut c = Campaign::new(cfg, flat).unwrap();
    match c.run_iteration() {
        Err(EngineError::Collapse { iteration: 0, rate, floor }) => assert!(rate < floor),
        other => panic!("expected collapse, got {other:?}"),
    }
}

#[test]
fn configuration_round_trips_and_rejects_bad_values() {
    let cfg = CampaignConfig::default();
    let back: CampaignConfig = toml::from_str(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
    let back: CampaignConfig = serde_json::from_str(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);

    let mut bad = cfg.clone();
    bad.root_fraction = 1.5;
    assert!(matches!(bad.validate(), Err(EngineError::Config(_))));
    let mut bad = cfg.clone();
    bad.instructions_per_block = 0;
    assert!(bad.validate().is_err());
    assert!(toml::from_str::<CampaignConfig>("no_such_field = 1").is_err());
}

#[test]
fn logged_mismatches_replay_and_artifacts_are_written() {
    let mut cfg = small_config(3);
    cfg.dut_stage.max_iterations = 6;
    let mut c = Campaign::new(cfg.clone(), policy().clone()).unwrap();
    c.run().unwrap();
    assert!(!c.progress.new_mismatches.is_empty());
    for m in &c.progress.new_mismatches {
        assert!(!m.bugs.is_empty());
        assert!(replay(m, cfg.fuel, &cfg.bugs).unwrap().reproduced);
        assert!(replay(m, cfg.fuel, &grmfuzz::dutsim::BugConfig::none()).unwrap().record.is_none());
    }

    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&c, dir.path()).unwrap();
    for f in [
        "config.lock.json",
        "reports/iterations.csv",
        "mismatches/new.jsonl",
        "filter.json",
        "checkpoints/latest/policy.bin",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let log = std::fs::File::open(dir.path().join("mismatches/new.jsonl")).unwrap();
    let back = read_mismatch_log(std::io::BufReader::new(log)).unwrap();
    assert_eq!(back, c.progress.new_mismatches);
}
