// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::difftest::{compare_traces, FilterOutcome, MismatchFilter, MismatchRecord, TraceView};
use crate::dutsim::{BugConfig, BugId, CoverageSet};
use crate::fuzzmem::{FuzzMemory, MemoryEntry};
use crate::isa::{InstructionBlock, Vocabulary};
use crate::policy::{Policy, PolicyConfig, Stage};
use crate::refmodel::{classify_with_threshold, DeadReason, Validity};
use crate::scoring::{score_transition, FrequencyMap};

use super::config::CampaignConfig;
use super::corpus::synthetic_corpus;
use super::env::{Environment, Program};
use super::select::{filter_and_select, form_pairs, generate_blocks, Candidate, GenParams, Lineage};
use super::EngineError;

/// Independent stream for one (stage, iteration, purpose, index) slot.
pub fn derive_rng(seed: u64, stage: Stage, iteration: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([stage as u8]);
    h.update(iteration.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u64,
    pub stage: Stage,
    pub candidates: usize,
    pub valid: usize,
    pub validity_rate: f64,
    pub syntax_rate: f64,
    pub dead_syntax: usize,
    pub dead_terminated: usize,
    pub dead_exception: usize,
    pub dead_fuel: usize,
    pub dead_skipped: usize,
    pub selected: usize,
    pub finalized: usize,
    pub test_cases: u64,
    pub new_points: usize,
    pub cum_coverage: usize,
    /// Union of the coverage of finalized test cases only.
    pub testcase_coverage: usize,
    pub pairs: usize,
    pub loss: Option<f64>,
    pub mismatches: usize,
    pub new_mismatches: usize,
}

/// A NEW mismatch with what is needed to replay it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedMismatch {
    #[serde(flatten)]
    pub record: MismatchRecord,
    pub iteration: u64,
    pub env_seed: u64,
    pub program: Vec<String>,
    /// Bugs that reproduce the divergence when enabled alone.
    pub bugs: Vec<BugId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub env_seed: u64,
    pub blocks: Vec<InstructionBlock>,
    pub scores: Vec<f64>,
    pub coverage: CoverageSet,
    pub stage: Stage,
}

/// Serializable campaign progress; the policy and memory are stored beside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub stage: Stage,
    pub iteration: u64,
    pub grm_iterations: u64,
    pub dut_iterations: u64,
    pub grm_validity: Vec<f64>,
    pub test_cases: u64,
    pub dut_instructions: u64,
    pub cumulative: CoverageSet,
    pub testcase_coverage: CoverageSet,
    pub freq: FrequencyMap,
    pub filter: MismatchFilter,
    pub reports: Vec<IterationReport>,
    pub new_mismatches: Vec<LoggedMismatch>,
    pub finalized: Vec<TestCase>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub iterations: u64,
    pub grm_iterations: u64,
    pub dut_iterations: u64,
    pub test_cases: u64,
    pub cum_coverage: usize,
    pub testcase_coverage: usize,
    pub new_mismatches: usize,
    pub bugs_found: BTreeSet<BugId>,
}

pub struct Campaign {
    pub config: CampaignConfig,
    pub vocab: Vocabulary,
    pub policy: Policy,
    pub memory: FuzzMemory<Lineage>,
    pub progress: Progress,
    pool: Option<rayon::ThreadPool>,
}

struct SimOut {
    validity: Validity,
    coverage: Option<CoverageSet>,
    mismatch: Option<MismatchRecord>,
}

pub fn policy_config_for(cfg: &CampaignConfig, vocab: &Vocabulary) -> PolicyConfig {
    PolicyConfig { eoi: vocab.eoi().id, ..cfg.policy.clone() }
}

/// Pretrains the policy on the synthetic corpus described by `cfg.pretrain`.
pub fn pretrain_policy(cfg: &CampaignConfig, vocab: &Vocabulary) -> Result<Policy, EngineError> {
    let corpus =
        synthetic_corpus(vocab, cfg.pretrain.corpus_documents, cfg.instructions_per_block, cfg.pretrain.corpus_seed);
    let (p, _) = Policy::pretrain(
        &corpus,
        vocab.len(),
        vocab.hash(),
        policy_config_for(cfg, vocab),
        cfg.pretrain.epochs,
        cfg.pretrain.lr,
    )?;
    Ok(p)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl Campaign {
    /// Starts a campaign from an already pretrained policy.
    pub fn new(config: CampaignConfig, policy: Policy) -> Result<Self, EngineError> {
        config.validate()?;
        let vocab = Vocabulary::default();
        if policy.vocab_hash() != vocab.hash() {
            return Err(EngineError::Config("policy was trained for a different vocabulary".into()));
        }
        let memory = FuzzMemory::new(config.memory.window, config.memory.recency_lambda)?;
        let stage =
            if config.grm_stage.enabled && config.grm_stage.max_iterations > 0 { Stage::Grm } else { Stage::Dut };
        let pool = match config.workers {
            0 => None,
            n => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| EngineError::Config(e.to_string()))?,
            ),
        };
        let mut policy = policy;
        policy.config.temperature = config.grm_stage.temperature;
        Ok(Campaign {
            config,
            vocab,
            policy,
            memory,
            progress: Progress {
                stage,
                iteration: 0,
                grm_iterations: 0,
                dut_iterations: 0,
                grm_validity: Vec::new(),
                test_cases: 0,
                dut_instructions: 0,
                cumulative: CoverageSet::new(),
                testcase_coverage: CoverageSet::new(),
                freq: FrequencyMap::new(),
                filter: MismatchFilter::new(),
                reports: Vec::new(),
                new_mismatches: Vec::new(),
                finalized: Vec::new(),
            },
            pool,
        })
    }

    /// Pretrains a policy and starts the campaign.
    pub fn from_config(config: CampaignConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let policy = pretrain_policy(&config, &Vocabulary::default())?;
        Self::new(config, policy)
    }

    /// Seeds the known-mismatch filter, e.g. from a previous triage.
    pub fn with_filter(mut self, filter: MismatchFilter) -> Self {
        self.progress.filter = filter;
        self
    }

    pub fn is_done(&self) -> bool {
        let p = &self.progress;
        let d = &self.config.dut_stage;
        p.stage == Stage::Dut
            && (p.test_cases >= d.max_test_cases
                || p.dut_iterations >= d.max_iterations
                || d.max_instructions.is_some_and(|m| p.dut_instructions >= m))
    }

    fn rng(&self, purpose: &str, index: u64) -> ChaCha8Rng {
        derive_rng(self.config.seed, self.progress.stage, self.progress.iteration, purpose, index)
    }

    pub fn run(&mut self) -> Result<CampaignSummary, EngineError> {
        while !self.is_done() {
            self.run_iteration()?;
        }
        Ok(self.summary())
    }

    pub fn summary(&self) -> CampaignSummary {
        let p = &self.progress;
        CampaignSummary {
            iterations: p.iteration,
            grm_iterations: p.grm_iterations,
            dut_iterations: p.dut_iterations,
            test_cases: p.test_cases,
            cum_coverage: p.cumulative.len(),
            testcase_coverage: p.testcase_coverage.len(),
            new_mismatches: p.new_mismatches.len(),
            bugs_found: p.new_mismatches.iter().flat_map(|m| m.bugs.iter().copied()).collect(),
        }
    }

    pub fn run_iteration(&mut self) -> Result<IterationReport, EngineError> {
        match self.pool.take() {
            Some(pool) => {
                let r = pool.install(|| self.iteration_inner());
                self.pool = Some(pool);
                r
            }
            None => self.iteration_inner(),
        }
    }

    fn sample_prefixes(&self) -> Result<Vec<Lineage>, EngineError> {
        let n = self.config.prefixes_per_iteration;
        let has_blocks = self.memory.entries().any(|e| !e.blocks.is_empty());
        let roots = if has_blocks { (n as f64 * self.config.root_fraction).round() as usize } else { n };
        let mut rng = self.rng("prefix", 0);
        let mut prefixes = if roots < n { self.memory.sample_blocks(n - roots, &mut rng)? } else { Vec::new() };
        prefixes.extend((0..roots).map(|_| Lineage::root(rng.gen())));
        Ok(prefixes)
    }

    fn simulate(&self, c: &Candidate, lineage: &Lineage, env: &Environment, h: Option<&CoverageSet>) -> SimOut {
        let block = match &c.block {
            Some(b) => b,
            None => return SimOut { validity: Validity::Dead(DeadReason::Syntax), coverage: None, mismatch: None },
        };
        let program = env.assemble(lineage.blocks.iter().chain(std::iter::once(block))).expect("parsed blocks encode");
        let grm = env.run_grm(&program, self.config.fuel);
        let validity = classify_with_threshold(&grm, true, self.config.min_retired);
        if h.is_none() {
            return SimOut { validity, coverage: None, mismatch: None };
        }
        let (dut, cov) = env.run_dut(&program, self.config.fuel, &self.config.bugs);
        let hash = program.hash();
        let id = format!("i{}-c{}", self.progress.iteration, c.index);
        let mismatch = compare_traces(
            &id,
            TraceView { program_hash: &hash, entries: &grm.trace },
            TraceView { program_hash: &hash, entries: &dut.trace },
            env.preamble_words,
        )
        .expect("same program on both sides");
        SimOut { validity, coverage: validity.is_valid().then_some(cov), mismatch }
    }

    fn attribute(&self, env: &Environment, program: &Program) -> Vec<BugId> {
        let grm = env.run_grm(program, self.config.fuel);
        let hash = program.hash();
        self.config
            .bugs
            .enabled
            .iter()
            .copied()
            .filter(|&b| {
                let (dut, _) = env.run_dut(program, self.config.fuel, &BugConfig::only(b));
                compare_traces(
                    "",
                    TraceView { program_hash: &hash, entries: &grm.trace },
                    TraceView { program_hash: &hash, entries: &dut.trace },
                    env.preamble_words,
                )
                .ok()
                .flatten()
                .is_some()
            })
            .collect()
    }

    fn iteration_inner(&mut self) -> Result<IterationReport, EngineError> {
        let stage = self.progress.stage;
        let iteration = self.progress.iteration;
        let cfg = self.config.clone();
        let dut = stage == Stage::Dut;

        let prefixes = self.sample_prefixes()?;
        let params = GenParams {
            candidates_per_prefix: cfg.candidates_per_prefix,
            instructions_per_block: cfg.instructions_per_block,
            token_cap: cfg.token_cap,
            temperature: if dut { cfg.dut_stage.temperature } else { cfg.grm_stage.temperature },
        };
        let seed = cfg.seed;
        let mut cands = generate_blocks(&prefixes, &self.policy, &self.vocab, &params, iteration, |p| {
            derive_rng(seed, stage, iteration, "generate", p as u64)
        });

        let envs: Vec<Environment> = prefixes.par_iter().map(|l| Environment::new(l.env_seed)).collect();
        // Prefix coverage H for intra-test scoring.
        let prefix_cov: Vec<Option<CoverageSet>> = if dut {
            prefixes
                .par_iter()
                .zip(&envs)
                .map(|(l, env)| {
                    let p = env.assemble(&l.blocks).expect("stored blocks encode");
                    Some(env.run_dut(&p, cfg.fuel, &cfg.bugs).1)
                })
                .collect()
        } else {
            vec![None; prefixes.len()]
        };
        let sims: Vec<SimOut> = cands
            .par_iter()
            .map(|c| self.simulate(c, &prefixes[c.prefix], &envs[c.prefix], prefix_cov[c.prefix].as_ref()))
            .collect();

        let mut new_cov = CoverageSet::new();
        let mut mismatches = Vec::new();
        for (c, s) in cands.iter_mut().zip(sims) {
            c.validity = s.validity;
            if let (Some(cov), Some(h)) = (s.coverage, prefix_cov[c.prefix].as_ref()) {
                c.score = Some(score_transition(h, &cov, &self.progress.freq, &cfg.scoring).value);
                new_cov.union_with(&cov);
                c.coverage = Some(cov);
            }
            if let Some(m) = s.mismatch {
                mismatches.push((c.index, m));
            }
        }
        let before = self.progress.cumulative.len();
        self.progress.cumulative.union_with(&new_cov);
        let new_points = self.progress.cumulative.len() - before;

        // Known-mismatch filtering, serial in candidate order.
        let mut new_count = 0;
        for (idx, rec) in &mismatches {
            if self.progress.filter.filter(rec) == FilterOutcome::New {
                new_count += 1;
                let c = &cands[*idx];
                let lineage = &prefixes[c.prefix];
                let env = &envs[c.prefix];
                let block = c.block.as_ref().expect("mismatch implies a parsed block");
                let program = env.assemble(lineage.blocks.iter().chain(std::iter::once(block))).expect("encodes");
                let source = lineage
                    .blocks
                    .iter()
                    .chain(std::iter::once(block))
                    .flat_map(|b| b.instructions.iter().map(|i| i.to_string()))
                    .collect();
                let bugs = self.attribute(env, &program);
                self.progress.new_mismatches.push(LoggedMismatch {
                    record: rec.clone(),
                    iteration,
                    env_seed: lineage.env_seed,
                    program: source,
                    bugs,
                });
            }
        }

        let selected = filter_and_select(&cands, stage, cfg.prefixes_per_iteration, &mut self.rng("select", 0));
        let mut keep = Vec::new();
        let mut finalized = 0;
        for &i in &selected {
            let c = &cands[i];
            let block = c.block.clone().expect("selected candidates parsed");
            let next = prefixes[c.prefix].extend(block, &c.tokens, c.score);
            if next.depth() >= cfg.blocks_per_testcase {
                finalized += 1;
                if dut {
                    let cov = c.coverage.unwrap_or_default();
                    self.progress.freq.commit(&cov);
                    self.progress.testcase_coverage.union_with(&cov);
                    self.progress.test_cases += 1;
                    self.progress.finalized.push(TestCase {
                        env_seed: next.env_seed,
                        blocks: next.blocks,
                        scores: next.scores,
                        coverage: cov,
                        stage,
                    });
                }
            } else {
                keep.push(next);
            }
        }

        let pairs = form_pairs(&cands, &prefixes, stage, iteration);
        let n_pairs = pairs.len();
        if !keep.is_empty() || !pairs.is_empty() {
            self.memory.update(MemoryEntry { iteration, blocks: keep, pairs })?;
        }
        let mut loss = None;
        if self.memory.entries().any(|e| !e.pairs.is_empty()) {
            for u in 0..cfg.refine.updates_per_iteration {
                let batch = self.memory.sample_pairs(cfg.refine.batch_size, &mut self.rng("pairs", u as u64))?;
                loss = Some(self.policy.simpo_update(&batch, &cfg.reward, cfg.refine.lr)?);
            }
        }

        let count = |r: DeadReason| cands.iter().filter(|c| c.validity == Validity::Dead(r)).count();
        let total = cands.len();
        let valid = cands.iter().filter(|c| c.validity.is_valid()).count();
        let syntax_ok = total - count(DeadReason::Syntax);
        let report = IterationReport {
            iteration,
            stage,
            candidates: total,
            valid,
            validity_rate: valid as f64 / total as f64,
            syntax_rate: syntax_ok as f64 / total as f64,
            dead_syntax: count(DeadReason::Syntax),
            dead_terminated: count(DeadReason::Terminated),
            dead_exception: count(DeadReason::Exception),
            dead_fuel: count(DeadReason::Fuel),
            dead_skipped: count(DeadReason::Skipped),
            selected: selected.len(),
            finalized,
            test_cases: self.progress.test_cases,
            new_points,
            cum_coverage: self.progress.cumulative.len(),
            testcase_coverage: self.progress.testcase_coverage.len(),
            pairs: n_pairs,
            loss,
            mismatches: mismatches.len(),
            new_mismatches: new_count,
        };
        self.progress.reports.push(report.clone());
        self.progress.iteration += 1;
        match stage {
            Stage::Grm => {
                self.progress.grm_iterations += 1;
                self.progress.grm_validity.push(report.validity_rate);
                let w = cfg.grm_stage.switch_window;
                let hist = &self.progress.grm_validity;
                let rolling_ok = hist.len() >= w && mean(&hist[hist.len() - w..]) > cfg.grm_stage.switch_threshold;
                if rolling_ok || self.progress.grm_iterations >= cfg.grm_stage.max_iterations {
                    self.progress.stage = Stage::Dut;
                    self.memory.clear_pairs();
                    self.policy.config.temperature = cfg.dut_stage.temperature;
                }
            }
            Stage::Dut => {
                self.progress.dut_iterations += 1;
                self.progress.dut_instructions += (total * cfg.instructions_per_block) as u64;
            }
        }
        if report.syntax_rate < cfg.collapse_floor {
            return Err(EngineError::Collapse { iteration, rate: report.syntax_rate, floor: cfg.collapse_floor });
        }
        Ok(report)
    }

    /// Writes `progress.json`, `policy.bin` and `memory.jsonl` into `dir`.
    pub fn checkpoint(&self, dir: &Path) -> Result<(), EngineError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("progress.json"), serde_json::to_vec(&self.progress).map_err(EngineError::json)?)?;
        self.policy.write_checkpoint(fs::File::create(dir.join("policy.bin"))?)?;
        self.memory.write_jsonl(fs::File::create(dir.join("memory.jsonl"))?)?;
        Ok(())
    }

    pub fn resume(config: CampaignConfig, dir: &Path) -> Result<Self, EngineError> {
        let vocab = Vocabulary::default();
        let policy = Policy::read_checkpoint(BufReader::new(fs::File::open(dir.join("policy.bin"))?), &vocab.hash())?;
        let mut c = Campaign::new(config, policy)?;
        // `new` resets the sampling temperature for the GRM stage.
        c.progress = serde_json::from_slice(&fs::read(dir.join("progress.json"))?).map_err(EngineError::json)?;
        c.policy.config.temperature = match c.progress.stage {
            Stage::Grm => c.config.grm_stage.temperature,
            Stage::Dut => c.config.dut_stage.temperature,
        };
        c.memory = FuzzMemory::read_jsonl(BufReader::new(fs::File::open(dir.join("memory.jsonl"))?))?;
        Ok(c)
    }
}
