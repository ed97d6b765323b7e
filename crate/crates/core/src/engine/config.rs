// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dutsim::BugConfig;
use crate::policy::{PolicyConfig, RewardParams};
use crate::scoring::ScoringParams;

use super::EngineError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrmStageConfig {
    pub enabled: bool,
    pub max_iterations: u64,
    /// Rolling validity rate that ends the stage.
    pub switch_threshold: f64,
    pub switch_window: usize,
    pub temperature: f64,
}

impl Default for GrmStageConfig {
    fn default() -> Self {
        GrmStageConfig {
            enabled: true,
            max_iterations: 200,
            switch_threshold: 0.6,
            switch_window: 10,
            temperature: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DutStageConfig {
    /// Finalized test cases after which the stage stops.
    pub max_test_cases: u64,
    pub max_iterations: u64,
    /// Generated instructions after which the stage stops.
    pub max_instructions: Option<u64>,
    pub temperature: f64,
}

impl Default for DutStageConfig {
    fn default() -> Self {
        DutStageConfig { max_test_cases: 1600, max_iterations: 1000, max_instructions: None, temperature: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Documents of `instructions_per_block` random instructions.
    pub corpus_documents: usize,
    pub corpus_seed: u64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { corpus_documents: 1500, corpus_seed: 0x0c0f_fee, epochs: 40, lr: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub updates_per_iteration: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { lr: 5.0, batch_size: 128, updates_per_iteration: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub window: usize,
    pub recency_lambda: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig { window: 10, recency_lambda: 0.9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub name: String,
    pub seed: u64,
    pub blocks_per_testcase: usize,
    pub instructions_per_block: usize,
    pub candidates_per_prefix: usize,
    pub prefixes_per_iteration: usize,
    /// Share of each iteration's prefixes that start a fresh lineage.
    pub root_fraction: f64,
    pub token_cap: usize,
    pub fuel: u64,
    pub min_retired: f64,
    /// Minimum syntactic-validity rate before the campaign aborts.
    pub collapse_floor: f64,
    /// Worker threads for simulation; 0 uses available parallelism.
    pub workers: usize,
    pub grm_stage: GrmStageConfig,
    pub dut_stage: DutStageConfig,
    pub scoring: ScoringParams,
    pub reward: RewardParams,
    pub policy: PolicyConfig,
    pub pretrain: PretrainConfig,
    pub refine: RefineConfig,
    pub memory: MemoryConfig,
    pub bugs: BugConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            name: "campaign".into(),
            seed: 1,
            blocks_per_testcase: 5,
            instructions_per_block: 6,
            candidates_per_prefix: 5,
            prefixes_per_iteration: 80,
            root_fraction: 0.2,
            token_cap: 24,
            fuel: 256,
            min_retired: 0.5,
            collapse_floor: 0.05,
            workers: 0,
            grm_stage: GrmStageConfig::default(),
            dut_stage: DutStageConfig::default(),
            scoring: ScoringParams::default(),
            reward: RewardParams::default(),
            policy: PolicyConfig::default(),
            pretrain: PretrainConfig::default(),
            refine: RefineConfig::default(),
            memory: MemoryConfig::default(),
            bugs: BugConfig::all(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        for (name, v) in [
            ("blocks_per_testcase", self.blocks_per_testcase),
            ("instructions_per_block", self.instructions_per_block),
            ("candidates_per_prefix", self.candidates_per_prefix),
            ("prefixes_per_iteration", self.prefixes_per_iteration),
            ("token_cap", self.token_cap),
            ("refine.batch_size", self.refine.batch_size),
            ("memory.window", self.memory.window),
            ("grm_stage.switch_window", self.grm_stage.switch_window),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.root_fraction) {
            return bad(format!("root_fraction must be in [0, 1], got {}", self.root_fraction));
        }
        if !(0.0..=1.0).contains(&self.min_retired) || !(0.0..=1.0).contains(&self.collapse_floor) {
            return bad("min_retired and collapse_floor must be in [0, 1]".into());
        }
        if !(self.memory.recency_lambda > 0.0 && self.memory.recency_lambda <= 1.0) {
            return bad(format!("memory.recency_lambda must be in (0, 1], got {}", self.memory.recency_lambda));
        }
        if self.fuel == 0 {
            return bad("fuel must be at least 1".into());
        }
        if self.policy.order == 0 {
            return bad("policy.order must be at least 1".into());
        }
        if !(self.refine.lr >= 0.0) || !(self.pretrain.lr >= 0.0) {
            return bad("learning rates must be non-negative".into());
        }
        if !(self.grm_stage.temperature >= 0.0) || !(self.dut_stage.temperature >= 0.0) {
            return bad("temperatures must be non-negative".into());
        }
        self.scoring.validate().map_err(EngineError::Config)
    }

    /// Reads TOML or JSON, chosen by file extension.
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: CampaignConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| EngineError::Config(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| EngineError::Config(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
