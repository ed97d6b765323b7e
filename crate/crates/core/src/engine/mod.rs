// SPDX-License-Identifier: Apache-2.0

//! Two-stage campaign driver: block generation, dead-block filtering,
//! selection, preference pairs, policy refinement and memory updates.

mod campaign;
mod config;
mod corpus;
mod env;
mod report;
mod select;

pub use campaign::{
    derive_rng, policy_config_for, pretrain_policy, Campaign, CampaignSummary, IterationReport, LoggedMismatch,
    Progress, TestCase,
};
pub use config::{CampaignConfig, DutStageConfig, GrmStageConfig, MemoryConfig, PretrainConfig, RefineConfig};
pub use corpus::synthetic_corpus;
pub use env::{Environment, Program};
pub use report::{
    read_mismatch_log, render_trace_diff, replay, replay_bare, replay_traces, write_artifacts, write_reports_csv,
    ReplayOutcome, ReplayTraces,
};
pub use select::{
    filter_and_select, form_pairs, generate_blocks, parse_block, sample_block, Candidate, GenParams, Lineage,
    CONTEXT_TAIL,
};

pub use crate::policy::Stage;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("iteration {iteration}: syntactic validity {rate:.3} fell below the floor {floor}")]
    Collapse { iteration: u64, rate: f64, floor: f64 },
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error(transparent)]
    Memory(#[from] crate::fuzzmem::MemoryError),
    #[error(transparent)]
    Difftest(#[from] crate::difftest::DifftestError),
    #[error(transparent)]
    Isa(#[from] crate::isa::IsaError),
    #[error("serialization: {0}")]
    Serde(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EngineError {
    pub(crate) fn json(e: serde_json::Error) -> Self {
        EngineError::Serde(e.to_string())
    }
}
