// SPDX-License-Identifier: Apache-2.0

//! Experiment presets: named sets of campaign arms and their comparative reports.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::dutsim::UNIVERSE_SIZE;
use crate::engine::{Campaign, CampaignConfig, EngineError};
use crate::policy::Policy;

/// Generated-instruction budget of the DUT stage in block-configuration arms.
pub const BLOCK_INSTRUCTION_BUDGET: u64 = 100_000;
/// GRM-stage iteration cap in block-configuration arms.
pub const BLOCK_GRM_CAP: u64 = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentPreset {
    Baseline,
    NoGrm,
    Blocks5x6,
    Blocks3x10,
    Blocks1x30,
    Blocks,
    Robustness5Seeds,
}

impl ExperimentPreset {
    pub const ALL: [ExperimentPreset; 7] = [
        ExperimentPreset::Baseline,
        ExperimentPreset::NoGrm,
        ExperimentPreset::Blocks5x6,
        ExperimentPreset::Blocks3x10,
        ExperimentPreset::Blocks1x30,
        ExperimentPreset::Blocks,
        ExperimentPreset::Robustness5Seeds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentPreset::Baseline => "baseline",
            ExperimentPreset::NoGrm => "no-grm",
            ExperimentPreset::Blocks5x6 => "blocks-5x6",
            ExperimentPreset::Blocks3x10 => "blocks-3x10",
            ExperimentPreset::Blocks1x30 => "blocks-1x30",
            ExperimentPreset::Blocks => "blocks",
            ExperimentPreset::Robustness5Seeds => "robustness-5seeds",
        }
    }

    /// Expands to complete campaign configurations, one per arm.
    pub fn arms(self, base: &CampaignConfig) -> Vec<Arm> {
        let arm = |name: String, config: CampaignConfig| Arm { name, config };
        let blocks = |m: usize, k: usize| {
            let mut c = base.clone();
            c.blocks_per_testcase = m;
            c.instructions_per_block = k;
            c.grm_stage.max_iterations = c.grm_stage.max_iterations.min(BLOCK_GRM_CAP);
            c.dut_stage.max_test_cases = u64::MAX;
            c.dut_stage.max_instructions = Some(base.dut_stage.max_instructions.unwrap_or(BLOCK_INSTRUCTION_BUDGET));
            c.name = format!("{}-{m}x{k}", base.name);
            arm(format!("{m}-{k}"), c)
        };
        match self {
            ExperimentPreset::Baseline => vec![arm("baseline".into(), base.clone())],
            ExperimentPreset::NoGrm => {
                let mut off = base.clone();
                off.grm_stage.enabled = false;
                off.name = format!("{}-no-grm", base.name);
                let mut on = base.clone();
                on.name = format!("{}-grm", base.name);
                vec![arm("grm".into(), on), arm("no-grm".into(), off)]
            }
            ExperimentPreset::Blocks5x6 => vec![blocks(5, 6)],
            ExperimentPreset::Blocks3x10 => vec![blocks(3, 10)],
            ExperimentPreset::Blocks1x30 => vec![blocks(1, 30)],
            ExperimentPreset::Blocks => vec![blocks(5, 6), blocks(3, 10), blocks(1, 30)],
            ExperimentPreset::Robustness5Seeds => (0..5)
                .map(|i| {
                    let mut c = base.clone();
                    c.seed = base.seed + i;
                    c.name = format!("{}-seed{}", base.name, c.seed);
                    arm(format!("seed{}", c.seed), c)
                })
                .collect(),
        }
    }
}

impl fmt::Display for ExperimentPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
            format!("unknown preset `{s}`; expected one of {}", names.join(", "))
        })
    }
}

#[derive(Clone, Debug)]
pub struct Arm {
    pub name: String,
    pub config: CampaignConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmRow {
    pub arm: String,
    pub iteration: u64,
    pub stage: crate::policy::Stage,
    pub cum_coverage: usize,
    pub coverage_pct: f64,
    pub testcase_coverage: usize,
    pub invalid_rate: f64,
    pub extendable_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmSummary {
    pub arm: String,
    pub seed: u64,
    pub grm_iterations: u64,
    pub dut_iterations: u64,
    pub test_cases: u64,
    pub dut_instructions: u64,
    pub cum_coverage: usize,
    pub coverage_pct: f64,
    pub testcase_coverage: usize,
    pub mean_invalid_rate: f64,
    pub new_mismatches: usize,
    pub bugs_found: String,
}

pub struct ArmResult {
    pub arm: Arm,
    pub campaign: Campaign,
}

impl ArmResult {
    pub fn rows(&self) -> Vec<ArmRow> {
        self.campaign
            .progress
            .reports
            .iter()
            .map(|r| ArmRow {
                arm: self.arm.name.clone(),
                iteration: r.iteration,
                stage: r.stage,
                cum_coverage: r.cum_coverage,
                coverage_pct: 100.0 * r.cum_coverage as f64 / UNIVERSE_SIZE as f64,
                testcase_coverage: r.testcase_coverage,
                invalid_rate: 1.0 - r.validity_rate,
                extendable_rate: r.validity_rate,
            })
            .collect()
    }

    pub fn summary(&self) -> ArmSummary {
        let s = self.campaign.summary();
        let reports = &self.campaign.progress.reports;
        ArmSummary {
            arm: self.arm.name.clone(),
            seed: self.arm.config.seed,
            grm_iterations: s.grm_iterations,
            dut_iterations: s.dut_iterations,
            test_cases: s.test_cases,
            dut_instructions: self.campaign.progress.dut_instructions,
            cum_coverage: s.cum_coverage,
            coverage_pct: 100.0 * s.cum_coverage as f64 / UNIVERSE_SIZE as f64,
            testcase_coverage: s.testcase_coverage,
            mean_invalid_rate: reports.iter().map(|r| 1.0 - r.validity_rate).sum::<f64>() / reports.len().max(1) as f64,
            new_mismatches: s.new_mismatches,
            bugs_found: s.bugs_found.iter().map(|b| b.short()).collect::<Vec<_>>().join(";"),
        }
    }
}

/// Runs every arm to completion from a shared pretrained policy.
pub fn run_arms(arms: Vec<Arm>, policy: &Policy) -> Result<Vec<ArmResult>, EngineError> {
    arms.into_iter()
        .map(|arm| {
            let mut campaign = Campaign::new(arm.config.clone(), policy.clone())?;
            campaign.run()?;
            Ok(ArmResult { arm, campaign })
        })
        .collect()
}

fn to_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<(), EngineError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| EngineError::Serde(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Per-iteration coverage, invalid rate and extendable rate for every arm.
pub fn write_iterations_csv<W: Write>(w: W, results: &[ArmResult]) -> Result<(), EngineError> {
    let rows: Vec<ArmRow> = results.iter().flat_map(ArmResult::rows).collect();
    to_csv(w, &rows)
}

pub fn write_summary_csv<W: Write>(w: W, results: &[ArmResult]) -> Result<(), EngineError> {
    let rows: Vec<ArmSummary> = results.iter().map(ArmResult::summary).collect();
    to_csv(w, &rows)
}

/// Mean, population variance and coefficient of variation.
pub fn spread(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let cv = if mean == 0.0 { 0.0 } else { var.sqrt() / mean };
    (mean, var, cv)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpreadRow {
    pub metric: String,
    pub mean: f64,
    pub variance: f64,
    pub cv: f64,
}

/// Mean and variance of final coverage and test-case count across arms.
pub fn write_spread_csv<W: Write>(w: W, results: &[ArmResult]) -> Result<(), EngineError> {
    let summaries: Vec<ArmSummary> = results.iter().map(ArmResult::summary).collect();
    let metric = |name: &str, f: &dyn Fn(&ArmSummary) -> f64| {
        let v: Vec<f64> = summaries.iter().map(f).collect();
        let (mean, variance, cv) = spread(&v);
        SpreadRow { metric: name.into(), mean, variance, cv }
    };
    let rows = vec![
        metric("cum_coverage", &|s| s.cum_coverage as f64),
        metric("coverage_pct", &|s| s.coverage_pct),
        metric("testcase_coverage", &|s| s.testcase_coverage as f64),
        metric("test_cases", &|s| s.test_cases as f64),
        metric("new_mismatches", &|s| s.new_mismatches as f64),
    ];
    to_csv(w, &rows)
}
