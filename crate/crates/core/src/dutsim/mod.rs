// SPDX-License-Identifier: Apache-2.0

//! Device-under-test model: the reference interpreter with coverage
//! instrumentation and optional planted deviations.

mod bugs;
mod coverage;
mod universe;

pub use bugs::{BugConfig, BugId};
pub use coverage::{CoverageObserver, CoverageSet};
pub use universe::{
    all_sites, coverage_universe, site_id, universe_hash, CoveragePoint, PointKind, Site, UNIVERSE_SIZE,
};

use crate::isa::{parse_program, InstructionBlock, IsaError};
use crate::refmodel::{run_image, ArchState, ExecResult, ProgramImage};

/// Runs `block` at `state.pc` on the device model.
pub fn dut_run_block(
    state: ArchState,
    block: &InstructionBlock,
    fuel: u64,
    bugs: &BugConfig,
) -> Result<(ExecResult, CoverageSet), IsaError> {
    let image = ProgramImage::assemble(state.pc, &block.instructions)?;
    let pc = state.pc;
    Ok(dut_run_image(state, &image, pc, pc, fuel, bugs))
}

pub fn dut_run_image(
    state: ArchState,
    image: &ProgramImage,
    entry: u64,
    program_start: u64,
    fuel: u64,
    bugs: &BugConfig,
) -> (ExecResult, CoverageSet) {
    let mut obs = CoverageObserver::default();
    let r = run_image(state, image, entry, program_start, fuel, &bugs.quirks(), &mut obs);
    (r, obs.set)
}

/// Hand-written program exposing `bug`.
pub fn witness_source(bug: BugId) -> &'static str {
    match bug {
        BugId::V1MbeIgnored => include_str!("../../witnesses/v1.s"),
        BugId::V2SbeIgnored => include_str!("../../witnesses/v2.s"),
        BugId::V3DelegatedStiVisible => include_str!("../../witnesses/v3.s"),
        BugId::V4StvalOne => include_str!("../../witnesses/v4.s"),
        BugId::V5MbeSbeWritable => include_str!("../../witnesses/v5.s"),
    }
}

pub fn witness_block(bug: BugId) -> InstructionBlock {
    let insts = parse_program(witness_source(bug)).expect("witness programs parse");
    InstructionBlock::new(insts, 0)
}
