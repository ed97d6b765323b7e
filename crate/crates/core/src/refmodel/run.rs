// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::isa::{encode, Instruction, InstructionBlock, IsaError};

use super::exec::{step, Flow, JumpKind};
use super::hooks::{NoObserver, Observer, Quirks};
use super::state::ArchState;
use super::trace::TraceEntry;

pub const DEFAULT_FUEL: u64 = 256;
pub const DEFAULT_MIN_RETIRED: f64 = 0.5;

/// Assembled words plus the word offset where each logical instruction starts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramImage {
    pub base: u64,
    pub words: Vec<u32>,
    pub starts: Vec<usize>,
}

impl ProgramImage {
    pub fn assemble(base: u64, insts: &[Instruction]) -> Result<Self, IsaError> {
        let mut words = Vec::new();
        let mut starts = Vec::with_capacity(insts.len());
        for i in insts {
            starts.push(words.len());
            words.extend(encode(i)?);
        }
        Ok(ProgramImage { base, words, starts })
    }

    pub fn end(&self) -> u64 {
        self.base + 4 * self.words.len() as u64
    }

    /// Address of logical instruction `i` (or the end address when `i == len`).
    pub fn addr_of(&self, i: usize) -> u64 {
        match self.starts.get(i) {
            Some(&w) => self.base + 4 * w as u64,
            None => self.end(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TermKind {
    Jal,
    Jalr,
    Branch,
    Mret,
    Sret,
}

impl From<JumpKind> for TermKind {
    fn from(k: JumpKind) -> Self {
        match k {
            JumpKind::Jal => TermKind::Jal,
            JumpKind::Jalr => TermKind::Jalr,
            JumpKind::Branch => TermKind::Branch,
            JumpKind::Mret => TermKind::Mret,
            JumpKind::Sret => TermKind::Sret,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Completed,
    Exception(u8),
    Terminated(TermKind),
    FuelExhausted,
}

#[derive(Clone, Debug)]
pub struct ExecResult {
    pub trace: Vec<TraceEntry>,
    pub outcome: Outcome,
    pub final_state: ArchState,
    /// Address range whose instructions count toward the retired fraction.
    pub program: (u64, u64),
}

impl ExecResult {
    /// Fraction of distinct program words that executed at least once.
    pub fn retired_fraction(&self) -> f64 {
        let (lo, hi) = self.program;
        let total = (hi - lo) / 4;
        if total == 0 {
            return 1.0;
        }
        let seen: HashSet<u64> = self.trace.iter().map(|e| e.pc).filter(|pc| (lo..hi).contains(pc)).collect();
        seen.len() as f64 / total as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeadReason {
    Syntax,
    Terminated,
    Exception,
    Fuel,
    Skipped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    Dead(DeadReason),
}

impl Validity {
    pub fn is_valid(self) -> bool {
        self == Validity::Valid
    }
}

/// Runs from `state.pc` inside `[window.0, window.1)`; the image must already be in memory.
///
/// `program` is the sub-range used for the retired-fraction rule.
pub fn run_window<O: Observer>(
    mut state: ArchState,
    window: (u64, u64),
    program: (u64, u64),
    fuel: u64,
    quirks: &Quirks,
    obs: &mut O,
) -> ExecResult {
    let (start, end) = window;
    let mut trace = Vec::new();
    let outcome = loop {
        if trace.len() as u64 >= fuel {
            break Outcome::FuelExhausted;
        }
        let (entry, flow) = step(&mut state, quirks, obs, trace.len() as u64);
        let cause = entry.exception.map(|e| e.cause);
        trace.push(entry);
        match flow {
            Flow::Trap => break Outcome::Exception(cause.expect("trap flow carries a cause")),
            Flow::Next if state.pc == end => break Outcome::Completed,
            Flow::Next => {}
            Flow::Jump { target, kind } => {
                if target == end {
                    break Outcome::Completed;
                }
                if target < start || target > end {
                    break Outcome::Terminated(kind.into());
                }
            }
        }
    };
    ExecResult { trace, outcome, final_state: state, program }
}

/// Loads `image` at its base and executes it starting at `entry`.
pub fn run_image<O: Observer>(
    mut state: ArchState,
    image: &ProgramImage,
    entry: u64,
    program_start: u64,
    fuel: u64,
    quirks: &Quirks,
    obs: &mut O,
) -> ExecResult {
    state.memory.load_words(image.base, &image.words);
    state.pc = entry;
    run_window(state, (image.base, image.end()), (program_start, image.end()), fuel, quirks, obs)
}

/// Reference execution of a single block placed at `state.pc`.
pub fn run_block(state: ArchState, block: &InstructionBlock, fuel: u64) -> Result<ExecResult, IsaError> {
    let image = ProgramImage::assemble(state.pc, &block.instructions)?;
    let pc = state.pc;
    Ok(run_image(state, &image, pc, pc, fuel, &Quirks::NONE, &mut NoObserver))
}

/// Validity rule for generated blocks.
pub fn classify_block(result: &ExecResult, syntax_ok: bool) -> Validity {
    classify_with_threshold(result, syntax_ok, DEFAULT_MIN_RETIRED)
}

pub fn classify_with_threshold(result: &ExecResult, syntax_ok: bool, min_retired: f64) -> Validity {
    if !syntax_ok {
        return Validity::Dead(DeadReason::Syntax);
    }
    match result.outcome {
        Outcome::Terminated(_) => Validity::Dead(DeadReason::Terminated),
        Outcome::Exception(_) => Validity::Dead(DeadReason::Exception),
        Outcome::FuelExhausted => Validity::Dead(DeadReason::Fuel),
        Outcome::Completed if result.retired_fraction() < min_retired => Validity::Dead(DeadReason::Skipped),
        Outcome::Completed => Validity::Valid,
    }
}
