// SPDX-License-Identifier: Apache-2.0

//! Golden reference model: an ISA-conforming RV64I + Zicsr interpreter with
//! M/S/U privilege, traps, delegation, PMP entry 0 and per-privilege endianness.

mod exec;
pub mod hooks;
mod run;
mod state;
mod trace;

pub use exec::{step, Flow, JumpKind};
pub use hooks::{cause, Cond, EdgeKind, LineSite, NoObserver, Observer, Quirks, TRAP_CAUSES};
pub use run::{
    classify_block, classify_with_threshold, run_block, run_image, run_window, DeadReason, ExecResult, Outcome,
    ProgramImage, TermKind, Validity, DEFAULT_FUEL, DEFAULT_MIN_RETIRED,
};
pub use state::{
    irq, mstatus, pmp, ArchState, Memory, Privilege, DATA_BASE, DATA_SIZE, MISA, PROGRAM_BASE, RAM_BASE, RAM_SIZE,
};
pub use trace::{trace_from_jsonl, trace_to_jsonl, MemAccess, TraceEntry, TrapInfo};
