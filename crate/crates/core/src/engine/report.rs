// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::difftest::{compare_traces, program_hash, MismatchRecord, TraceView};
use crate::dutsim::{dut_run_block, BugConfig};
use crate::isa::{decode, encode, Instruction, InstructionBlock};
use crate::refmodel::{run_block, ArchState, TraceEntry};

use super::campaign::{Campaign, IterationReport, LoggedMismatch};
use super::env::Environment;
use super::EngineError;

pub fn write_reports_csv<W: Write>(w: W, reports: &[IterationReport]) -> Result<(), EngineError> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        out.serialize(r).map_err(|e| EngineError::Serde(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_mismatch_log<R: BufRead>(r: R) -> Result<Vec<LoggedMismatch>, EngineError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(EngineError::json)?);
    }
    Ok(out)
}

/// Writes the campaign output tree under `dir`:
/// `config.lock.json`, `reports/iterations.csv`, `mismatches/new.jsonl`,
/// `filter.json`, `testcases.jsonl` and `checkpoints/latest/`.
pub fn write_artifacts(c: &Campaign, dir: &Path) -> Result<(), EngineError> {
    fs::create_dir_all(dir.join("reports"))?;
    fs::create_dir_all(dir.join("mismatches"))?;
    fs::write(dir.join("config.lock.json"), c.config.to_json())?;
    write_reports_csv(fs::File::create(dir.join("reports/iterations.csv"))?, &c.progress.reports)?;
    let mut f = fs::File::create(dir.join("mismatches/new.jsonl"))?;
    for m in &c.progress.new_mismatches {
        writeln!(f, "{}", serde_json::to_string(m).map_err(EngineError::json)?)?;
    }
    fs::write(dir.join("filter.json"), c.progress.filter.to_json())?;
    let mut f = fs::File::create(dir.join("testcases.jsonl"))?;
    for t in &c.progress.finalized {
        writeln!(f, "{}", serde_json::to_string(t).map_err(EngineError::json)?)?;
    }
    c.checkpoint(&dir.join("checkpoints/latest"))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutcome {
    /// Divergence observed on this replay, if any.
    pub record: Option<MismatchRecord>,
    /// True when the replay diverges with the logged signature.
    pub reproduced: bool,
}

/// Both traces of one replayed program.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayTraces {
    pub program_hash: String,
    pub grm: Vec<TraceEntry>,
    pub dut: Vec<TraceEntry>,
    /// Leading entries excluded from comparison.
    pub skip: usize,
    pub record: Option<MismatchRecord>,
}

fn check_hash(hash: &str, expected: Option<&str>) -> Result<(), EngineError> {
    match expected {
        Some(e) if e != hash => Err(EngineError::Config(format!(
            "program hash {hash} does not match the expected {e}; check the environment seed"
        ))),
        _ => Ok(()),
    }
}

/// Re-executes a logged mismatch inside its environment.
///
/// `env_seed` overrides the logged seed; the program hash must still match.
pub fn replay_traces(
    m: &LoggedMismatch,
    env_seed: Option<u64>,
    fuel: u64,
    bugs: &BugConfig,
) -> Result<ReplayTraces, EngineError> {
    let insts = m.program.iter().map(|s| s.parse::<Instruction>()).collect::<Result<Vec<_>, _>>()?;
    let env = Environment::new(env_seed.unwrap_or(m.env_seed));
    let block = InstructionBlock::new(insts, m.iteration);
    let program = env.assemble([&block])?;
    let hash = program.hash();
    check_hash(&hash, Some(&m.record.program_hash))?;
    let grm = env.run_grm(&program, fuel).trace;
    let dut = env.run_dut(&program, fuel, bugs).0.trace;
    let record = compare_traces(
        &m.record.test_case,
        TraceView { program_hash: &hash, entries: &grm },
        TraceView { program_hash: &hash, entries: &dut },
        env.preamble_words,
    )?;
    Ok(ReplayTraces { program_hash: hash, grm, dut, skip: env.preamble_words, record })
}

/// Runs a bare program from the reset state of `seed`, without a preamble.
pub fn replay_bare(
    id: &str,
    insts: &[Instruction],
    seed: u64,
    fuel: u64,
    bugs: &BugConfig,
    expected_hash: Option<&str>,
) -> Result<ReplayTraces, EngineError> {
    let mut words = Vec::new();
    for i in insts {
        words.extend(encode(i)?);
    }
    let hash = program_hash(&words, seed);
    check_hash(&hash, expected_hash)?;
    let block = InstructionBlock::new(insts.to_vec(), 0);
    let grm = run_block(ArchState::reset(seed), &block, fuel)?.trace;
    let dut = dut_run_block(ArchState::reset(seed), &block, fuel, bugs)?.0.trace;
    let record = compare_traces(
        id,
        TraceView { program_hash: &hash, entries: &grm },
        TraceView { program_hash: &hash, entries: &dut },
        0,
    )?;
    Ok(ReplayTraces { program_hash: hash, grm, dut, skip: 0, record })
}

/// Re-executes a logged mismatch on both models with `bugs` enabled.
pub fn replay(m: &LoggedMismatch, fuel: u64, bugs: &BugConfig) -> Result<ReplayOutcome, EngineError> {
    let t = replay_traces(m, None, fuel, bugs)?;
    let reproduced = t.record.as_ref().is_some_and(|r| r.signature == m.record.signature);
    Ok(ReplayOutcome { record: t.record, reproduced })
}

fn effect(e: Option<&TraceEntry>) -> String {
    let Some(e) = e else { return "-".into() };
    let mut parts = vec![format!("{:?}", e.privilege)];
    if let Some((r, v)) = e.reg {
        parts.push(format!("x{r}={v:#x}"));
    }
    if let Some(m) = e.mem {
        let dir = if m.write { "st" } else { "ld" };
        parts.push(format!("{dir}[{:#x}]={:#x}", m.addr, m.data));
    }
    if let Some(t) = e.exception {
        parts.push(format!("trap {} tval={:#x}", t.cause, t.tval));
    }
    parts.join(" ")
}

/// Aligned GRM/DUT listing; the first divergence is marked with `>>`.
pub fn render_trace_diff(t: &ReplayTraces) -> String {
    let first = t.record.as_ref().map(|r| r.seq);
    let n = t.grm.len().max(t.dut.len());
    let mut out = format!("program {}\n", t.program_hash);
    out.push_str(&format!("{:<3}{:>5}  {:<18} {:<28} {:<40} {}\n", "", "seq", "pc", "instruction", "grm", "dut"));
    for i in t.skip..n {
        let g = t.grm.get(i);
        let d = t.dut.get(i);
        let head = g.or(d).expect("index below the longer trace");
        let asm = decode(head.word)
            .map(|x| x.to_instruction().to_string())
            .unwrap_or_else(|_| format!(".word {:#010x}", head.word));
        let mark = if Some(i as u64) == first { ">>" } else { "" };
        out.push_str(&format!(
            "{mark:<3}{i:>5}  {:<18} {:<28} {:<40} {}\n",
            format!("{:#x}", head.pc),
            asm,
            effect(g),
            effect(d)
        ));
    }
    match &t.record {
        Some(r) => out.push_str(&format!(
            "first divergence at seq {}: {:?} grm {} dut {}\n",
            r.seq, r.kind, r.grm_value, r.dut_value
        )),
        None => out.push_str("traces identical\n"),
    }
    out
}
