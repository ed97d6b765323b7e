// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::state::Privilege;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MemAccess {
    pub addr: u64,
    pub width: u8,
    /// Value as seen by the register file (before sign extension for loads).
    pub data: u64,
    pub write: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TrapInfo {
    pub cause: u8,
    pub tval: u64,
}

/// One retired or trapped instruction word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TraceEntry {
    pub seq: u64,
    pub pc: u64,
    pub word: u32,
    pub privilege: Privilege,
    pub reg: Option<(u8, u64)>,
    pub mem: Option<MemAccess>,
    pub exception: Option<TrapInfo>,
}

#[derive(Serialize, Deserialize)]
struct Wire {
    seq: u64,
    pc: String,
    word: String,
    privilege: Privilege,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rd: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rd_value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mem_addr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mem_width: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mem_data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mem_write: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cause: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tval: Option<String>,
}

fn hx(v: u64) -> String {
    format!("0x{v:016x}")
}

fn unhx(s: &str) -> Result<u64, String> {
    u64::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|e| format!("bad hex `{s}`: {e}"))
}

impl TraceEntry {
    pub fn to_json(&self) -> String {
        let w = Wire {
            seq: self.seq,
            pc: hx(self.pc),
            word: format!("0x{:08x}", self.word),
            privilege: self.privilege,
            rd: self.reg.map(|r| r.0),
            rd_value: self.reg.map(|r| hx(r.1)),
            mem_addr: self.mem.map(|m| hx(m.addr)),
            mem_width: self.mem.map(|m| m.width),
            mem_data: self.mem.map(|m| hx(m.data)),
            mem_write: self.mem.map(|m| m.write),
            cause: self.exception.map(|e| e.cause),
            tval: self.exception.map(|e| hx(e.tval)),
        };
        serde_json::to_string(&w).expect("trace entry serializes")
    }

    pub fn from_json(line: &str) -> Result<TraceEntry, String> {
        let w: Wire = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let reg = match (w.rd, w.rd_value) {
            (Some(r), Some(v)) => Some((r, unhx(&v)?)),
            _ => None,
        };
        let mem = match (w.mem_addr, w.mem_width, w.mem_data, w.mem_write) {
            (Some(a), Some(width), Some(d), Some(write)) => {
                Some(MemAccess { addr: unhx(&a)?, width, data: unhx(&d)?, write })
            }
            _ => None,
        };
        let exception = match (w.cause, w.tval) {
            (Some(cause), Some(t)) => Some(TrapInfo { cause, tval: unhx(&t)? }),
            _ => None,
        };
        Ok(TraceEntry {
            seq: w.seq,
            pc: unhx(&w.pc)?,
            word: unhx(&w.word)? as u32,
            privilege: w.privilege,
            reg,
            mem,
            exception,
        })
    }
}

/// Serializes a trace as JSONL.
pub fn trace_to_jsonl(trace: &[TraceEntry]) -> String {
    let mut s = String::new();
    for e in trace {
        s.push_str(&e.to_json());
        s.push('\n');
    }
    s
}

pub fn trace_from_jsonl(text: &str) -> Result<Vec<TraceEntry>, String> {
    text.lines().filter(|l| !l.trim().is_empty()).map(TraceEntry::from_json).collect()
}
