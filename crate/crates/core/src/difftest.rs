// SPDX-License-Identifier: Apache-2.0

//! Differential comparison of reference and device traces, mismatch
//! signatures and the known-mismatch filter.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::isa::decode;
use crate::refmodel::{Privilege, TraceEntry};

#[derive(Debug, Error)]
pub enum DifftestError {
    #[error("traces come from different programs ({grm} vs {dut})")]
    ProgramMismatch { grm: String, dut: String },
    #[error("signature already classified as {existing}; pass override to change it to {requested}")]
    Conflict { existing: Classification, requested: Classification },
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DivergenceKind {
    RegValue,
    MemAddr,
    MemData,
    Pc,
    Exception,
    Csr,
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DivergenceKind::RegValue => "REG_VALUE",
            DivergenceKind::MemAddr => "MEM_ADDR",
            DivergenceKind::MemData => "MEM_DATA",
            DivergenceKind::Pc => "PC",
            DivergenceKind::Exception => "EXCEPTION",
            DivergenceKind::Csr => "CSR",
        })
    }
}

/// Environment context of a divergence, without raw data values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EnvSignature {
    pub privilege: Privilege,
    pub mnemonic: String,
    pub kind: DivergenceKind,
    pub csr: Option<String>,
    pub cause: Option<u8>,
}

impl fmt::Display for EnvSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.privilege, self.mnemonic, self.kind)?;
        if let Some(c) = &self.csr {
            write!(f, "/{c}")?;
        }
        if let Some(c) = self.cause {
            write!(f, "/cause={c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchRecord {
    pub test_case: String,
    pub program_hash: String,
    pub seq: u64,
    pub kind: DivergenceKind,
    pub grm_value: String,
    pub dut_value: String,
    pub signature: EnvSignature,
}

/// A trace with the hash of the program that produced it.
#[derive(Clone, Copy, Debug)]
pub struct TraceView<'a> {
    pub program_hash: &'a str,
    pub entries: &'a [TraceEntry],
}

/// SHA-256 over the little-endian program words and the environment seed.
pub fn program_hash(words: &[u32], env_seed: u64) -> String {
    let mut h = Sha256::new();
    for w in words {
        h.update(w.to_le_bytes());
    }
    h.update(env_seed.to_le_bytes());
    hex::encode(h.finalize())
}

fn hx(v: u64) -> String {
    format!("0x{v:x}")
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map_or_else(|| "none".to_string(), f)
}

/// First differing field of two aligned entries, with both values rendered.
fn first_field(g: &TraceEntry, d: &TraceEntry) -> Option<(DivergenceKind, String, String)> {
    let is_csr = decode(g.word).map(|x| x.mnemonic.is_csr()).unwrap_or(false);
    if g.pc != d.pc || g.word != d.word {
        return Some((DivergenceKind::Pc, hx(g.pc), hx(d.pc)));
    }
    if g.privilege != d.privilege {
        return Some((DivergenceKind::Csr, g.privilege.to_string(), d.privilege.to_string()));
    }
    if g.reg != d.reg {
        let kind = if is_csr { DivergenceKind::Csr } else { DivergenceKind::RegValue };
        let show = |r: Option<(u8, u64)>| opt(r, |(_, v)| hx(v));
        return Some((kind, show(g.reg), show(d.reg)));
    }
    let (gm, dm) = (g.mem, d.mem);
    if gm.map(|m| m.addr) != dm.map(|m| m.addr) {
        return Some((DivergenceKind::MemAddr, opt(gm, |m| hx(m.addr)), opt(dm, |m| hx(m.addr))));
    }
    if gm != dm {
        let show = |m: Option<crate::refmodel::MemAccess>| {
            opt(m, |m| format!("{}{}:{}", if m.write { "w" } else { "r" }, m.width, hx(m.data)))
        };
        return Some((DivergenceKind::MemData, show(gm), show(dm)));
    }
    if g.exception != d.exception {
        let show = |e: Option<crate::refmodel::TrapInfo>| opt(e, |e| format!("cause={} tval={}", e.cause, hx(e.tval)));
        return Some((DivergenceKind::Exception, show(g.exception), show(d.exception)));
    }
    None
}

fn signature_for(entry: &TraceEntry, other: Option<&TraceEntry>, kind: DivergenceKind) -> EnvSignature {
    let decoded = decode(entry.word).ok();
    let cause = entry.exception.or_else(|| other.and_then(|o| o.exception)).map(|e| e.cause);
    EnvSignature {
        privilege: entry.privilege,
        mnemonic: decoded.map_or_else(|| "illegal".to_string(), |d| d.mnemonic.name().to_string()),
        kind,
        csr: decoded.and_then(|d| d.csr).map(|c| c.name().to_string()),
        cause,
    }
}

/// Finds the first divergence at or after `skip_prefix`.
pub fn compare_traces(
    test_case: &str,
    grm: TraceView<'_>,
    dut: TraceView<'_>,
    skip_prefix: usize,
) -> Result<Option<MismatchRecord>, DifftestError> {
    if grm.program_hash != dut.program_hash {
        return Err(DifftestError::ProgramMismatch { grm: grm.program_hash.into(), dut: dut.program_hash.into() });
    }
    let record = |seq: u64, kind, gv: String, dv: String, signature| MismatchRecord {
        test_case: test_case.to_string(),
        program_hash: grm.program_hash.to_string(),
        seq,
        kind,
        grm_value: gv,
        dut_value: dv,
        signature,
    };
    let common = grm.entries.len().min(dut.entries.len());
    for i in skip_prefix..common {
        let (g, d) = (&grm.entries[i], &dut.entries[i]);
        if let Some((kind, gv, dv)) = first_field(g, d) {
            return Ok(Some(record(g.seq, kind, gv, dv, signature_for(g, Some(d), kind))));
        }
    }
    if grm.entries.len() != dut.entries.len() && common >= skip_prefix {
        // One side kept running: report at the end of the shorter trace.
        let longer = if grm.entries.len() > common { grm.entries } else { dut.entries };
        let next = &longer[common];
        let end = "end".to_string();
        let (gv, dv) = if grm.entries.len() > common { (hx(next.pc), end) } else { (end, hx(next.pc)) };
        return Ok(Some(record(next.seq, DivergenceKind::Pc, gv, dv, signature_for(next, None, DivergenceKind::Pc))));
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    ConfirmedBug,
    FalsePositive,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::ConfirmedBug => "CONFIRMED_BUG",
            Classification::FalsePositive => "FALSE_POSITIVE",
        })
    }
}

impl std::str::FromStr for Classification {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "CONFIRMED_BUG" | "BUG" => Ok(Classification::ConfirmedBug),
            "FALSE_POSITIVE" | "FP" => Ok(Classification::FalsePositive),
            _ => Err(format!("unknown classification `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterOutcome {
    /// First sighting; the record goes to the triage log.
    New,
    /// Seen before but not yet triaged.
    Duplicate,
    Known(Classification),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterEntry {
    pub signature: EnvSignature,
    pub classification: Option<Classification>,
    pub count: u64,
}

/// Known signatures with their triage state and hit counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<FilterEntry>", into = "Vec<FilterEntry>")]
pub struct MismatchFilter {
    entries: BTreeMap<EnvSignature, FilterEntry>,
}

impl From<Vec<FilterEntry>> for MismatchFilter {
    fn from(list: Vec<FilterEntry>) -> Self {
        MismatchFilter { entries: list.into_iter().map(|e| (e.signature.clone(), e)).collect() }
    }
}

impl From<MismatchFilter> for Vec<FilterEntry> {
    fn from(f: MismatchFilter) -> Self {
        f.entries.into_values().collect()
    }
}

impl MismatchFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &FilterEntry> {
        self.entries.values()
    }

    pub fn get(&self, sig: &EnvSignature) -> Option<&FilterEntry> {
        self.entries.get(sig)
    }

    /// Classifies `record` and bumps its signature's counter.
    pub fn filter(&mut self, record: &MismatchRecord) -> FilterOutcome {
        match self.entries.get_mut(&record.signature) {
            Some(e) => {
                e.count += 1;
                match e.classification {
                    Some(c) => FilterOutcome::Known(c),
                    None => FilterOutcome::Duplicate,
                }
            }
            None => {
                self.entries.insert(
                    record.signature.clone(),
                    FilterEntry { signature: record.signature.clone(), classification: None, count: 1 },
                );
                FilterOutcome::New
            }
        }
    }

    /// Stores a triage decision for the record's signature.
    pub fn triage(
        &mut self,
        record: &MismatchRecord,
        classification: Classification,
        allow_override: bool,
    ) -> Result<(), DifftestError> {
        let e = self.entries.entry(record.signature.clone()).or_insert_with(|| FilterEntry {
            signature: record.signature.clone(),
            classification: None,
            count: 0,
        });
        match e.classification {
            Some(existing) if existing != classification && !allow_override => {
                Err(DifftestError::Conflict { existing, requested: classification })
            }
            _ => {
                e.classification = Some(classification);
                Ok(())
            }
        }
    }

    pub fn to_json(&self) -> String {
        let list: Vec<&FilterEntry> = self.entries.values().collect();
        serde_json::to_string_pretty(&list).expect("filter entries serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, DifftestError> {
        let list: Vec<FilterEntry> = serde_json::from_str(s).map_err(|e| DifftestError::Malformed(e.to_string()))?;
        let mut f = MismatchFilter::new();
        for e in list {
            if f.entries.insert(e.signature.clone(), e).is_some() {
                return Err(DifftestError::Malformed("duplicate signature".into()));
            }
        }
        Ok(f)
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[MismatchRecord]) -> Result<(), DifftestError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| DifftestError::Malformed(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<MismatchRecord>, DifftestError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DifftestError::Malformed(e.to_string()))?);
    }
    Ok(out)
}
