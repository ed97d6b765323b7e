// SPDX-License-Identifier: Apache-2.0

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::isa::{Csr, Mnemonic};
use crate::refmodel::{Cond, EdgeKind, LineSite, Privilege, TRAP_CAUSES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PointKind {
    Line,
    CondTrue,
    CondFalse,
    FsmEdge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub id: u32,
    pub kind: PointKind,
    pub site: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Site {
    Line(LineSite),
    Cond(Cond, bool),
    Edge(Privilege, Privilege, EdgeKind),
}

const N_PRIV: usize = 3;
const N_MACHINE: usize = Mnemonic::Li as usize;
const N_CSR: usize = Csr::ALL.len();
const N_CAUSE: usize = TRAP_CAUSES.len();
const BRANCHES: [Mnemonic; 6] =
    [Mnemonic::Beq, Mnemonic::Bne, Mnemonic::Blt, Mnemonic::Bge, Mnemonic::Bltu, Mnemonic::Bgeu];

const EXEC_BASE: usize = 0;
const CSR_READ_BASE: usize = EXEC_BASE + N_MACHINE * N_PRIV;
const CSR_WRITE_BASE: usize = CSR_READ_BASE + N_CSR;
const TRAP_BASE: usize = CSR_WRITE_BASE + N_CSR;
const COND_BASE: usize = TRAP_BASE + N_CAUSE * 2;

// Predicate layout inside the condition block.
const C_BRANCH: usize = 0;
const C_CSR_PRIV: usize = C_BRANCH + 6;
const C_CSR_WRITABLE: usize = C_CSR_PRIV + N_CSR;
const C_LOAD_RANGE: usize = C_CSR_WRITABLE + 1;
const C_STORE_RANGE: usize = C_LOAD_RANGE + 1;
const C_ALIGNED: usize = C_STORE_RANGE + 1;
const C_BIG_ENDIAN: usize = C_ALIGNED + 8;
const C_PMP_MATCH: usize = C_BIG_ENDIAN + N_PRIV;
const C_PMP_ALLOW: usize = C_PMP_MATCH + 1;
const C_PMP_LOCKED: usize = C_PMP_ALLOW + 1;
const C_DELEGATED: usize = C_PMP_LOCKED + 1;
const C_ALU_ZERO: usize = C_DELEGATED + N_CAUSE;
const C_DEST_X0: usize = C_ALU_ZERO + 1;
const C_MPRV: usize = C_DEST_X0 + 1;
const C_TVM: usize = C_MPRV + 1;
const C_TW: usize = C_TVM + 1;
const C_TSR: usize = C_TW + 1;
const C_MIP_MASKED: usize = C_TSR + 1;
const C_VECTORED: usize = C_MIP_MASKED + 1;
const C_JUMP_MIS: usize = C_VECTORED + 2;
const C_SATP_IGNORED: usize = C_JUMP_MIS + 1;
const C_MPP_LEGAL: usize = C_SATP_IGNORED + 1;
const C_XRET_LOWERS: usize = C_MPP_LEGAL + 1;
const N_COND: usize = C_XRET_LOWERS + 1;

const EDGE_BASE: usize = COND_BASE + 2 * N_COND;
pub const UNIVERSE_SIZE: usize = EDGE_BASE + N_PRIV * N_PRIV * 3;

fn cause_index(c: u8) -> usize {
    TRAP_CAUSES.iter().position(|&x| x == c).expect("known trap cause")
}

fn width_index(w: u8) -> usize {
    w.trailing_zeros() as usize
}

fn cond_index(c: Cond) -> usize {
    match c {
        Cond::BranchTaken(m) => C_BRANCH + BRANCHES.iter().position(|&b| b == m).expect("branch"),
        Cond::CsrPrivilegeOk(csr) => C_CSR_PRIV + csr.index(),
        Cond::CsrWritable => C_CSR_WRITABLE,
        Cond::LoadInRange => C_LOAD_RANGE,
        Cond::StoreInRange => C_STORE_RANGE,
        Cond::Aligned { store, width } => C_ALIGNED + 4 * store as usize + width_index(width),
        Cond::BigEndian(p) => C_BIG_ENDIAN + p.index(),
        Cond::PmpMatch => C_PMP_MATCH,
        Cond::PmpAllow => C_PMP_ALLOW,
        Cond::PmpLocked => C_PMP_LOCKED,
        Cond::Delegated(cause) => C_DELEGATED + cause_index(cause),
        Cond::AluZero => C_ALU_ZERO,
        Cond::DestIsX0 => C_DEST_X0,
        Cond::Mprv => C_MPRV,
        Cond::TvmTrap => C_TVM,
        Cond::TwTrap => C_TW,
        Cond::TsrTrap => C_TSR,
        Cond::MipMasked => C_MIP_MASKED,
        Cond::Vectored(p) => C_VECTORED + (p != Privilege::M) as usize,
        Cond::JumpMisaligned => C_JUMP_MIS,
        Cond::SatpWriteIgnored => C_SATP_IGNORED,
        Cond::MppLegal => C_MPP_LEGAL,
        Cond::XretLowers => C_XRET_LOWERS,
    }
}

fn all_conds() -> Vec<Cond> {
    let mut v: Vec<Cond> = BRANCHES.iter().map(|&m| Cond::BranchTaken(m)).collect();
    v.extend(Csr::ALL.iter().map(|&c| Cond::CsrPrivilegeOk(c)));
    v.extend([Cond::CsrWritable, Cond::LoadInRange, Cond::StoreInRange]);
    for store in [false, true] {
        for width in [1, 2, 4, 8] {
            v.push(Cond::Aligned { store, width });
        }
    }
    v.extend(Privilege::ALL.iter().map(|&p| Cond::BigEndian(p)));
    v.extend([Cond::PmpMatch, Cond::PmpAllow, Cond::PmpLocked]);
    v.extend(TRAP_CAUSES.iter().map(|&c| Cond::Delegated(c)));
    v.extend([
        Cond::AluZero,
        Cond::DestIsX0,
        Cond::Mprv,
        Cond::TvmTrap,
        Cond::TwTrap,
        Cond::TsrTrap,
        Cond::MipMasked,
        Cond::Vectored(Privilege::M),
        Cond::Vectored(Privilege::S),
        Cond::JumpMisaligned,
        Cond::SatpWriteIgnored,
        Cond::MppLegal,
        Cond::XretLowers,
    ]);
    v
}

/// Dense id of an instrumentation site.
pub fn site_id(site: Site) -> u32 {
    let id = match site {
        Site::Line(LineSite::Exec(m, p)) => EXEC_BASE + m.index() * N_PRIV + p.index(),
        Site::Line(LineSite::CsrRead(c)) => CSR_READ_BASE + c.index(),
        Site::Line(LineSite::CsrWrite(c)) => CSR_WRITE_BASE + c.index(),
        Site::Line(LineSite::Trap { cause, to }) => TRAP_BASE + cause_index(cause) * 2 + (to != Privilege::M) as usize,
        Site::Cond(c, v) => COND_BASE + 2 * cond_index(c) + (!v) as usize,
        Site::Edge(from, to, kind) => {
            let k = EdgeKind::ALL.iter().position(|&e| e == kind).expect("edge kind");
            EDGE_BASE + from.index() * 9 + to.index() * 3 + k
        }
    };
    id as u32
}

fn label(site: &Site) -> (PointKind, String) {
    match site {
        Site::Line(LineSite::Exec(m, p)) => (PointKind::Line, format!("exec:{m}@{p}")),
        Site::Line(LineSite::CsrRead(c)) => (PointKind::Line, format!("csr_read:{c}")),
        Site::Line(LineSite::CsrWrite(c)) => (PointKind::Line, format!("csr_write:{c}")),
        Site::Line(LineSite::Trap { cause, to }) => (PointKind::Line, format!("trap:{cause}->{to}")),
        Site::Cond(c, v) => {
            let kind = if *v { PointKind::CondTrue } else { PointKind::CondFalse };
            (kind, format!("cond:{c:?}={v}"))
        }
        Site::Edge(f, t, k) => (PointKind::FsmEdge, format!("fsm:{f}->{t}:{k:?}")),
    }
}

/// All sites in id order.
pub fn all_sites() -> Vec<Site> {
    let mut v = Vec::with_capacity(UNIVERSE_SIZE);
    for m in Mnemonic::machine() {
        for p in Privilege::ALL {
            v.push(Site::Line(LineSite::Exec(m, p)));
        }
    }
    v.extend(Csr::ALL.iter().map(|&c| Site::Line(LineSite::CsrRead(c))));
    v.extend(Csr::ALL.iter().map(|&c| Site::Line(LineSite::CsrWrite(c))));
    for cause in TRAP_CAUSES {
        for to in [Privilege::M, Privilege::S] {
            v.push(Site::Line(LineSite::Trap { cause, to }));
        }
    }
    for c in all_conds() {
        v.push(Site::Cond(c, true));
        v.push(Site::Cond(c, false));
    }
    for f in Privilege::ALL {
        for t in Privilege::ALL {
            for k in EdgeKind::ALL {
                v.push(Site::Edge(f, t, k));
            }
        }
    }
    v
}

/// The full instrumentation table; its length is the coverage denominator.
pub fn coverage_universe() -> &'static [CoveragePoint] {
    static TABLE: OnceLock<Vec<CoveragePoint>> = OnceLock::new();
    TABLE.get_or_init(|| {
        all_sites()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (kind, site) = label(s);
                CoveragePoint { id: i as u32, kind, site }
            })
            .collect()
    })
}

/// SHA-256 over the serialized table.
pub fn universe_hash() -> String {
    let json = serde_json::to_string(coverage_universe()).expect("universe serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}
