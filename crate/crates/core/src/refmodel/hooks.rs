// SPDX-License-Identifier: Apache-2.0

//! Instrumentation sites reported by the interpreter, and the deviation switches
//! used to build a non-conforming device model on the same core.

use crate::isa::{Csr, Mnemonic};

use super::state::Privilege;

/// Exception causes the interpreter can raise.
pub const TRAP_CAUSES: [u8; 11] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 11];

pub mod cause {
    pub const INST_MISALIGNED: u8 = 0;
    pub const INST_ACCESS: u8 = 1;
    pub const ILLEGAL: u8 = 2;
    pub const BREAKPOINT: u8 = 3;
    pub const LOAD_MISALIGNED: u8 = 4;
    pub const LOAD_ACCESS: u8 = 5;
    pub const STORE_MISALIGNED: u8 = 6;
    pub const STORE_ACCESS: u8 = 7;
    pub const ECALL_U: u8 = 8;
    pub const ECALL_S: u8 = 9;
    pub const ECALL_M: u8 = 11;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LineSite {
    Exec(Mnemonic, Privilege),
    CsrRead(Csr),
    CsrWrite(Csr),
    Trap { cause: u8, to: Privilege },
}

/// Guard predicates; each contributes a true and a false point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    BranchTaken(Mnemonic),
    CsrPrivilegeOk(Csr),
    CsrWritable,
    LoadInRange,
    StoreInRange,
    Aligned { store: bool, width: u8 },
    BigEndian(Privilege),
    PmpMatch,
    PmpAllow,
    PmpLocked,
    Delegated(u8),
    AluZero,
    DestIsX0,
    Mprv,
    TvmTrap,
    TwTrap,
    TsrTrap,
    MipMasked,
    Vectored(Privilege),
    JumpMisaligned,
    SatpWriteIgnored,
    MppLegal,
    XretLowers,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Normal,
    TrapEntry,
    TrapReturn,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 3] = [EdgeKind::Normal, EdgeKind::TrapEntry, EdgeKind::TrapReturn];
}

pub trait Observer {
    fn line(&mut self, _site: LineSite) {}
    fn cond(&mut self, _pred: Cond, _value: bool) {}
    fn edge(&mut self, _from: Privilege, _to: Privilege, _kind: EdgeKind) {}
}

/// Observer that records nothing.
pub struct NoObserver;

impl Observer for NoObserver {}

/// Semantic deviations. All false is the conforming model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Quirks {
    /// Data accesses at effective M privilege ignore mstatus.MBE.
    pub mbe_ignored: bool,
    /// Data accesses at effective S privilege ignore mstatus.SBE.
    pub sbe_ignored: bool,
    /// A delegated STIP stays visible in M-mode reads of mip.
    pub delegated_sti_visible: bool,
    /// Illegal-instruction traps of sfence.vma taken into S write stval = 1.
    pub stval_one: bool,
    /// sstatus exposes and accepts writes to SBE and MBE.
    pub endian_bits_in_sstatus: bool,
}

impl Quirks {
    pub const NONE: Quirks = Quirks {
        mbe_ignored: false,
        sbe_ignored: false,
        delegated_sti_visible: false,
        stval_one: false,
        endian_bits_in_sstatus: false,
    };

    pub fn is_none(&self) -> bool {
        *self == Quirks::NONE
    }
}
