// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::isa::Csr;

pub const RAM_BASE: u64 = 0x8000_0000;
pub const RAM_SIZE: u64 = 1 << 20;
pub const PROGRAM_BASE: u64 = RAM_BASE;
pub const DATA_BASE: u64 = RAM_BASE + 0x8_0000;
pub const DATA_SIZE: u64 = RAM_BASE + RAM_SIZE - DATA_BASE;

pub mod mstatus {
    pub const SIE: u64 = 1 << 1;
    pub const MIE: u64 = 1 << 3;
    pub const SPIE: u64 = 1 << 5;
    pub const UBE: u64 = 1 << 6;
    pub const MPIE: u64 = 1 << 7;
    pub const SPP: u64 = 1 << 8;
    pub const MPP_SHIFT: u32 = 11;
    pub const MPP: u64 = 3 << MPP_SHIFT;
    pub const MPRV: u64 = 1 << 17;
    pub const SUM: u64 = 1 << 18;
    pub const MXR: u64 = 1 << 19;
    pub const TVM: u64 = 1 << 20;
    pub const TW: u64 = 1 << 21;
    pub const TSR: u64 = 1 << 22;
    pub const UXL: u64 = 2 << 32;
    pub const SXL: u64 = 2 << 34;
    pub const SBE: u64 = 1 << 36;
    pub const MBE: u64 = 1 << 37;

    pub const WRITABLE: u64 = SIE | MIE | SPIE | UBE | MPIE | SPP | MPP | MPRV | SUM | MXR | TVM | TW | TSR | SBE | MBE;
    /// Bits of mstatus visible and writable through sstatus.
    pub const SSTATUS_WRITABLE: u64 = SIE | SPIE | UBE | SPP | SUM | MXR;
    pub const SSTATUS_READ: u64 = SSTATUS_WRITABLE | UXL;
}

pub mod irq {
    pub const SSIP: u64 = 1 << 1;
    pub const STIP: u64 = 1 << 5;
    pub const SEIP: u64 = 1 << 9;
    pub const S_BITS: u64 = SSIP | STIP | SEIP;
    pub const MIE_WRITABLE: u64 = 0xaaa;
}

pub mod pmp {
    pub const R: u8 = 1;
    pub const W: u8 = 2;
    pub const X: u8 = 4;
    pub const A_SHIFT: u8 = 3;
    pub const L: u8 = 0x80;
    pub const OFF: u8 = 0;
    pub const TOR: u8 = 1;
    pub const NA4: u8 = 2;
    pub const NAPOT: u8 = 3;
    pub const ADDR_MASK: u64 = (1 << 54) - 1;
}

pub const MISA: u64 = (2 << 62) | (1 << 8) | (1 << 18) | (1 << 20);
pub const MEDELEG_WRITABLE: u64 = 0x3ff;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Privilege {
    U = 0,
    S = 1,
    M = 3,
}

impl Privilege {
    pub const ALL: [Privilege; 3] = [Privilege::M, Privilege::S, Privilege::U];

    pub fn from_bits(b: u64) -> Option<Privilege> {
        match b & 3 {
            0 => Some(Privilege::U),
            1 => Some(Privilege::S),
            3 => Some(Privilege::M),
            _ => None,
        }
    }

    pub fn bits(self) -> u64 {
        self as u64
    }

    /// Dense index: M=0, S=1, U=2.
    pub fn index(self) -> usize {
        match self {
            Privilege::M => 0,
            Privilege::S => 1,
            Privilege::U => 2,
        }
    }
}

impl fmt::Display for Privilege {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Privilege::M => "M",
            Privilege::S => "S",
            Privilege::U => "U",
        })
    }
}

/// Sparse RAM. Bytes never written read as a seed-derived pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Memory {
    seed: u64,
    written: HashMap<u64, u8>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Memory {
    pub fn new(seed: u64) -> Self {
        Memory { seed, written: HashMap::new() }
    }

    pub fn in_range(addr: u64, len: u64) -> bool {
        addr >= RAM_BASE && addr.checked_add(len).is_some_and(|end| end <= RAM_BASE + RAM_SIZE)
    }

    pub fn read_u8(&self, addr: u64) -> u8 {
        match self.written.get(&addr) {
            Some(&b) => b,
            None => (splitmix(self.seed ^ (addr >> 3)) >> ((addr & 7) * 8)) as u8,
        }
    }

    pub fn write_u8(&mut self, addr: u64, v: u8) {
        self.written.insert(addr, v);
    }

    pub fn read_le(&self, addr: u64, width: u64) -> u64 {
        (0..width).fold(0u64, |acc, i| acc | (self.read_u8(addr + i) as u64) << (8 * i))
    }

    pub fn write_le(&mut self, addr: u64, width: u64, v: u64) {
        for i in 0..width {
            self.write_u8(addr + i, (v >> (8 * i)) as u8);
        }
    }

    pub fn load_words(&mut self, base: u64, words: &[u32]) {
        for (i, w) in words.iter().enumerate() {
            self.write_le(base + 4 * i as u64, 4, *w as u64);
        }
    }

    /// Written bytes in address order.
    pub fn written(&self) -> Vec<(u64, u8)> {
        let mut v: Vec<(u64, u8)> = self.written.iter().map(|(a, b)| (*a, *b)).collect();
        v.sort_unstable();
        v
    }
}

/// Architectural state of one hart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchState {
    pub pc: u64,
    pub xregs: [u64; 32],
    pub privilege: Privilege,
    csrs: [u64; Csr::ALL.len()],
    pub memory: Memory,
}

const POINTER_REGS: [usize; 8] = [2, 3, 4, 6, 8, 9, 10, 11];

impl ArchState {
    /// Seeded reset: random registers, ISA reset CSRs, M-mode at the program base.
    pub fn reset(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xregs = [0u64; 32];
        for (i, r) in xregs.iter_mut().enumerate().skip(1) {
            *r = if POINTER_REGS.contains(&i) {
                DATA_BASE + (rng.gen_range(0..DATA_SIZE / 2) & !7)
            } else {
                match rng.gen_range(0..4) {
                    0 => rng.gen_range(0..64),
                    1 => (rng.gen_range(-2048i64..2048)) as u64,
                    2 => 1u64 << rng.gen_range(0..64),
                    _ => rng.gen(),
                }
            };
        }
        let mut csrs = [0u64; Csr::ALL.len()];
        csrs[Csr::Mstatus.index()] = mstatus::UXL | mstatus::SXL;
        csrs[Csr::Misa.index()] = MISA;
        ArchState { pc: PROGRAM_BASE, xregs, privilege: Privilege::M, csrs, memory: Memory::new(seed) }
    }

    pub fn raw(&self, c: Csr) -> u64 {
        self.csrs[c.index()]
    }

    pub fn set_raw(&mut self, c: Csr, v: u64) {
        self.csrs[c.index()] = v;
    }

    pub fn mstatus(&self) -> u64 {
        self.raw(Csr::Mstatus)
    }

    pub fn status_bit(&self, bit: u64) -> bool {
        self.mstatus() & bit != 0
    }

    pub fn mpp(&self) -> Privilege {
        Privilege::from_bits(self.mstatus() >> mstatus::MPP_SHIFT).unwrap_or(Privilege::U)
    }

    pub fn set_x(&mut self, r: u8, v: u64) {
        if r != 0 {
            self.xregs[r as usize] = v;
        }
    }

    /// Digest of registers, privilege, CSRs and written memory.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.pc.to_le_bytes());
        for r in self.xregs {
            h.update(r.to_le_bytes());
        }
        h.update([self.privilege as u8]);
        for c in self.csrs {
            h.update(c.to_le_bytes());
        }
        for (a, b) in self.memory.written() {
            h.update(a.to_le_bytes());
            h.update([b]);
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        assert_eq!(ArchState::reset(9), ArchState::reset(9));
        assert_ne!(ArchState::reset(9).xregs, ArchState::reset(10).xregs);
        let s = ArchState::reset(3);
        assert_eq!(s.xregs[0], 0);
        assert_eq!(s.privilege, Privilege::M);
        assert_eq!(s.pc, PROGRAM_BASE);
        for r in POINTER_REGS {
            assert!(Memory::in_range(s.xregs[r], 8) && s.xregs[r] % 8 == 0);
        }
    }

    #[test]
    fn memory_pattern_and_writes() {
        let mut m = Memory::new(1);
        let before = m.read_le(DATA_BASE, 8);
        assert_eq!(before, Memory::new(1).read_le(DATA_BASE, 8));
        m.write_le(DATA_BASE, 4, 0x1234_5678);
        assert_eq!(m.read_le(DATA_BASE, 4), 0x1234_5678);
        assert_eq!(m.read_u8(DATA_BASE), 0x78);
        assert!(!Memory::in_range(RAM_BASE + RAM_SIZE - 2, 4));
        assert!(!Memory::in_range(u64::MAX - 1, 4));
    }
}
