// SPDX-License-Identifier: Apache-2.0

//! Per-lineage machine environment: a seeded reset state plus an M-mode
//! preamble that configures status, delegation and protection CSRs and then
//! drops to a random privilege level at the program start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dutsim::{BugConfig, CoverageObserver, CoverageSet};
use crate::isa::{encode, Csr, Instruction, InstructionBlock, IsaError, Mnemonic, Operand};
use crate::refmodel::{
    irq, mstatus, run_window, ArchState, ExecResult, NoObserver, Observer, Privilege, Quirks, PROGRAM_BASE,
};

const TMP: u8 = 5;

#[derive(Clone, Debug)]
pub struct Environment {
    pub seed: u64,
    pub preamble: Vec<Instruction>,
    /// Number of preamble words; every one retires exactly once.
    pub preamble_words: usize,
    pub privilege: Privilege,
    reset: ArchState,
}

fn inst(m: Mnemonic, ops: Vec<Operand>) -> Instruction {
    Instruction { mnemonic: m, operands: ops }
}

fn li(v: u64) -> Instruction {
    inst(Mnemonic::Li, vec![Operand::Reg(TMP), Operand::Imm(v as i64)])
}

fn csrw(c: Csr) -> Instruction {
    inst(Mnemonic::Csrw, vec![Operand::Csr(c), Operand::Reg(TMP)])
}

fn words(insts: &[Instruction]) -> usize {
    insts.iter().map(|i| encode(i).expect("preamble encodes").len()).sum()
}

impl Environment {
    pub fn new(seed: u64) -> Self {
        let reset = ArchState::reset(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e4e1);
        let privilege = Privilege::ALL[rng.gen_range(0..3)];
        let mut status = (privilege.bits()) << mstatus::MPP_SHIFT;
        for bit in [
            mstatus::MBE,
            mstatus::SBE,
            mstatus::UBE,
            mstatus::TVM,
            mstatus::TW,
            mstatus::TSR,
            mstatus::SUM,
            mstatus::MXR,
        ] {
            if rng.gen_bool(0.5) {
                status |= bit;
            }
        }
        let medeleg = rng.gen_range(0..=0x3ffu64);
        let pick = |rng: &mut ChaCha8Rng| {
            [irq::SSIP, irq::STIP, irq::SEIP].into_iter().filter(|_| rng.gen_bool(0.5)).fold(0, |a, b| a | b)
        };
        let mideleg = pick(&mut rng);
        let mip = pick(&mut rng);
        let tvec = |rng: &mut ChaCha8Rng| PROGRAM_BASE + 0x4_0000 + 4 * rng.gen_range(0..0x1000u64);
        let (mtvec, stvec) = (tvec(&mut rng), tvec(&mut rng));

        let mut pre = vec![
            li(u64::MAX),
            csrw(Csr::Pmpaddr0),
            li(0x1f),
            csrw(Csr::Pmpcfg0),
            li(medeleg),
            csrw(Csr::Medeleg),
            li(mideleg),
            csrw(Csr::Mideleg),
            li(mip),
            csrw(Csr::Mip),
            li(mtvec),
            csrw(Csr::Mtvec),
            li(stvec),
            csrw(Csr::Stvec),
            li(status),
            csrw(Csr::Mstatus),
        ];
        let tail = vec![
            inst(Mnemonic::Csrw, vec![Operand::Csr(Csr::Mepc), Operand::Reg(TMP)]),
            inst(Mnemonic::Li, vec![Operand::Reg(TMP), Operand::Imm(reset.xregs[TMP as usize] as i64)]),
            inst(Mnemonic::Mret, vec![]),
        ];
        // auipc; addi; tail
        let offset = 4 * (1 + 1 + words(&tail)) as i64;
        pre.push(inst(Mnemonic::Auipc, vec![Operand::Reg(TMP), Operand::Imm(0)]));
        pre.push(inst(Mnemonic::Addi, vec![Operand::Reg(TMP), Operand::Reg(TMP), Operand::Imm(offset)]));
        pre.extend(tail);
        let preamble_words = words(&pre);
        Environment { seed, preamble: pre, preamble_words, privilege, reset }
    }

    pub fn program_start(&self) -> u64 {
        PROGRAM_BASE + 4 * self.preamble_words as u64
    }

    /// Preamble followed by `blocks`, assembled at the program base.
    pub fn assemble<'a>(&self, blocks: impl IntoIterator<Item = &'a InstructionBlock>) -> Result<Program, IsaError> {
        let mut words = Vec::new();
        for i in &self.preamble {
            words.extend(encode(i)?);
        }
        let mut block_starts = Vec::new();
        for b in blocks {
            block_starts.push(PROGRAM_BASE + 4 * words.len() as u64);
            for i in &b.instructions {
                words.extend(encode(i)?);
            }
        }
        Ok(Program { words, block_starts, env_seed: self.seed })
    }

    fn execute<O: Observer>(&self, p: &Program, fuel: u64, quirks: &Quirks, obs: &mut O) -> ExecResult {
        let mut st = self.reset.clone();
        st.memory.load_words(PROGRAM_BASE, &p.words);
        st.pc = PROGRAM_BASE;
        let end = p.end();
        let last = p.block_starts.last().copied().unwrap_or(end);
        run_window(st, (self.program_start(), end), (last, end), fuel + self.preamble_words as u64, quirks, obs)
    }

    /// Reference execution; the retired-fraction window is the last block.
    pub fn run_grm(&self, p: &Program, fuel: u64) -> ExecResult {
        self.execute(p, fuel, &Quirks::NONE, &mut NoObserver)
    }

    pub fn run_dut(&self, p: &Program, fuel: u64, bugs: &BugConfig) -> (ExecResult, CoverageSet) {
        let mut obs = CoverageObserver::default();
        let r = self.execute(p, fuel, &bugs.quirks(), &mut obs);
        (r, obs.set)
    }
}

/// Assembled test program: preamble words then block words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub words: Vec<u32>,
    pub block_starts: Vec<u64>,
    pub env_seed: u64,
}

impl Program {
    pub fn end(&self) -> u64 {
        PROGRAM_BASE + 4 * self.words.len() as u64
    }

    pub fn hash(&self) -> String {
        crate::difftest::program_hash(&self.words, self.env_seed)
    }
}
