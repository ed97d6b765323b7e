// SPDX-License-Identifier: Apache-2.0

//! Bit-exact RV64I + Zicsr encoder and decoder.

use super::csr::Csr;
use super::inst::{Instruction, Mnemonic, Operand};
use super::IsaError;

use Mnemonic::*;

/// Flat machine-level form of a single 32-bit instruction word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub mnemonic: Mnemonic,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i64,
    pub csr: Option<Csr>,
}

impl Decoded {
    fn new(mnemonic: Mnemonic) -> Self {
        Decoded { mnemonic, rd: 0, rs1: 0, rs2: 0, imm: 0, csr: None }
    }

    /// The equivalent logical instruction (never a pseudo-instruction).
    pub fn to_instruction(&self) -> Instruction {
        let r = Operand::Reg;
        let ops = match self.mnemonic {
            Lui | Auipc | Jal => vec![r(self.rd), Operand::Imm(self.imm)],
            Jalr | Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu => {
                vec![r(self.rd), Operand::Imm(self.imm), r(self.rs1)]
            }
            Sb | Sh | Sw | Sd => vec![r(self.rs2), Operand::Imm(self.imm), r(self.rs1)],
            Beq | Bne | Blt | Bge | Bltu | Bgeu => {
                vec![r(self.rs1), r(self.rs2), Operand::Imm(self.imm)]
            }
            Csrrw | Csrrs | Csrrc => {
                vec![r(self.rd), Operand::Csr(self.csr.expect("csr")), r(self.rs1)]
            }
            Csrrwi | Csrrsi | Csrrci => {
                vec![r(self.rd), Operand::Csr(self.csr.expect("csr")), Operand::Imm(self.imm)]
            }
            SfenceVma => vec![r(self.rs1), r(self.rs2)],
            Fence | Ecall | Ebreak | Mret | Sret | Wfi => vec![],
            m if m.signature() == [super::OperandKind::Reg; 3] => {
                vec![r(self.rd), r(self.rs1), r(self.rs2)]
            }
            _ => vec![r(self.rd), r(self.rs1), Operand::Imm(self.imm)],
        };
        Instruction { mnemonic: self.mnemonic, operands: ops }
    }
}

const OP_LUI: u32 = 0x37;
const OP_AUIPC: u32 = 0x17;
const OP_JAL: u32 = 0x6f;
const OP_JALR: u32 = 0x67;
const OP_BRANCH: u32 = 0x63;
const OP_LOAD: u32 = 0x03;
const OP_STORE: u32 = 0x23;
const OP_IMM: u32 = 0x13;
const OP_REG: u32 = 0x33;
const OP_IMM32: u32 = 0x1b;
const OP_REG32: u32 = 0x3b;
const OP_FENCE: u32 = 0x0f;
const OP_SYSTEM: u32 = 0x73;

fn r_type(f7: u32, rs2: u8, rs1: u8, f3: u32, rd: u8, op: u32) -> u32 {
    f7 << 25 | (rs2 as u32) << 20 | (rs1 as u32) << 15 | f3 << 12 | (rd as u32) << 7 | op
}

fn i_type(imm: i64, rs1: u8, f3: u32, rd: u8, op: u32) -> u32 {
    ((imm as u32) & 0xfff) << 20 | (rs1 as u32) << 15 | f3 << 12 | (rd as u32) << 7 | op
}

fn s_type(imm: i64, rs2: u8, rs1: u8, f3: u32) -> u32 {
    let imm = imm as u32;
    ((imm >> 5) & 0x7f) << 25 | (rs2 as u32) << 20 | (rs1 as u32) << 15 | f3 << 12 | (imm & 0x1f) << 7 | OP_STORE
}

fn b_type(imm: i64, rs2: u8, rs1: u8, f3: u32) -> u32 {
    let imm = imm as u32;
    ((imm >> 12) & 1) << 31
        | ((imm >> 5) & 0x3f) << 25
        | (rs2 as u32) << 20
        | (rs1 as u32) << 15
        | f3 << 12
        | ((imm >> 1) & 0xf) << 8
        | ((imm >> 11) & 1) << 7
        | OP_BRANCH
}

fn j_type(imm: i64, rd: u8) -> u32 {
    let imm = imm as u32;
    ((imm >> 20) & 1) << 31
        | ((imm >> 1) & 0x3ff) << 21
        | ((imm >> 11) & 1) << 20
        | ((imm >> 12) & 0xff) << 12
        | (rd as u32) << 7
        | OP_JAL
}

fn load_f3(m: Mnemonic) -> u32 {
    match m {
        Lb => 0,
        Lh => 1,
        Lw => 2,
        Ld => 3,
        Lbu => 4,
        Lhu => 5,
        _ => 6,
    }
}

fn branch_f3(m: Mnemonic) -> u32 {
    match m {
        Beq => 0,
        Bne => 1,
        Blt => 4,
        Bge => 5,
        Bltu => 6,
        _ => 7,
    }
}

/// Encodes a machine-level instruction into exactly one word.
///
/// `li` is rejected here; use [`encode`] for the expanded sequence.
pub fn encode_word(inst: &Instruction) -> Result<u32, IsaError> {
    if let (Some(field), Some(v)) = (inst.mnemonic.imm_field(), inst.imm()) {
        if !field.accepts(v) {
            return Err(IsaError::ImmediateOutOfRange { mnemonic: inst.mnemonic.name().to_string(), value: v });
        }
    }
    let m = inst.mnemonic;
    let imm = inst.imm().unwrap_or(0);
    Ok(match m {
        Li => return Err(IsaError::NeedsExpansion),
        Lui => (((imm as u32) & 0xfffff) << 12) | (inst.reg(0) as u32) << 7 | OP_LUI,
        Auipc => (((imm as u32) & 0xfffff) << 12) | (inst.reg(0) as u32) << 7 | OP_AUIPC,
        Jal => j_type(imm, inst.reg(0)),
        Jalr => i_type(imm, inst.reg(2), 0, inst.reg(0), OP_JALR),
        Beq | Bne | Blt | Bge | Bltu | Bgeu => b_type(imm, inst.reg(1), inst.reg(0), branch_f3(m)),
        Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu => i_type(imm, inst.reg(2), load_f3(m), inst.reg(0), OP_LOAD),
        Sb | Sh | Sw | Sd => {
            let f3 = match m {
                Sb => 0,
                Sh => 1,
                Sw => 2,
                _ => 3,
            };
            s_type(imm, inst.reg(0), inst.reg(2), f3)
        }
        Addi | Slti | Sltiu | Xori | Ori | Andi => {
            let f3 = match m {
                Addi => 0,
                Slti => 2,
                Sltiu => 3,
                Xori => 4,
                Ori => 6,
                _ => 7,
            };
            i_type(imm, inst.reg(1), f3, inst.reg(0), OP_IMM)
        }
        Slli => i_type(imm, inst.reg(1), 1, inst.reg(0), OP_IMM),
        Srli => i_type(imm, inst.reg(1), 5, inst.reg(0), OP_IMM),
        Srai => i_type(imm | 0x400, inst.reg(1), 5, inst.reg(0), OP_IMM),
        Addiw => i_type(imm, inst.reg(1), 0, inst.reg(0), OP_IMM32),
        Slliw => i_type(imm, inst.reg(1), 1, inst.reg(0), OP_IMM32),
        Srliw => i_type(imm, inst.reg(1), 5, inst.reg(0), OP_IMM32),
        Sraiw => i_type(imm | 0x400, inst.reg(1), 5, inst.reg(0), OP_IMM32),
        Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And => {
            let (f7, f3) = match m {
                Add => (0, 0),
                Sub => (0x20, 0),
                Sll => (0, 1),
                Slt => (0, 2),
                Sltu => (0, 3),
                Xor => (0, 4),
                Srl => (0, 5),
                Sra => (0x20, 5),
                Or => (0, 6),
                _ => (0, 7),
            };
            r_type(f7, inst.reg(2), inst.reg(1), f3, inst.reg(0), OP_REG)
        }
        Addw | Subw | Sllw | Srlw | Sraw => {
            let (f7, f3) = match m {
                Addw => (0, 0),
                Subw => (0x20, 0),
                Sllw => (0, 1),
                Srlw => (0, 5),
                _ => (0x20, 5),
            };
            r_type(f7, inst.reg(2), inst.reg(1), f3, inst.reg(0), OP_REG32)
        }
        Fence => 0x0ff0_000f,
        Ecall => 0x0000_0073,
        Ebreak => 0x0010_0073,
        Mret => 0x3020_0073,
        Sret => 0x1020_0073,
        Wfi => 0x1050_0073,
        SfenceVma => r_type(0x09, inst.reg(1), inst.reg(0), 0, 0, OP_SYSTEM),
        Csrrw | Csrrs | Csrrc => {
            let f3 = match m {
                Csrrw => 1,
                Csrrs => 2,
                _ => 3,
            };
            csr_word(inst.csr(1), inst.reg(2) as u32, f3, inst.reg(0))
        }
        Csrrwi | Csrrsi | Csrrci => {
            let f3 = match m {
                Csrrwi => 5,
                Csrrsi => 6,
                _ => 7,
            };
            csr_word(inst.csr(1), imm as u32, f3, inst.reg(0))
        }
        Csrr => csr_word(inst.csr(1), 0, 2, inst.reg(0)),
        Csrw => csr_word(inst.csr(0), inst.reg(1) as u32, 1, 0),
        Csrs => csr_word(inst.csr(0), inst.reg(1) as u32, 2, 0),
        Csrc => csr_word(inst.csr(0), inst.reg(1) as u32, 3, 0),
    })
}

fn csr_word(csr: Csr, src: u32, f3: u32, rd: u8) -> u32 {
    (csr.addr() as u32) << 20 | (src & 0x1f) << 15 | f3 << 12 | (rd as u32) << 7 | OP_SYSTEM
}

/// Encodes a logical instruction; `li` expands to a lui/addi(w)/slli sequence.
pub fn encode(inst: &Instruction) -> Result<Vec<u32>, IsaError> {
    if inst.mnemonic == Li {
        let rd = inst.reg(0);
        let v = inst.imm().unwrap_or(0);
        return li_sequence(rd, v).iter().map(encode_word).collect();
    }
    encode_word(inst).map(|w| vec![w])
}

/// Machine-level instructions a logical instruction assembles to.
pub fn lower(inst: &Instruction) -> Vec<Instruction> {
    let mk = |m, ops| Instruction { mnemonic: m, operands: ops };
    let (r, c) = (Operand::Reg, Operand::Csr);
    match inst.mnemonic {
        Li => li_sequence(inst.reg(0), inst.imm().unwrap_or(0)),
        Csrr => vec![mk(Csrrs, vec![r(inst.reg(0)), c(inst.csr(1)), r(0)])],
        Csrw => vec![mk(Csrrw, vec![r(0), c(inst.csr(0)), r(inst.reg(1))])],
        Csrs => vec![mk(Csrrs, vec![r(0), c(inst.csr(0)), r(inst.reg(1))])],
        Csrc => vec![mk(Csrrc, vec![r(0), c(inst.csr(0)), r(inst.reg(1))])],
        _ => vec![inst.clone()],
    }
}

/// Random in-subset operands for `m`, with immediates drawn over the full field range.
pub fn random_instruction<R: rand::Rng + ?Sized>(m: Mnemonic, rng: &mut R) -> Instruction {
    use super::ImmField as F;
    let imm = match m.imm_field() {
        Some(F::Signed12) => rng.gen_range(-2048..=2047),
        Some(F::Shamt6) => rng.gen_range(0..=63),
        Some(F::Shamt5) | Some(F::Uimm5) => rng.gen_range(0..=31),
        Some(F::Branch13) => rng.gen_range(-2048..=2047) * 2,
        Some(F::Jump21) => rng.gen_range(-(1 << 19)..(1 << 19)) * 2,
        Some(F::Upper20) => rng.gen_range(0..=0xf_ffff),
        Some(F::Any64) => rng.gen(),
        None => 0,
    };
    let ops = m
        .signature()
        .iter()
        .map(|k| match k {
            super::OperandKind::Reg => Operand::Reg(rng.gen_range(0..32)),
            super::OperandKind::Csr => Operand::Csr(Csr::ALL[rng.gen_range(0..Csr::ALL.len())]),
            super::OperandKind::Imm => Operand::Imm(imm),
        })
        .collect();
    Instruction { mnemonic: m, operands: ops }
}

fn sext12(v: i64) -> i64 {
    (v << 52) >> 52
}

/// Canonical materialisation of a 64-bit constant into `rd`.
pub fn li_sequence(rd: u8, value: i64) -> Vec<Instruction> {
    let mk = |m, ops| Instruction { mnemonic: m, operands: ops };
    let r = Operand::Reg;
    let imm = Operand::Imm;
    if (-2048..=2047).contains(&value) {
        return vec![mk(Addi, vec![r(rd), r(0), imm(value)])];
    }
    if value == value as i32 as i64 {
        let lo = sext12(value);
        let hi = ((value - lo) >> 12) & 0xfffff;
        let mut seq = vec![mk(Lui, vec![r(rd), imm(hi)])];
        if lo != 0 {
            seq.push(mk(Addiw, vec![r(rd), r(rd), imm(lo)]));
        }
        return seq;
    }
    let lo = sext12(value);
    let mut hi = value.wrapping_sub(lo) >> 12;
    let tz = hi.trailing_zeros();
    hi >>= tz;
    let shift = 12 + tz as i64;
    let mut seq = li_sequence(rd, hi);
    seq.push(mk(Slli, vec![r(rd), r(rd), imm(shift)]));
    if lo != 0 {
        seq.push(mk(Addi, vec![r(rd), r(rd), imm(lo)]));
    }
    seq
}

fn bits(w: u32, hi: u32, lo: u32) -> u32 {
    (w >> lo) & ((1u32 << (hi - lo + 1)) - 1)
}

fn sign_extend(v: u32, width: u32) -> i64 {
    let shift = 64 - width;
    ((v as u64) << shift) as i64 >> shift
}

/// Decodes one word. Anything outside the subset is `IllegalInstruction`.
pub fn decode(word: u32) -> Result<Decoded, IsaError> {
    let illegal = || IsaError::IllegalInstruction(word);
    let op = word & 0x7f;
    let rd = bits(word, 11, 7) as u8;
    let f3 = bits(word, 14, 12);
    let rs1 = bits(word, 19, 15) as u8;
    let rs2 = bits(word, 24, 20) as u8;
    let f7 = bits(word, 31, 25);
    let i_imm = sign_extend(word >> 20, 12);
    let mut d;
    match op {
        OP_LUI | OP_AUIPC => {
            d = Decoded::new(if op == OP_LUI { Lui } else { Auipc });
            d.rd = rd;
            d.imm = (word >> 12) as i64;
        }
        OP_JAL => {
            d = Decoded::new(Jal);
            d.rd = rd;
            let raw = bits(word, 31, 31) << 20
                | bits(word, 19, 12) << 12
                | bits(word, 20, 20) << 11
                | bits(word, 30, 21) << 1;
            d.imm = sign_extend(raw, 21);
        }
        OP_JALR if f3 == 0 => {
            d = Decoded::new(Jalr);
            d.rd = rd;
            d.rs1 = rs1;
            d.imm = i_imm;
        }
        OP_BRANCH => {
            let m = match f3 {
                0 => Beq,
                1 => Bne,
                4 => Blt,
                5 => Bge,
                6 => Bltu,
                7 => Bgeu,
                _ => return Err(illegal()),
            };
            d = Decoded::new(m);
            d.rs1 = rs1;
            d.rs2 = rs2;
            let raw =
                bits(word, 31, 31) << 12 | bits(word, 7, 7) << 11 | bits(word, 30, 25) << 5 | bits(word, 11, 8) << 1;
            d.imm = sign_extend(raw, 13);
        }
        OP_LOAD => {
            let m = match f3 {
                0 => Lb,
                1 => Lh,
                2 => Lw,
                3 => Ld,
                4 => Lbu,
                5 => Lhu,
                6 => Lwu,
                _ => return Err(illegal()),
            };
            d = Decoded::new(m);
            d.rd = rd;
            d.rs1 = rs1;
            d.imm = i_imm;
        }
        OP_STORE => {
            let m = match f3 {
                0 => Sb,
                1 => Sh,
                2 => Sw,
                3 => Sd,
                _ => return Err(illegal()),
            };
            d = Decoded::new(m);
            d.rs1 = rs1;
            d.rs2 = rs2;
            d.imm = sign_extend(f7 << 5 | rd as u32, 12);
        }
        OP_IMM => {
            let funct6 = bits(word, 31, 26);
            let m = match f3 {
                0 => Addi,
                2 => Slti,
                3 => Sltiu,
                4 => Xori,
                6 => Ori,
                7 => Andi,
                1 if funct6 == 0 => Slli,
                5 if funct6 == 0 => Srli,
                5 if funct6 == 0x10 => Srai,
                _ => return Err(illegal()),
            };
            d = Decoded::new(m);
            d.rd = rd;
            d.rs1 = rs1;
            d.imm = if matches!(m, Slli | Srli | Srai) { bits(word, 25, 20) as i64 } else { i_imm };
        }
        OP_IMM32 => {
            let m = match (f3, f7) {
                (0, _) => Addiw,
                (1, 0) => Slliw,
                (5, 0) => Srliw,
                (5, 0x20) => Sraiw,
                _ => return Err(illegal()),
            };
            d = Decoded::new(m);
            d.rd = rd;
            d.rs1 = rs1;
            d.imm = if m == Addiw { i_imm } else { rs2 as i64 };
        }
        OP_REG => {
            let m = match (f7, f3) {
                (0, 0) => Add,
                (0x20, 0) => Sub,
                (0, 1) => Sll,
                (0, 2) => Slt,
                (0, 3) => Sltu,
                (0, 4) => Xor,
                (0, 5) => Srl,
                (0x20, 5) => Sra,
                (0, 6) => Or,
                (0, 7) => And,
                _ => return Err(illegal()),
            };
            d = Decoded::new(m);
            d.rd = rd;
            d.rs1 = rs1;
            d.rs2 = rs2;
        }
        OP_REG32 => {
            let m = match (f7, f3) {
                (0, 0) => Addw,
                (0x20, 0) => Subw,
                (0, 1) => Sllw,
                (0, 5) => Srlw,
                (0x20, 5) => Sraw,
                _ => return Err(illegal()),
            };
            d = Decoded::new(m);
            d.rd = rd;
            d.rs1 = rs1;
            d.rs2 = rs2;
        }
        OP_FENCE if f3 == 0 => d = Decoded::new(Fence),
        OP_SYSTEM => {
            if f3 == 0 {
                d = match word {
                    0x0000_0073 => Decoded::new(Ecall),
                    0x0010_0073 => Decoded::new(Ebreak),
                    0x3020_0073 => Decoded::new(Mret),
                    0x1020_0073 => Decoded::new(Sret),
                    0x1050_0073 => Decoded::new(Wfi),
                    _ if f7 == 0x09 && rd == 0 => {
                        let mut s = Decoded::new(SfenceVma);
                        s.rs1 = rs1;
                        s.rs2 = rs2;
                        s
                    }
                    _ => return Err(illegal()),
                };
            } else {
                let m = match f3 {
                    1 => Csrrw,
                    2 => Csrrs,
                    3 => Csrrc,
                    5 => Csrrwi,
                    6 => Csrrsi,
                    7 => Csrrci,
                    _ => return Err(illegal()),
                };
                let csr = Csr::from_addr((word >> 20) as u16).ok_or_else(illegal)?;
                d = Decoded::new(m);
                d.rd = rd;
                d.csr = Some(csr);
                if f3 >= 5 {
                    d.imm = rs1 as i64;
                } else {
                    d.rs1 = rs1;
                }
            }
        }
        _ => return Err(illegal()),
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_li(seq: &[Instruction]) -> i64 {
        let mut v: i64 = 0;
        for i in seq {
            let imm = i.imm().unwrap();
            v = match i.mnemonic {
                Addi if i.reg(1) == 0 => imm,
                Addi => v.wrapping_add(imm),
                Addiw => (v.wrapping_add(imm)) as i32 as i64,
                Lui => ((imm << 12) as i32) as i64,
                Slli => v.wrapping_shl(imm as u32),
                m => panic!("unexpected {m}"),
            };
        }
        v
    }

    #[test]
    fn nop_and_addi() {
        let i: Instruction = "addi x1, x2, 8".parse().unwrap();
        assert_eq!(encode_word(&i).unwrap(), 0x0081_0093);
        let nop: Instruction = "addi x0, x0, 0".parse().unwrap();
        assert_eq!(encode_word(&nop).unwrap(), 0x0000_0013);
    }

    #[test]
    fn immediate_range_checked() {
        let i: Instruction = "addi x1, x2, 4096".parse().unwrap();
        assert!(matches!(encode(&i), Err(IsaError::ImmediateOutOfRange { .. })));
        let b: Instruction = "beq x1, x2, 3".parse().unwrap();
        assert!(encode(&b).is_err());
        let s: Instruction = "slliw x1, x2, 32".parse().unwrap();
        assert!(encode(&s).is_err());
    }

    #[test]
    fn li_expansion_edge_values() {
        for v in [
            0,
            1,
            -1,
            2047,
            -2048,
            2048,
            0x7fff_f800,
            0x7fff_ffff,
            -0x8000_0000,
            0x8000_0000,
            0xffff_ffff,
            1 << 37,
            0x1234_5678,
            i64::MAX,
            i64::MIN,
            0x0123_4567_89ab_cdef,
        ] {
            let seq = li_sequence(5, v);
            assert!(seq.len() <= 8, "{v:#x} took {} words", seq.len());
            assert_eq!(eval_li(&seq), v, "{v:#x}");
            for i in &seq {
                encode_word(i).unwrap();
            }
        }
    }

    #[test]
    fn undecodable_words() {
        assert!(decode(0).is_err());
        assert!(decode(0xffff_ffff).is_err());
        // csrrs with an unsupported CSR address (cycle)
        assert!(decode(0xc000_2073).is_err());
    }

    proptest::proptest! {
        #[test]
        fn li_sequence_materialises_any_constant(v in proptest::num::i64::ANY) {
            proptest::prop_assert_eq!(eval_li(&li_sequence(7, v)), v);
        }
    }
}
