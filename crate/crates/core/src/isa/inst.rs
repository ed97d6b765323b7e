// SPDX-License-Identifier: Apache-2.0

//! Logical instructions, their operand signatures and the canonical assembly syntax.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::csr::Csr;
use super::IsaError;

/// Operand slot kinds used by mnemonic signatures and tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperandKind {
    Reg,
    Csr,
    Imm,
}

/// How the operand list is laid out in assembly text.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Syntax {
    /// `op a, b, c`
    Plain,
    /// `op rd, off(base)`
    Memory,
}

/// Range constraint on an immediate operand after palette expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImmField {
    Signed12,
    Shamt6,
    Shamt5,
    Branch13,
    Jump21,
    Upper20,
    Uimm5,
    Any64,
}

impl ImmField {
    pub fn accepts(self, v: i64) -> bool {
        match self {
            ImmField::Signed12 => (-2048..=2047).contains(&v),
            ImmField::Shamt6 => (0..=63).contains(&v),
            ImmField::Shamt5 | ImmField::Uimm5 => (0..=31).contains(&v),
            ImmField::Branch13 => (-4096..=4094).contains(&v) && v % 2 == 0,
            ImmField::Jump21 => (-(1 << 20)..=(1 << 20) - 2).contains(&v) && v % 2 == 0,
            ImmField::Upper20 => (0..=0xf_ffff).contains(&v),
            ImmField::Any64 => true,
        }
    }
}

macro_rules! mnemonics {
    ($($variant:ident => $name:literal,)*) => {
        /// Every mnemonic in the supported subset, including the assembler
        /// pseudo-instructions that have their own opcode token.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Mnemonic {
            $($variant,)*
        }

        impl Mnemonic {
            pub const ALL: &'static [Mnemonic] = &[$(Mnemonic::$variant,)*];

            pub const fn name(self) -> &'static str {
                match self {
                    $(Mnemonic::$variant => $name,)*
                }
            }

            pub fn from_name(s: &str) -> Option<Mnemonic> {
                match s {
                    $($name => Some(Mnemonic::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

mnemonics! {
    Lui => "lui", Auipc => "auipc", Jal => "jal", Jalr => "jalr",
    Beq => "beq", Bne => "bne", Blt => "blt", Bge => "bge", Bltu => "bltu", Bgeu => "bgeu",
    Lb => "lb", Lh => "lh", Lw => "lw", Ld => "ld", Lbu => "lbu", Lhu => "lhu", Lwu => "lwu",
    Sb => "sb", Sh => "sh", Sw => "sw", Sd => "sd",
    Addi => "addi", Slti => "slti", Sltiu => "sltiu", Xori => "xori", Ori => "ori", Andi => "andi",
    Slli => "slli", Srli => "srli", Srai => "srai",
    Add => "add", Sub => "sub", Sll => "sll", Slt => "slt", Sltu => "sltu",
    Xor => "xor", Srl => "srl", Sra => "sra", Or => "or", And => "and",
    Addiw => "addiw", Slliw => "slliw", Srliw => "srliw", Sraiw => "sraiw",
    Addw => "addw", Subw => "subw", Sllw => "sllw", Srlw => "srlw", Sraw => "sraw",
    Fence => "fence", Ecall => "ecall", Ebreak => "ebreak",
    Csrrw => "csrrw", Csrrs => "csrrs", Csrrc => "csrrc",
    Csrrwi => "csrrwi", Csrrsi => "csrrsi", Csrrci => "csrrci",
    Mret => "mret", Sret => "sret", Wfi => "wfi", SfenceVma => "sfence.vma",
    Li => "li", Csrr => "csrr", Csrw => "csrw", Csrs => "csrs", Csrc => "csrc",
}

use Mnemonic::*;
use OperandKind::{Csr as C, Imm as I, Reg as R};

impl Mnemonic {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Operand kinds in assembly order.
    pub fn signature(self) -> &'static [OperandKind] {
        match self {
            Lui | Auipc | Jal | Li => &[R, I],
            Jalr | Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu | Sb | Sh | Sw | Sd => &[R, I, R],
            Beq | Bne | Blt | Bge | Bltu | Bgeu => &[R, R, I],
            Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai | Addiw | Slliw | Srliw | Sraiw => &[R, R, I],
            Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And | Addw | Subw | Sllw | Srlw | Sraw => &[R, R, R],
            Fence | Ecall | Ebreak | Mret | Sret | Wfi => &[],
            Csrrw | Csrrs | Csrrc => &[R, C, R],
            Csrrwi | Csrrsi | Csrrci => &[R, C, I],
            SfenceVma => &[R, R],
            Csrr => &[R, C],
            Csrw | Csrs | Csrc => &[C, R],
        }
    }

    pub fn syntax(self) -> Syntax {
        match self {
            Jalr | Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu | Sb | Sh | Sw | Sd => Syntax::Memory,
            _ => Syntax::Plain,
        }
    }

    pub fn imm_field(self) -> Option<ImmField> {
        Some(match self {
            Lui | Auipc => ImmField::Upper20,
            Jal => ImmField::Jump21,
            Beq | Bne | Blt | Bge | Bltu | Bgeu => ImmField::Branch13,
            Slli | Srli | Srai => ImmField::Shamt6,
            Slliw | Srliw | Sraiw => ImmField::Shamt5,
            Csrrwi | Csrrsi | Csrrci => ImmField::Uimm5,
            Li => ImmField::Any64,
            Jalr | Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu | Sb | Sh | Sw | Sd | Addi | Slti | Sltiu | Xori | Ori
            | Andi | Addiw => ImmField::Signed12,
            _ => return None,
        })
    }

    pub fn is_pseudo(self) -> bool {
        matches!(self, Li | Csrr | Csrw | Csrs | Csrc)
    }

    pub fn is_load(self) -> bool {
        matches!(self, Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu)
    }

    pub fn is_store(self) -> bool {
        matches!(self, Sb | Sh | Sw | Sd)
    }

    pub fn is_branch(self) -> bool {
        matches!(self, Beq | Bne | Blt | Bge | Bltu | Bgeu)
    }

    pub fn is_csr(self) -> bool {
        matches!(self, Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci | Csrr | Csrw | Csrs | Csrc)
    }

    /// Machine-level (non-pseudo) mnemonics, in declaration order.
    pub fn machine() -> impl Iterator<Item = Mnemonic> {
        Self::ALL.iter().copied().filter(|m| !m.is_pseudo())
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One operand of a logical instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Reg(u8),
    Csr(Csr),
    Imm(i64),
}

impl Operand {
    pub fn kind(&self) -> OperandKind {
        match self {
            Operand::Reg(_) => OperandKind::Reg,
            Operand::Csr(_) => OperandKind::Csr,
            Operand::Imm(_) => OperandKind::Imm,
        }
    }
}

/// A logical instruction: mnemonic plus operands in assembly order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub mnemonic: Mnemonic,
    pub operands: Vec<Operand>,
}

impl Instruction {
    /// Builds an instruction after checking operand count and kinds.
    pub fn new(mnemonic: Mnemonic, operands: Vec<Operand>) -> Result<Self, IsaError> {
        let sig = mnemonic.signature();
        if sig.len() != operands.len() {
            return Err(IsaError::BadOperandCount {
                mnemonic: mnemonic.name().to_string(),
                expected: sig.len(),
                found: operands.len(),
            });
        }
        for (pos, (want, got)) in sig.iter().zip(&operands).enumerate() {
            if *want != got.kind() {
                return Err(IsaError::BadOperandKind { mnemonic: mnemonic.name().to_string(), position: pos });
            }
            if let Operand::Reg(r) = got {
                if *r > 31 {
                    return Err(IsaError::UnknownRegister(format!("x{r}")));
                }
            }
        }
        Ok(Instruction { mnemonic, operands })
    }

    pub fn reg(&self, pos: usize) -> u8 {
        match self.operands[pos] {
            Operand::Reg(r) => r,
            _ => panic!("operand {pos} of {} is not a register", self.mnemonic),
        }
    }

    pub fn csr(&self, pos: usize) -> Csr {
        match self.operands[pos] {
            Operand::Csr(c) => c,
            _ => panic!("operand {pos} of {} is not a CSR", self.mnemonic),
        }
    }

    pub fn imm(&self) -> Option<i64> {
        self.operands.iter().find_map(|o| match o {
            Operand::Imm(v) => Some(*v),
            _ => None,
        })
    }

    /// Canonical assembly text.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

pub fn render_imm(v: i64) -> String {
    if v.unsigned_abs() < 4096 {
        v.to_string()
    } else if v < 0 {
        format!("-0x{:x}", v.unsigned_abs())
    } else {
        format!("0x{v:x}")
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one = |o: &Operand| match o {
            Operand::Reg(r) => format!("x{r}"),
            Operand::Csr(c) => c.name().to_string(),
            Operand::Imm(v) => render_imm(*v),
        };
        f.write_str(self.mnemonic.name())?;
        match (self.mnemonic.syntax(), self.operands.as_slice()) {
            (_, []) => Ok(()),
            (Syntax::Memory, [a, off, base]) => {
                write!(f, " {}, {}({})", one(a), one(off), one(base))
            }
            (_, ops) => {
                let parts: Vec<String> = ops.iter().map(one).collect();
                write!(f, " {}", parts.join(", "))
            }
        }
    }
}

const ABI_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "s2",
    "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
];

/// Parses `x7`, `t2`, `fp` etc. into a register index.
pub fn parse_reg(s: &str) -> Option<u8> {
    if let Some(n) = s.strip_prefix('x') {
        if let Ok(i) = n.parse::<u8>() {
            if i < 32 && (n == "0" || !n.starts_with('0')) {
                return Some(i);
            }
        }
    }
    if s == "fp" {
        return Some(8);
    }
    ABI_NAMES.iter().position(|&a| a == s).map(|i| i as u8)
}

/// Parses decimal, hex (`0x..`), negated forms, and `(a << b)` shift expressions.
pub fn parse_imm(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        let (l, r) = inner.split_once("<<")?;
        let base = parse_imm(l)?;
        let sh = parse_imm(r)?;
        if !(0..64).contains(&sh) {
            return None;
        }
        return Some(base.wrapping_shl(sh as u32));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let mag: u64 = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).ok()?
    } else {
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        body.parse::<u64>().ok()?
    };
    Some(if neg { (mag as i64).wrapping_neg() } else { mag as i64 })
}

fn strip_comment(line: &str) -> &str {
    let cut = [line.find('#'), line.find("//")].into_iter().flatten().min();
    match cut {
        Some(i) => &line[..i],
        None => line,
    }
}

impl FromStr for Instruction {
    type Err = IsaError;

    fn from_str(text: &str) -> Result<Self, IsaError> {
        let text = strip_comment(text).trim();
        let (head, rest) = match text.split_once(char::is_whitespace) {
            Some((h, r)) => (h, r.trim()),
            None => (text, ""),
        };
        let mnemonic = Mnemonic::from_name(&head.to_ascii_lowercase())
            .ok_or_else(|| IsaError::UnknownMnemonic(head.to_string()))?;
        let mut raw: Vec<String> = if rest.is_empty() { Vec::new() } else { split_operands(rest) };
        // `off(base)` expands to two operands in memory syntax.
        if mnemonic.syntax() == Syntax::Memory && raw.len() == 2 {
            if let Some((off, base)) = raw[1].strip_suffix(')').and_then(|s| s.split_once('(')) {
                let (off, base) = (off.trim().to_string(), base.trim().to_string());
                raw.truncate(1);
                raw.push(if off.is_empty() { "0".into() } else { off });
                raw.push(base);
            }
        }
        // Canonical `fence` also accepts the explicit full ordering.
        if mnemonic == Fence && raw.len() == 2 && raw.iter().all(|r| r == "iorw") {
            raw.clear();
        }
        let sig = mnemonic.signature();
        if raw.len() != sig.len() {
            return Err(IsaError::BadOperandCount {
                mnemonic: mnemonic.name().to_string(),
                expected: sig.len(),
                found: raw.len(),
            });
        }
        let mut ops = Vec::with_capacity(sig.len());
        for (kind, tok) in sig.iter().zip(&raw) {
            let op = match kind {
                OperandKind::Reg => Operand::Reg(parse_reg(tok).ok_or_else(|| IsaError::UnknownRegister(tok.clone()))?),
                OperandKind::Csr => Operand::Csr(Csr::from_name(tok).ok_or_else(|| IsaError::UnknownCsr(tok.clone()))?),
                OperandKind::Imm => Operand::Imm(parse_imm(tok).ok_or_else(|| IsaError::BadImmediate(tok.clone()))?),
            };
            ops.push(op);
        }
        Instruction::new(mnemonic, ops)
    }
}

/// Splits on commas that are not nested inside parentheses.
fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth -= 1;
                cur.push(ch);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    out.push(cur.trim().to_string());
    out
}

/// Parses assembly source: one instruction per line, `#` comments, blank lines skipped.
pub fn parse_program(src: &str) -> Result<Vec<Instruction>, (usize, IsaError)> {
    src.lines()
        .enumerate()
        .filter(|(_, l)| !strip_comment(l).trim().is_empty())
        .map(|(n, l)| l.parse::<Instruction>().map_err(|e| (n + 1, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render_canonical() {
        let i: Instruction = "addi x1, x2, 8".parse().unwrap();
        assert_eq!(i.operands, vec![Operand::Reg(1), Operand::Reg(2), Operand::Imm(8)]);
        assert_eq!(i.render(), "addi x1, x2, 8");

        let l: Instruction = "lb t3, 0(t1)".parse().unwrap();
        assert_eq!(l.render(), "lb x28, 0(x6)");

        let c: Instruction = "csrs mstatus, t0".parse().unwrap();
        assert_eq!(c.render(), "csrs mstatus, x5");
    }

    #[test]
    fn shift_expression_immediates() {
        assert_eq!(parse_imm("(1 << 37)"), Some(1 << 37));
        assert_eq!(parse_imm("0x12345678"), Some(0x1234_5678));
        assert_eq!(parse_imm("-0x800"), Some(-2048));
        assert_eq!(parse_imm("12a"), None);
        let li: Instruction = "li t0, (1 << 5) // Load STI".parse().unwrap();
        assert_eq!(li.imm(), Some(32));
    }

    #[test]
    fn errors() {
        assert!(matches!("frobnicate x1".parse::<Instruction>(), Err(IsaError::UnknownMnemonic(_))));
        assert!(matches!("addi x1, x2".parse::<Instruction>(), Err(IsaError::BadOperandCount { .. })));
        assert!(matches!("addi x1, x40, 3".parse::<Instruction>(), Err(IsaError::UnknownRegister(_))));
        assert!(matches!("csrr x1, hstatus".parse::<Instruction>(), Err(IsaError::UnknownCsr(_))));
    }

    #[test]
    fn register_aliases() {
        assert_eq!(parse_reg("zero"), Some(0));
        assert_eq!(parse_reg("t0"), Some(5));
        assert_eq!(parse_reg("sp"), Some(2));
        assert_eq!(parse_reg("fp"), Some(8));
        assert_eq!(parse_reg("x31"), Some(31));
        assert_eq!(parse_reg("x01"), None);
    }

    #[test]
    fn program_with_comments() {
        let p = parse_program("# setup\nli t2, 0x12345678\n\nsw t2, 0(t1) # store\n").unwrap();
        assert_eq!(p.len(), 2);
        assert!(parse_program("nop x1").is_err());
    }
}
