// SPDX-License-Identifier: Apache-2.0

//! Token vocabulary and the token <-> instruction mapping.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::csr::Csr;
use super::inst::{render_imm, Instruction, Mnemonic, Operand, OperandKind};
use super::IsaError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TokenKind {
    Opcode,
    Reg,
    Csr,
    Imm,
    Eoi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub id: u16,
    pub kind: TokenKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Value {
    Eoi,
    Opcode(Mnemonic),
    Reg(u8),
    Csr(Csr),
    Imm(i64),
}

/// Which mnemonics, CSRs and how many immediates the vocabulary covers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubsetConfig {
    pub mnemonics: Vec<Mnemonic>,
    pub csrs: Vec<Csr>,
    pub palette_size: usize,
    pub palette_seed: u64,
}

impl Default for SubsetConfig {
    fn default() -> Self {
        SubsetConfig {
            mnemonics: Mnemonic::ALL.to_vec(),
            csrs: Csr::ALL.to_vec(),
            palette_size: 512,
            palette_seed: 0x1b_5eed,
        }
    }
}

/// Immutable token table. Id 0 is `<eoi>`, then opcodes, x0..x31, CSRs, immediates.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    values: Vec<Value>,
    surfaces: Vec<String>,
    by_surface: HashMap<String, u16>,
    opcode_ids: Vec<Option<u16>>,
    csr_ids: Vec<Option<u16>>,
    imm_ids: HashMap<i64, u16>,
    reg_base: u16,
    palette: Vec<i64>,
}

#[derive(Serialize)]
struct DumpEntry<'a> {
    id: u16,
    surface: &'a str,
    kind: TokenKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    constant: Option<i64>,
}

/// The fixed immediate palette: structured constants first, then seeded
/// random values, then small integers until `size` is reached.
pub fn build_palette(size: usize, seed: u64) -> Vec<i64> {
    let mut out: Vec<i64> = Vec::with_capacity(size);
    let mut seen = std::collections::HashSet::new();
    let mut push = |v: i64, out: &mut Vec<i64>| {
        if out.len() < size && seen.insert(v) {
            out.push(v);
        }
    };
    for v in [0, 1, -1, 2, -2] {
        push(v, &mut out);
    }
    for k in 0..64u32 {
        let p = 1i64.wrapping_shl(k);
        let m = p.wrapping_sub(1);
        for v in [p, m, !p, !m] {
            push(v, &mut out);
        }
    }
    for v in [
        2047,
        -2048,
        2048,
        -2049,
        4094,
        -4096,
        0x7_ffff,
        0xf_ffff,
        -0x8_0000,
        0x7fff_f800,
        0x7fff_ffff,
        -0x8000_0000,
        0x8000_0000,
        0xffff_ffff,
        0x1_0000_0000,
        i64::MAX,
        i64::MIN,
    ] {
        push(v, &mut out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..128 {
        push(rng.gen::<i64>(), &mut out);
    }
    let mut n = 3i64;
    while out.len() < size {
        push(n, &mut out);
        push(-n, &mut out);
        n += 1;
    }
    out
}

impl Vocabulary {
    pub fn new(cfg: &SubsetConfig) -> Result<Self, IsaError> {
        let mut values = vec![Value::Eoi];
        let mut opcode_ids = vec![None; Mnemonic::ALL.len()];
        for &m in &cfg.mnemonics {
            if opcode_ids[m.index()].is_some() {
                return Err(IsaError::DuplicateMnemonic(m.name().to_string()));
            }
            opcode_ids[m.index()] = Some(values.len() as u16);
            values.push(Value::Opcode(m));
        }
        let reg_base = values.len() as u16;
        values.extend((0..32).map(Value::Reg));
        let mut csr_ids = vec![None; Csr::ALL.len()];
        for &c in &cfg.csrs {
            if csr_ids[c.index()].is_some() {
                return Err(IsaError::DuplicateCsr(c.name().to_string()));
            }
            csr_ids[c.index()] = Some(values.len() as u16);
            values.push(Value::Csr(c));
        }
        let palette = build_palette(cfg.palette_size, cfg.palette_seed);
        let mut imm_ids = HashMap::new();
        for &v in &palette {
            imm_ids.insert(v, values.len() as u16);
            values.push(Value::Imm(v));
        }
        let surfaces: Vec<String> = values
            .iter()
            .map(|v| match v {
                Value::Eoi => "<eoi>".to_string(),
                Value::Opcode(m) => m.name().to_string(),
                Value::Reg(r) => format!("x{r}"),
                Value::Csr(c) => c.name().to_string(),
                Value::Imm(i) => render_imm(*i),
            })
            .collect();
        let by_surface = surfaces.iter().enumerate().map(|(i, s)| (s.clone(), i as u16)).collect();
        Ok(Vocabulary { values, surfaces, by_surface, opcode_ids, csr_ids, imm_ids, reg_base, palette })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn kind_of(v: &Value) -> TokenKind {
        match v {
            Value::Eoi => TokenKind::Eoi,
            Value::Opcode(_) => TokenKind::Opcode,
            Value::Reg(_) => TokenKind::Reg,
            Value::Csr(_) => TokenKind::Csr,
            Value::Imm(_) => TokenKind::Imm,
        }
    }

    pub fn token(&self, id: u16) -> Option<Token> {
        self.values.get(id as usize).map(|v| Token { id, kind: Self::kind_of(v) })
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> + '_ {
        (0..self.values.len() as u16).map(|id| self.token(id).expect("in range"))
    }

    pub fn eoi(&self) -> Token {
        Token { id: 0, kind: TokenKind::Eoi }
    }

    pub fn surface(&self, id: u16) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn lookup(&self, surface: &str) -> Option<Token> {
        self.by_surface.get(surface).and_then(|&id| self.token(id))
    }

    pub fn opcode(&self, m: Mnemonic) -> Option<Token> {
        self.opcode_ids[m.index()].map(|id| Token { id, kind: TokenKind::Opcode })
    }

    pub fn reg(&self, r: u8) -> Token {
        assert!(r < 32);
        Token { id: self.reg_base + r as u16, kind: TokenKind::Reg }
    }

    pub fn csr(&self, c: Csr) -> Option<Token> {
        self.csr_ids[c.index()].map(|id| Token { id, kind: TokenKind::Csr })
    }

    pub fn imm(&self, v: i64) -> Option<Token> {
        self.imm_ids.get(&v).map(|&id| Token { id, kind: TokenKind::Imm })
    }

    /// The 64-bit constant behind an IMM token.
    pub fn imm_value(&self, id: u16) -> Option<i64> {
        match self.values.get(id as usize) {
            Some(Value::Imm(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn mnemonic(&self, id: u16) -> Option<Mnemonic> {
        match self.values.get(id as usize) {
            Some(Value::Opcode(m)) => Some(*m),
            _ => None,
        }
    }

    pub fn palette(&self) -> &[i64] {
        &self.palette
    }

    pub fn mnemonics(&self) -> impl Iterator<Item = Mnemonic> + '_ {
        self.values.iter().filter_map(|v| match v {
            Value::Opcode(m) => Some(*m),
            _ => None,
        })
    }

    pub fn csrs(&self) -> impl Iterator<Item = Csr> + '_ {
        self.values.iter().filter_map(|v| match v {
            Value::Csr(c) => Some(*c),
            _ => None,
        })
    }

    /// Stable JSON dump: one object per token in id order.
    pub fn dump_json(&self) -> String {
        let entries: Vec<DumpEntry> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| DumpEntry {
                id: i as u16,
                surface: &self.surfaces[i],
                kind: Self::kind_of(v),
                constant: match v {
                    Value::Imm(c) => Some(*c),
                    _ => None,
                },
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("vocabulary dump serializes")
    }

    /// SHA-256 of the JSON dump, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.dump_json().as_bytes()))
    }

    fn operand_token(&self, op: &Operand) -> Result<Token, IsaError> {
        match *op {
            Operand::Reg(r) => Ok(self.reg(r)),
            Operand::Csr(c) => self.csr(c).ok_or_else(|| IsaError::UnknownCsr(c.name().to_string())),
            Operand::Imm(v) => self.imm(v).ok_or(IsaError::ImmediateNotInPalette(v)),
        }
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::new(&SubsetConfig::default()).expect("default subset is valid")
    }
}

/// Opcode token followed by operand tokens; no trailing `<eoi>`.
pub fn tokenize_instruction(vocab: &Vocabulary, inst: &Instruction) -> Result<Vec<Token>, IsaError> {
    let op = vocab.opcode(inst.mnemonic).ok_or_else(|| IsaError::UnknownMnemonic(inst.mnemonic.name().to_string()))?;
    let mut out = vec![op];
    for o in &inst.operands {
        out.push(vocab.operand_token(o)?);
    }
    Ok(out)
}

/// Tokenizes one line of assembly.
pub fn tokenize(vocab: &Vocabulary, text: &str) -> Result<Vec<Token>, IsaError> {
    let inst: Instruction = text.parse()?;
    tokenize_instruction(vocab, &inst)
}

/// Rebuilds one instruction from its tokens (without `<eoi>`).
pub fn detokenize(vocab: &Vocabulary, tokens: &[Token]) -> Result<Instruction, IsaError> {
    let (head, rest) = tokens.split_first().ok_or(IsaError::Empty)?;
    let mnemonic = vocab.mnemonic(head.id).ok_or_else(|| {
        if vocab.token(head.id).is_none() {
            IsaError::UnknownTokenId(head.id)
        } else {
            IsaError::ExpectedOpcode
        }
    })?;
    let sig = mnemonic.signature();
    if rest.len() != sig.len() {
        return Err(IsaError::BadOperandCount {
            mnemonic: mnemonic.name().to_string(),
            expected: sig.len(),
            found: rest.len(),
        });
    }
    let mut ops = Vec::with_capacity(sig.len());
    for (pos, (want, tok)) in sig.iter().zip(rest).enumerate() {
        let bad = || IsaError::BadOperandKind { mnemonic: mnemonic.name().to_string(), position: pos };
        let v = vocab.values.get(tok.id as usize).ok_or(IsaError::UnknownTokenId(tok.id))?;
        let op = match (want, v) {
            (OperandKind::Reg, Value::Reg(r)) => Operand::Reg(*r),
            (OperandKind::Csr, Value::Csr(c)) => Operand::Csr(*c),
            (OperandKind::Imm, Value::Imm(i)) => Operand::Imm(*i),
            _ => return Err(bad()),
        };
        ops.push(op);
    }
    Instruction::new(mnemonic, ops)
}

/// Splits a flat token stream at `<eoi>`. A trailing unterminated run is kept.
pub fn split_instructions(tokens: &[Token]) -> Vec<&[Token]> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t.kind == TokenKind::Eoi {
            out.push(&tokens[start..i]);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push(&tokens[start..]);
    }
    out
}

/// Detokenizes a whole block; the error carries the failing instruction index.
pub fn detokenize_block(vocab: &Vocabulary, tokens: &[Token]) -> Result<Vec<Instruction>, (usize, IsaError)> {
    split_instructions(tokens).into_iter().enumerate().map(|(i, t)| detokenize(vocab, t).map_err(|e| (i, e))).collect()
}

/// A short run of instructions: the unit of generation and selection.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstructionBlock {
    pub instructions: Vec<Instruction>,
    pub origin_iteration: u64,
}

impl InstructionBlock {
    pub fn new(instructions: Vec<Instruction>, origin_iteration: u64) -> Self {
        InstructionBlock { instructions, origin_iteration }
    }

    pub fn from_tokens(vocab: &Vocabulary, tokens: &[Token], origin_iteration: u64) -> Result<Self, (usize, IsaError)> {
        Ok(InstructionBlock { instructions: detokenize_block(vocab, tokens)?, origin_iteration })
    }

    /// Flat token sequence with `<eoi>` after every instruction.
    pub fn token_form(&self, vocab: &Vocabulary) -> Result<Vec<Token>, IsaError> {
        let mut out = Vec::new();
        for i in &self.instructions {
            out.extend(tokenize_instruction(vocab, i)?);
            out.push(vocab.eoi());
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_vocabulary_shape() {
        let v = Vocabulary::default();
        assert_eq!(v.tokens().filter(|t| t.kind == TokenKind::Reg).count(), 32);
        assert_eq!(v.tokens().filter(|t| t.kind == TokenKind::Eoi).count(), 1);
        assert_eq!(v.palette().len(), 512);
        assert_eq!(v.len(), 1 + Mnemonic::ALL.len() + 32 + Csr::ALL.len() + 512);
        assert_eq!(Vocabulary::default().dump_json(), v.dump_json());
    }

    #[test]
    fn surface_and_id_lookups_are_inverse() {
        let v = Vocabulary::default();
        for t in v.tokens() {
            assert_eq!(v.lookup(v.surface(t.id).unwrap()), Some(t));
        }
    }

    #[test]
    fn palette_contains_mask_constants() {
        let v = Vocabulary::default();
        for c in [1i64 << 37, 1 << 36, 1 << 5, 0x1f, 0, -1, 2047, -2048, i64::MIN, 8, -8] {
            assert!(v.imm(c).is_some(), "{c:#x}");
        }
    }

    #[test]
    fn duplicate_config_entries_rejected() {
        let mut cfg = SubsetConfig::default();
        cfg.mnemonics.push(Mnemonic::Addi);
        assert!(matches!(Vocabulary::new(&cfg), Err(IsaError::DuplicateMnemonic(_))));
        let mut cfg = SubsetConfig::default();
        cfg.csrs.push(Csr::Mip);
        assert!(matches!(Vocabulary::new(&cfg), Err(IsaError::DuplicateCsr(_))));
    }

    #[test]
    fn tokenize_examples() {
        let v = Vocabulary::default();
        let t = tokenize(&v, "addi x1, x2, 8").unwrap();
        assert_eq!(t, vec![v.opcode(Mnemonic::Addi).unwrap(), v.reg(1), v.reg(2), v.imm(8).unwrap()]);
        let t = tokenize(&v, "csrs mstatus, t0").unwrap();
        assert_eq!(t, vec![v.opcode(Mnemonic::Csrs).unwrap(), v.csr(Csr::Mstatus).unwrap(), v.reg(5)]);
        assert!(matches!(tokenize(&v, "frobnicate x1"), Err(IsaError::UnknownMnemonic(_))));
        assert!(matches!(tokenize(&v, "addi x1, x2, 1234"), Err(IsaError::ImmediateNotInPalette(1234))));
    }

    #[test]
    fn detokenize_errors() {
        let v = Vocabulary::default();
        let addi = v.opcode(Mnemonic::Addi).unwrap();
        assert_eq!(detokenize(&v, &[addi, v.reg(1), v.reg(2), v.imm(8).unwrap()]).unwrap().render(), "addi x1, x2, 8");
        assert!(matches!(detokenize(&v, &[addi, v.reg(1)]), Err(IsaError::BadOperandCount { .. })));
        assert!(matches!(detokenize(&v, &[v.reg(3), addi]), Err(IsaError::ExpectedOpcode)));
        assert!(matches!(
            detokenize(&v, &[addi, v.reg(1), v.imm(8).unwrap(), v.reg(2)]),
            Err(IsaError::BadOperandKind { position: 1, .. })
        ));
    }

    #[test]
    fn block_token_form_round_trip() {
        let v = Vocabulary::default();
        let insts = crate::isa::parse_program("addi x1, x2, 8\nsd x1, 0(x2)\nmret\n").unwrap();
        let b = InstructionBlock::new(insts, 3);
        let toks = b.token_form(&v).unwrap();
        assert_eq!(toks.iter().filter(|t| t.kind == TokenKind::Eoi).count(), 3);
        assert_eq!(InstructionBlock::from_tokens(&v, &toks, 3).unwrap(), b);
    }
}
