// SPDX-License-Identifier: Apache-2.0

//! Instruction subset, token vocabulary, assembly syntax and binary encoding.

mod csr;
mod encode;
mod inst;
mod vocab;

pub use csr::Csr;
pub use encode::{decode, encode, encode_word, li_sequence, lower, random_instruction, Decoded};
pub use inst::{
    parse_imm, parse_program, parse_reg, render_imm, ImmField, Instruction, Mnemonic, Operand, OperandKind, Syntax,
};
pub use vocab::{
    build_palette, detokenize, detokenize_block, split_instructions, tokenize, tokenize_instruction, InstructionBlock,
    SubsetConfig, Token, TokenKind, Vocabulary,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("unknown CSR `{0}`")]
    UnknownCsr(String),
    #[error("malformed immediate `{0}`")]
    BadImmediate(String),
    #[error("immediate {0:#x} is not in the palette")]
    ImmediateNotInPalette(i64),
    #[error("{mnemonic}: expected {expected} operands, found {found}")]
    BadOperandCount { mnemonic: String, expected: usize, found: usize },
    #[error("{mnemonic}: operand {position} has the wrong kind")]
    BadOperandKind { mnemonic: String, position: usize },
    #[error("token sequence must start with an opcode")]
    ExpectedOpcode,
    #[error("token id {0} is outside the vocabulary")]
    UnknownTokenId(u16),
    #[error("empty instruction")]
    Empty,
    #[error("{mnemonic}: immediate {value} out of field range")]
    ImmediateOutOfRange { mnemonic: String, value: i64 },
    #[error("li must be expanded before single-word encoding")]
    NeedsExpansion,
    #[error("illegal instruction word {0:#010x}")]
    IllegalInstruction(u32),
    #[error("duplicate mnemonic `{0}` in subset config")]
    DuplicateMnemonic(String),
    #[error("duplicate CSR `{0}` in subset config")]
    DuplicateCsr(String),
}
