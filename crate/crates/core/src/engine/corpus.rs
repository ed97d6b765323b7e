// SPDX-License-Identifier: Apache-2.0

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::isa::{encode, tokenize_instruction, Instruction, Mnemonic, Operand, OperandKind, Vocabulary};

/// Palette immediates that encode for `m`.
fn legal_immediates(vocab: &Vocabulary, m: Mnemonic) -> Vec<i64> {
    let ops = |v: i64| {
        m.signature()
            .iter()
            .map(|k| match k {
                OperandKind::Reg => Operand::Reg(1),
                OperandKind::Csr => Operand::Csr(vocab.csrs().next().expect("vocabulary has CSRs")),
                OperandKind::Imm => Operand::Imm(v),
            })
            .collect()
    };
    vocab
        .palette()
        .iter()
        .copied()
        .filter(|&v| encode(&Instruction { mnemonic: m, operands: ops(v) }).is_ok())
        .collect()
}

/// Syntactically valid random instructions over the vocabulary, grouped
/// into documents of `per_doc` instructions with `<eoi>` separators.
pub fn synthetic_corpus(vocab: &Vocabulary, documents: usize, per_doc: usize, seed: u64) -> Vec<Vec<u16>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mnemonics: Vec<Mnemonic> = vocab.mnemonics().collect();
    let csrs: Vec<_> = vocab.csrs().collect();
    let imms: Vec<Vec<i64>> = mnemonics.iter().map(|&m| legal_immediates(vocab, m)).collect();
    let eoi = vocab.eoi().id;
    (0..documents)
        .map(|_| {
            let mut doc = Vec::new();
            for _ in 0..per_doc {
                let k = rng.gen_range(0..mnemonics.len());
                let m = mnemonics[k];
                let operands = m
                    .signature()
                    .iter()
                    .map(|kind| match kind {
                        OperandKind::Reg => Operand::Reg(rng.gen_range(0..32)),
                        OperandKind::Csr => Operand::Csr(*csrs.choose(&mut rng).expect("CSRs")),
                        OperandKind::Imm => Operand::Imm(*imms[k].choose(&mut rng).unwrap_or(&0)),
                    })
                    .collect();
                let inst = Instruction { mnemonic: m, operands };
                let toks = tokenize_instruction(vocab, &inst).expect("palette immediates tokenize");
                doc.extend(toks.iter().map(|t| t.id));
                doc.push(eoi);
            }
            doc
        })
        .collect()
}
