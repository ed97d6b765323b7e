// SPDX-License-Identifier: Apache-2.0

use grmfuzz::isa::{self, Instruction, InstructionBlock, Mnemonic, Vocabulary};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixtures() -> Vec<(String, u32)> {
    include_str!("fixtures/reference_encodings.txt")
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (asm, word) = l.split_once(';').unwrap();
            let word = u32::from_str_radix(word.trim().trim_start_matches("0x"), 16).unwrap();
            (asm.trim().to_string(), word)
        })
        .collect()
}

#[test]
fn matches_reference_assembler() {
    let fx = fixtures();
    assert!(fx.len() >= 20);
    for (asm, word) in fx {
        let inst: Instruction = asm.parse().unwrap();
        assert_eq!(isa::encode(&inst).unwrap(), vec![word], "{asm}");
        assert_eq!(isa::decode(word).unwrap().to_instruction(), inst, "{asm}");
    }
}

#[test]
fn every_mnemonic_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &m in Mnemonic::ALL {
        for _ in 0..200 {
            let i = isa::random_instruction(m, &mut rng);
            let words = isa::encode(&i).unwrap();
            let back: Vec<Instruction> = words.iter().map(|&w| isa::decode(w).unwrap().to_instruction()).collect();
            assert_eq!(back, isa::lower(&i), "{i}");
            let reparsed: Instruction = i.render().parse().unwrap();
            assert_eq!(reparsed, i);
        }
    }
}

#[test]
fn vocabulary_hash_is_stable() {
    let a = Vocabulary::default();
    let b = Vocabulary::default();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}

proptest! {
    #[test]
    fn palette_constants_round_trip(idx in 0usize..512) {
        let v = Vocabulary::default();
        let c = v.palette()[idx];
        let t = v.imm(c).unwrap();
        prop_assert_eq!(v.imm_value(t.id), Some(c));
        let li: Instruction = format!("li x7, {}", isa::render_imm(c)).parse().unwrap();
        prop_assert_eq!(li.imm(), Some(c));
    }

    #[test]
    fn token_round_trip(seed in any::<u64>()) {
        let v = Vocabulary::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pal = v.palette();
        let mut insts = Vec::new();
        for &m in Mnemonic::ALL {
            let mut i = isa::random_instruction(m, &mut rng);
            // Keep only palette-representable immediates.
            for o in i.operands.iter_mut() {
                if let isa::Operand::Imm(x) = o {
                    let field = m.imm_field().unwrap();
                    let fit: Vec<i64> = pal.iter().copied().filter(|c| field.accepts(*c)).collect();
                    *x = fit[(seed as usize) % fit.len()];
                }
            }
            let toks = isa::tokenize(&v, &i.render()).unwrap();
            prop_assert_eq!(isa::detokenize(&v, &toks).unwrap(), i.clone());
            insts.push(i);
        }
        let block = InstructionBlock::new(insts, 0);
        let toks = block.token_form(&v).unwrap();
        prop_assert_eq!(InstructionBlock::from_tokens(&v, &toks, 0).unwrap(), block);
    }
}
