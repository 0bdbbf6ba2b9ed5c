#![allow(dead_code)]

use std::path::PathBuf;

use lookahead_fuzz::minivm::{assemble, Instruction, Loc, Program, RawInstruction};
use proptest::prelude::*;

pub fn program_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("programs").join(name)
}

pub fn load(name: &str) -> Program {
    let text = std::fs::read_to_string(program_path(name)).expect("benchmark program");
    assemble(&text).expect("benchmark assembles")
}

pub fn bar() -> Program {
    load("bar.asm")
}

pub fn bar_variant() -> Program {
    load("bar_variant.asm")
}

pub fn label(p: &Program, name: &str) -> Loc {
    p.label(name).unwrap_or_else(|| panic!("missing label {name}"))
}

/// Encodes words as consecutive 8-byte big-endian INPUT reads.
pub fn words(ws: &[u64]) -> Vec<u8> {
    ws.iter().flat_map(|w| w.to_be_bytes()).collect()
}

/// Bar input: parameters w, x, y, z, a.
pub fn bar_input(w: u64, x: u64, y: u64, z: u64, a: u64) -> Vec<u8> {
    words(&[w, x, y, z, a])
}

fn simple_instruction() -> impl Strategy<Value = RawInstruction> {
    use lookahead_fuzz::minivm::{BinOp, Instruction as I, UnOp};
    let bin = prop_oneof![
        Just(BinOp::Add),
        Just(BinOp::Sub),
        Just(BinOp::Mul),
        Just(BinOp::Div),
        Just(BinOp::Mod),
        Just(BinOp::Lt),
        Just(BinOp::Gt),
        Just(BinOp::Eq),
        Just(BinOp::And),
        Just(BinOp::Or),
        Just(BinOp::Xor),
    ];
    prop_oneof![
        4 => (0u64..8).prop_map(I::Push),
        1 => Just(I::Pop),
        1 => (1u8..=3).prop_map(I::Dup),
        1 => (1u8..=2).prop_map(I::Swap),
        4 => bin.prop_map(I::Bin),
        1 => prop_oneof![Just(UnOp::IsZero), Just(UnOp::Not)].prop_map(I::Un),
        2 => Just(I::Input),
        1 => Just(I::MLoad),
        1 => Just(I::MStore),
        1 => Just(I::SLoad),
        1 => Just(I::SStore),
        1 => Just(I::Targetable),
        1 => Just(I::Fail),
        1 => Just(I::Stop),
    ]
    .prop_map(raw_of)
}

pub fn raw_of(i: Instruction) -> RawInstruction {
    RawInstruction { opcode: i.opcode(), immediate: i.immediate() }
}

/// A small program with a few labelled jump destinations and branches to them.
///
/// Layout: each slot is a plain instruction, a `JUMPDEST`, a `PUSH d; JUMP(I)`
/// pair whose target `d` is one of the jump destinations, or a bare `JUMP(I)`
/// taking its target from the stack.
pub fn small_program(max_len: usize) -> impl Strategy<Value = Program> {
    #[derive(Clone, Debug)]
    enum Slot {
        Plain(RawInstruction),
        Dest,
        Branch { cond: bool, dest: usize },
        /// Jump to whatever the stack holds.
        Dynamic { cond: bool },
    }
    let slot = prop_oneof![
        6 => simple_instruction().prop_map(Slot::Plain),
        2 => Just(Slot::Dest),
        2 => (any::<bool>(), 0usize..8).prop_map(|(cond, dest)| Slot::Branch { cond, dest }),
        1 => any::<bool>().prop_map(|cond| Slot::Dynamic { cond }),
    ];
    proptest::collection::vec(slot, 1..=max_len).prop_filter_map("valid program", move |slots| {
        let mut raw = Vec::new();
        let mut dests = Vec::new();
        let mut fixups = Vec::new();
        for s in &slots {
            match s {
                Slot::Plain(r) => raw.push(*r),
                Slot::Dest => {
                    dests.push(raw.len());
                    raw.push(raw_of(Instruction::JumpDest));
                }
                Slot::Branch { cond, dest } => {
                    fixups.push((raw.len(), *dest));
                    raw.push(RawInstruction::push(0));
                    raw.push(raw_of(if *cond { Instruction::JumpI } else { Instruction::Jump }));
                }
                Slot::Dynamic { cond } => {
                    raw.push(raw_of(if *cond { Instruction::JumpI } else { Instruction::Jump }));
                }
            }
        }
        if raw.len() > max_len {
            return None;
        }
        for (at, d) in fixups {
            // a branch with no destination in the program jumps out of it
            let target = if dests.is_empty() { raw.len() as u64 + 7 } else { dests[d % dests.len()] as u64 };
            raw[at] = RawInstruction::push(target);
        }
        Program::validate(&raw).ok()
    })
}
