//! Binary program format.
//!
//! Layout: the 4-byte magic `MVM\0`, one version byte, a big-endian `u32`
//! instruction count, then one record per instruction: an opcode byte,
//! followed by an 8-byte big-endian immediate for `PUSH` only.

use thiserror::Error;

use super::{BinOp, Instruction, Opcode, Program, RawInstruction, UnOp, ValidationError};

pub const BINARY_MAGIC: [u8; 4] = *b"MVM\0";
pub const BINARY_VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BinaryError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("truncated program at byte {0}")]
    Truncated(usize),
    #[error("unknown opcode 0x{byte:02x} at byte {offset}")]
    UnknownOpcode { byte: u8, offset: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

fn opcode_byte(op: Opcode) -> u8 {
    match op {
        Opcode::Stop => 0x00,
        Opcode::Bin(BinOp::Add) => 0x01,
        Opcode::Bin(BinOp::Mul) => 0x02,
        Opcode::Bin(BinOp::Sub) => 0x03,
        Opcode::Bin(BinOp::Div) => 0x04,
        Opcode::Bin(BinOp::Mod) => 0x06,
        Opcode::Bin(BinOp::Lt) => 0x10,
        Opcode::Bin(BinOp::Gt) => 0x11,
        Opcode::Bin(BinOp::Eq) => 0x14,
        Opcode::Un(UnOp::IsZero) => 0x15,
        Opcode::Bin(BinOp::And) => 0x16,
        Opcode::Bin(BinOp::Or) => 0x17,
        Opcode::Bin(BinOp::Xor) => 0x18,
        Opcode::Un(UnOp::Not) => 0x19,
        Opcode::Input => 0x20,
        Opcode::ExtCall => 0x21,
        Opcode::Targetable => 0x22,
        Opcode::Pop => 0x50,
        Opcode::MLoad => 0x51,
        Opcode::MStore => 0x52,
        Opcode::SLoad => 0x54,
        Opcode::SStore => 0x55,
        Opcode::Jump => 0x56,
        Opcode::JumpI => 0x57,
        Opcode::JumpDest => 0x5b,
        Opcode::Push => 0x60,
        Opcode::Dup(n) => 0x7f + n,
        Opcode::Swap(n) => 0x8f + n,
        Opcode::Fail => 0xfe,
    }
}

fn byte_opcode(byte: u8) -> Option<Opcode> {
    Some(match byte {
        0x00 => Opcode::Stop,
        0x01 => Opcode::Bin(BinOp::Add),
        0x02 => Opcode::Bin(BinOp::Mul),
        0x03 => Opcode::Bin(BinOp::Sub),
        0x04 => Opcode::Bin(BinOp::Div),
        0x06 => Opcode::Bin(BinOp::Mod),
        0x10 => Opcode::Bin(BinOp::Lt),
        0x11 => Opcode::Bin(BinOp::Gt),
        0x14 => Opcode::Bin(BinOp::Eq),
        0x15 => Opcode::Un(UnOp::IsZero),
        0x16 => Opcode::Bin(BinOp::And),
        0x17 => Opcode::Bin(BinOp::Or),
        0x18 => Opcode::Bin(BinOp::Xor),
        0x19 => Opcode::Un(UnOp::Not),
        0x20 => Opcode::Input,
        0x21 => Opcode::ExtCall,
        0x22 => Opcode::Targetable,
        0x50 => Opcode::Pop,
        0x51 => Opcode::MLoad,
        0x52 => Opcode::MStore,
        0x54 => Opcode::SLoad,
        0x55 => Opcode::SStore,
        0x56 => Opcode::Jump,
        0x57 => Opcode::JumpI,
        0x5b => Opcode::JumpDest,
        0x60 => Opcode::Push,
        0x80..=0x8f => Opcode::Dup(byte - 0x7f),
        0x90..=0x9f => Opcode::Swap(byte - 0x8f),
        0xfe => Opcode::Fail,
        _ => return None,
    })
}

pub fn encode_program(program: &Program) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + program.len() * 2);
    out.extend_from_slice(&BINARY_MAGIC);
    out.push(BINARY_VERSION);
    out.extend_from_slice(&(program.len() as u32).to_be_bytes());
    for insn in program.instructions() {
        out.push(opcode_byte(insn.opcode()));
        if let Instruction::Push(v) = insn {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

pub fn decode_program(bytes: &[u8]) -> Result<Program, BinaryError> {
    if bytes.len() < 4 || bytes[..4] != BINARY_MAGIC {
        return Err(BinaryError::BadMagic);
    }
    let version = *bytes.get(4).ok_or(BinaryError::Truncated(4))?;
    if version != BINARY_VERSION {
        return Err(BinaryError::Version(version));
    }
    let count_bytes: [u8; 4] = bytes.get(5..9).ok_or(BinaryError::Truncated(5))?.try_into().unwrap();
    let count = u32::from_be_bytes(count_bytes) as usize;
    let mut raw = Vec::with_capacity(count.min(1 << 20));
    let mut pos = 9;
    for _ in 0..count {
        let byte = *bytes.get(pos).ok_or(BinaryError::Truncated(pos))?;
        let opcode = byte_opcode(byte).ok_or(BinaryError::UnknownOpcode { byte, offset: pos })?;
        pos += 1;
        let immediate = if opcode == Opcode::Push {
            let imm: [u8; 8] =
                bytes.get(pos..pos + 8).ok_or(BinaryError::Truncated(pos))?.try_into().unwrap();
            pos += 8;
            Some(u64::from_be_bytes(imm))
        } else {
            None
        };
        raw.push(RawInstruction { opcode, immediate });
    }
    if pos != bytes.len() {
        return Err(BinaryError::Trailing(bytes.len() - pos));
    }
    Ok(Program::validate(&raw)?)
}
