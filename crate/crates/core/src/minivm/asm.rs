//! Line-oriented assembly.
//!
//! ```text
//! ; comment
//! start:              ; a label on its own line
//!     PUSH @done      ; label reference
//!     PUSH 0x2a
//!     DUP1            ; or `DUP 1`
//! done: JUMPDEST      ; label and instruction on one line
//! ```
//!
//! Mnemonics are case-insensitive. Numeric immediates are decimal or `0x` hex.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{BinOp, Loc, Opcode, Program, RawInstruction, UnOp, ValidationError, Word};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: {message}")]
    BadOperand { line: usize, message: String },
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: invalid label name `{label}`")]
    BadLabel { line: usize, label: String },
    #[error("no instructions")]
    Empty,
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

enum Operand {
    None,
    Value(Word),
    Label(String),
}

struct Pending {
    line: usize,
    opcode: Opcode,
    operand: Operand,
}

fn valid_label(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_number(text: &str) -> Option<Word> {
    let text = text.replace('_', "");
    if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Word::from_str_radix(hex, 16).ok()
    } else {
        text.parse().ok()
    }
}

fn parse_opcode(mnemonic: &str) -> Option<(Opcode, Option<u8>)> {
    let upper = mnemonic.to_ascii_uppercase();
    let op = match upper.as_str() {
        "PUSH" => Opcode::Push,
        "POP" => Opcode::Pop,
        "ADD" => Opcode::Bin(BinOp::Add),
        "SUB" => Opcode::Bin(BinOp::Sub),
        "MUL" => Opcode::Bin(BinOp::Mul),
        "DIV" => Opcode::Bin(BinOp::Div),
        "MOD" => Opcode::Bin(BinOp::Mod),
        "LT" => Opcode::Bin(BinOp::Lt),
        "GT" => Opcode::Bin(BinOp::Gt),
        "EQ" => Opcode::Bin(BinOp::Eq),
        "AND" => Opcode::Bin(BinOp::And),
        "OR" => Opcode::Bin(BinOp::Or),
        "XOR" => Opcode::Bin(BinOp::Xor),
        "ISZERO" => Opcode::Un(UnOp::IsZero),
        "NOT" => Opcode::Un(UnOp::Not),
        "JUMP" => Opcode::Jump,
        "JUMPI" => Opcode::JumpI,
        "JUMPDEST" => Opcode::JumpDest,
        "INPUT" => Opcode::Input,
        "MLOAD" => Opcode::MLoad,
        "MSTORE" => Opcode::MStore,
        "SLOAD" => Opcode::SLoad,
        "SSTORE" => Opcode::SStore,
        "EXTCALL" => Opcode::ExtCall,
        "TARGETABLE" => Opcode::Targetable,
        "STOP" => Opcode::Stop,
        "FAIL" => Opcode::Fail,
        _ => {
            // DUPn / SWAPn, or bare DUP / SWAP with a separate operand
            for (prefix, make) in [("DUP", Opcode::Dup as fn(u8) -> Opcode), ("SWAP", Opcode::Swap)] {
                if let Some(rest) = upper.strip_prefix(prefix) {
                    if rest.is_empty() {
                        return Some((make(0), None));
                    }
                    return rest.parse::<u8>().ok().map(|n| (make(n), Some(n)));
                }
            }
            return None;
        }
    };
    Some((op, None))
}

/// Assembles `source` into a validated program with its label table.
pub fn assemble(source: &str) -> Result<Program, AsmError> {
    let mut labels: BTreeMap<String, Loc> = BTreeMap::new();
    let mut pending: Vec<Pending> = Vec::new();

    for (idx, raw_line) in source.lines().enumerate() {
        let line = idx + 1;
        let mut text = raw_line.split(';').next().unwrap_or("").trim();
        while let Some(colon) = text.find(':') {
            let (name, rest) = text.split_at(colon);
            let name = name.trim();
            if !valid_label(name) {
                return Err(AsmError::BadLabel { line, label: name.to_string() });
            }
            if labels.insert(name.to_string(), Loc::from(pending.len())).is_some() {
                return Err(AsmError::DuplicateLabel { line, label: name.to_string() });
            }
            text = rest[1..].trim();
        }
        if text.is_empty() {
            continue;
        }
        let mut parts = text.split_whitespace();
        let mnemonic = parts.next().unwrap_or_default();
        let arg = parts.next();
        if let Some(extra) = parts.next() {
            return Err(AsmError::BadOperand { line, message: format!("unexpected `{extra}`") });
        }
        let (mut opcode, inline_n) = parse_opcode(mnemonic)
            .ok_or_else(|| AsmError::UnknownMnemonic { line, mnemonic: mnemonic.to_string() })?;
        let operand = match opcode {
            Opcode::Push => match arg {
                Some(a) if a.starts_with('@') => Operand::Label(a[1..].to_string()),
                Some(a) => Operand::Value(parse_number(a).ok_or_else(|| AsmError::BadOperand {
                    line,
                    message: format!("bad immediate `{a}`"),
                })?),
                None => {
                    return Err(AsmError::BadOperand { line, message: "PUSH needs an operand".into() })
                }
            },
            Opcode::Dup(_) | Opcode::Swap(_) => {
                let n = match (inline_n, arg) {
                    (Some(n), None) => n,
                    (None, Some(a)) => a.parse::<u8>().map_err(|_| AsmError::BadOperand {
                        line,
                        message: format!("bad stack index `{a}`"),
                    })?,
                    _ => {
                        return Err(AsmError::BadOperand {
                            line,
                            message: format!("{mnemonic} needs exactly one stack index"),
                        })
                    }
                };
                if !(1..=16).contains(&n) {
                    return Err(AsmError::BadOperand {
                        line,
                        message: format!("stack index {n} out of range 1..=16"),
                    });
                }
                opcode = match opcode {
                    Opcode::Dup(_) => Opcode::Dup(n),
                    _ => Opcode::Swap(n),
                };
                Operand::None
            }
            _ => {
                if let Some(a) = arg {
                    return Err(AsmError::BadOperand { line, message: format!("unexpected `{a}`") });
                }
                Operand::None
            }
        };
        pending.push(Pending { line, opcode, operand });
    }

    if pending.is_empty() {
        return Err(AsmError::Empty);
    }

    let raw = pending
        .into_iter()
        .map(|p| {
            let immediate = match p.operand {
                Operand::None => None,
                Operand::Value(v) => Some(v),
                Operand::Label(name) => match labels.get(&name) {
                    Some(loc) => Some(loc.0 as Word),
                    None => return Err(AsmError::UndefinedLabel { line: p.line, label: name }),
                },
            };
            Ok(RawInstruction { opcode: p.opcode, immediate })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Program::validate(&raw)?.with_labels(labels))
}
