//! A small deterministic stack machine.
//!
//! Words are 64 bits and all arithmetic wraps. Division and modulo by zero
//! yield zero, and abnormal termination (bad jump, stack misuse, exhausted
//! step budget) is reported through [`Status`] instead of trapping.

mod asm;
mod binary;
mod interp;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use asm::{assemble, AsmError};
pub use binary::{decode_program, encode_program, BinaryError, BINARY_MAGIC, BINARY_VERSION};
pub use interp::{
    eval_binary, eval_unary, execute, execute_into, path_id, ExecTrace, PathId, Status,
    DEFAULT_STEP_BUDGET,
};

/// Machine word.
pub type Word = u64;

/// Maximum operand stack depth, shared by the interpreter and the analysis.
pub const MAX_STACK: usize = 1024;

/// Index of an instruction inside a [`Program`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Loc(pub u32);

impl Loc {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn next(self) -> Loc {
        Loc(self.0 + 1)
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for Loc {
    fn from(i: usize) -> Self {
        Loc(i as u32)
    }
}

/// Binary operators, popping `a` (top) then `b` and pushing `a op b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Gt,
    Eq,
    And,
    Or,
    Xor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    IsZero,
    Not,
}

/// Opcode without its immediate, as found in an unvalidated instruction stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Opcode {
    Push,
    Pop,
    Dup(u8),
    Swap(u8),
    Bin(BinOp),
    Un(UnOp),
    Jump,
    JumpI,
    JumpDest,
    Input,
    MLoad,
    MStore,
    SLoad,
    SStore,
    ExtCall,
    Targetable,
    Stop,
    Fail,
}

/// Instruction as it comes out of a decoder, before validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawInstruction {
    pub opcode: Opcode,
    pub immediate: Option<Word>,
}

impl RawInstruction {
    pub fn new(opcode: Opcode) -> Self {
        RawInstruction { opcode, immediate: None }
    }

    pub fn push(value: Word) -> Self {
        RawInstruction { opcode: Opcode::Push, immediate: Some(value) }
    }
}

/// Validated instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    Push(Word),
    Pop,
    /// Duplicate the n-th stack item (1 = top).
    Dup(u8),
    /// Swap the top with the (n+1)-th item.
    Swap(u8),
    Bin(BinOp),
    Un(UnOp),
    Jump,
    JumpI,
    JumpDest,
    Input,
    MLoad,
    MStore,
    SLoad,
    SStore,
    ExtCall,
    Targetable,
    Stop,
    Fail,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match *self {
            Instruction::Push(_) => Opcode::Push,
            Instruction::Pop => Opcode::Pop,
            Instruction::Dup(n) => Opcode::Dup(n),
            Instruction::Swap(n) => Opcode::Swap(n),
            Instruction::Bin(op) => Opcode::Bin(op),
            Instruction::Un(op) => Opcode::Un(op),
            Instruction::Jump => Opcode::Jump,
            Instruction::JumpI => Opcode::JumpI,
            Instruction::JumpDest => Opcode::JumpDest,
            Instruction::Input => Opcode::Input,
            Instruction::MLoad => Opcode::MLoad,
            Instruction::MStore => Opcode::MStore,
            Instruction::SLoad => Opcode::SLoad,
            Instruction::SStore => Opcode::SStore,
            Instruction::ExtCall => Opcode::ExtCall,
            Instruction::Targetable => Opcode::Targetable,
            Instruction::Stop => Opcode::Stop,
            Instruction::Fail => Opcode::Fail,
        }
    }

    pub fn immediate(&self) -> Option<Word> {
        match *self {
            Instruction::Push(v) => Some(v),
            _ => None,
        }
    }

    /// True for instructions after which the following location starts a new block.
    pub fn ends_block(&self) -> bool {
        matches!(self, Instruction::Jump | Instruction::JumpI | Instruction::ExtCall)
    }

    pub fn is_halt(&self) -> bool {
        matches!(self, Instruction::Stop | Instruction::Fail)
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Push(v) => write!(f, "PUSH {v}"),
            Instruction::Dup(n) => write!(f, "DUP{n}"),
            Instruction::Swap(n) => write!(f, "SWAP{n}"),
            other => f.write_str(mnemonic(other.opcode())),
        }
    }
}

pub(crate) fn mnemonic(op: Opcode) -> &'static str {
    match op {
        Opcode::Push => "PUSH",
        Opcode::Pop => "POP",
        Opcode::Dup(_) => "DUP",
        Opcode::Swap(_) => "SWAP",
        Opcode::Bin(BinOp::Add) => "ADD",
        Opcode::Bin(BinOp::Sub) => "SUB",
        Opcode::Bin(BinOp::Mul) => "MUL",
        Opcode::Bin(BinOp::Div) => "DIV",
        Opcode::Bin(BinOp::Mod) => "MOD",
        Opcode::Bin(BinOp::Lt) => "LT",
        Opcode::Bin(BinOp::Gt) => "GT",
        Opcode::Bin(BinOp::Eq) => "EQ",
        Opcode::Bin(BinOp::And) => "AND",
        Opcode::Bin(BinOp::Or) => "OR",
        Opcode::Bin(BinOp::Xor) => "XOR",
        Opcode::Un(UnOp::IsZero) => "ISZERO",
        Opcode::Un(UnOp::Not) => "NOT",
        Opcode::Jump => "JUMP",
        Opcode::JumpI => "JUMPI",
        Opcode::JumpDest => "JUMPDEST",
        Opcode::Input => "INPUT",
        Opcode::MLoad => "MLOAD",
        Opcode::MStore => "MSTORE",
        Opcode::SLoad => "SLOAD",
        Opcode::SStore => "SSTORE",
        Opcode::ExtCall => "EXTCALL",
        Opcode::Targetable => "TARGETABLE",
        Opcode::Stop => "STOP",
        Opcode::Fail => "FAIL",
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("program is empty")]
    Empty,
    #[error("instruction {index}: PUSH requires an immediate")]
    MissingImmediate { index: usize },
    #[error("instruction {index}: {opcode} takes no immediate")]
    UnexpectedImmediate { index: usize, opcode: &'static str },
    #[error("instruction {index}: {opcode} operand {n} out of range 1..=16")]
    BadOperand { index: usize, opcode: &'static str, n: u8 },
    #[error("program too large ({0} instructions)")]
    TooLarge(usize),
}

/// Validated program with its static jump-target and block-leader sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    instructions: Vec<Instruction>,
    jumpdests: BTreeSet<Loc>,
    block_leaders: BTreeSet<Loc>,
    is_jumpdest: Vec<bool>,
    is_leader: Vec<bool>,
    entry: Loc,
    labels: BTreeMap<String, Loc>,
}

impl Program {
    /// Validates a raw instruction stream.
    pub fn validate(raw: &[RawInstruction]) -> Result<Program, ValidationError> {
        if raw.is_empty() {
            return Err(ValidationError::Empty);
        }
        if raw.len() > u32::MAX as usize {
            return Err(ValidationError::TooLarge(raw.len()));
        }
        let mut instructions = Vec::with_capacity(raw.len());
        for (index, ri) in raw.iter().enumerate() {
            let insn = match (ri.opcode, ri.immediate) {
                (Opcode::Push, Some(v)) => Instruction::Push(v),
                (Opcode::Push, None) => return Err(ValidationError::MissingImmediate { index }),
                (op, Some(_)) => {
                    return Err(ValidationError::UnexpectedImmediate { index, opcode: mnemonic(op) })
                }
                (Opcode::Dup(n), None) | (Opcode::Swap(n), None) if !(1..=16).contains(&n) => {
                    return Err(ValidationError::BadOperand { index, opcode: mnemonic(ri.opcode), n })
                }
                (Opcode::Pop, None) => Instruction::Pop,
                (Opcode::Dup(n), None) => Instruction::Dup(n),
                (Opcode::Swap(n), None) => Instruction::Swap(n),
                (Opcode::Bin(op), None) => Instruction::Bin(op),
                (Opcode::Un(op), None) => Instruction::Un(op),
                (Opcode::Jump, None) => Instruction::Jump,
                (Opcode::JumpI, None) => Instruction::JumpI,
                (Opcode::JumpDest, None) => Instruction::JumpDest,
                (Opcode::Input, None) => Instruction::Input,
                (Opcode::MLoad, None) => Instruction::MLoad,
                (Opcode::MStore, None) => Instruction::MStore,
                (Opcode::SLoad, None) => Instruction::SLoad,
                (Opcode::SStore, None) => Instruction::SStore,
                (Opcode::ExtCall, None) => Instruction::ExtCall,
                (Opcode::Targetable, None) => Instruction::Targetable,
                (Opcode::Stop, None) => Instruction::Stop,
                (Opcode::Fail, None) => Instruction::Fail,
            };
            instructions.push(insn);
        }
        Ok(Program::from_instructions(instructions))
    }

    fn from_instructions(instructions: Vec<Instruction>) -> Program {
        let len = instructions.len();
        let entry = Loc(0);
        let mut is_jumpdest = vec![false; len];
        let mut is_leader = vec![false; len];
        is_leader[entry.index()] = true;
        for (i, insn) in instructions.iter().enumerate() {
            if *insn == Instruction::JumpDest {
                is_jumpdest[i] = true;
                is_leader[i] = true;
            }
            if insn.ends_block() && i + 1 < len {
                is_leader[i + 1] = true;
            }
        }
        let collect = |flags: &[bool]| {
            flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| Loc::from(i)).collect()
        };
        Program {
            jumpdests: collect(&is_jumpdest),
            block_leaders: collect(&is_leader),
            instructions,
            is_jumpdest,
            is_leader,
            entry,
            labels: BTreeMap::new(),
        }
    }

    pub(crate) fn with_labels(mut self, labels: BTreeMap<String, Loc>) -> Program {
        self.labels = labels;
        self
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn get(&self, loc: Loc) -> Option<&Instruction> {
        self.instructions.get(loc.index())
    }

    pub fn entry(&self) -> Loc {
        self.entry
    }

    pub fn jumpdests(&self) -> &BTreeSet<Loc> {
        &self.jumpdests
    }

    pub fn block_leaders(&self) -> &BTreeSet<Loc> {
        &self.block_leaders
    }

    pub fn is_jumpdest(&self, loc: Loc) -> bool {
        self.is_jumpdest.get(loc.index()).copied().unwrap_or(false)
    }

    pub fn is_leader(&self, loc: Loc) -> bool {
        self.is_leader.get(loc.index()).copied().unwrap_or(false)
    }

    pub fn contains(&self, loc: Loc) -> bool {
        loc.index() < self.instructions.len()
    }

    /// Label symbol table (empty for programs not built by the assembler).
    pub fn labels(&self) -> &BTreeMap<String, Loc> {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Option<Loc> {
        self.labels.get(name).copied()
    }

    pub fn has_extcall(&self) -> bool {
        self.instructions.contains(&Instruction::ExtCall)
    }
}
