use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BinOp, Instruction, Loc, Program, UnOp, Word, MAX_STACK};

pub const DEFAULT_STEP_BUDGET: u64 = 65_536;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Stopped,
    Failed,
    OutOfSteps,
    InvalidJump,
    StackError,
}

impl Status {
    fn tag(self) -> u8 {
        match self {
            Status::Stopped => 0,
            Status::Failed => 1,
            Status::OutOfSteps => 2,
            Status::InvalidJump => 3,
            Status::StackError => 4,
        }
    }
}

/// Path identifier: 64-bit truncation of SHA-256 over the branch edges and final status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathId(pub u64);

impl std::fmt::Display for PathId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// The path one execution took.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecTrace {
    pub locations: Vec<Loc>,
    pub branch_edges: Vec<(Loc, Loc)>,
    pub status: Status,
    pub steps_used: u64,
}

impl Default for ExecTrace {
    fn default() -> Self {
        ExecTrace {
            locations: Vec::new(),
            branch_edges: Vec::new(),
            status: Status::Stopped,
            steps_used: 0,
        }
    }
}

impl ExecTrace {
    pub fn last(&self) -> Option<Loc> {
        self.locations.last().copied()
    }

    /// True if the trace executes any location flagged in `is_target`.
    pub fn visits(&self, is_target: &[bool]) -> bool {
        self.locations.iter().any(|l| is_target.get(l.index()).copied().unwrap_or(false))
    }
}

pub fn eval_binary(op: BinOp, a: Word, b: Word) -> Word {
    match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div => a.checked_div(b).unwrap_or(0),
        BinOp::Mod => a.checked_rem(b).unwrap_or(0),
        BinOp::Lt => (a < b) as Word,
        BinOp::Gt => (a > b) as Word,
        BinOp::Eq => (a == b) as Word,
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
    }
}

pub fn eval_unary(op: UnOp, a: Word) -> Word {
    match op {
        UnOp::IsZero => (a == 0) as Word,
        UnOp::Not => !a,
    }
}

/// Word-addressed memory. Linear scan while small, hashed once it grows.
#[derive(Default)]
struct WordMap {
    small: Vec<(Word, Word)>,
    large: Option<HashMap<Word, Word>>,
}

impl WordMap {
    const SMALL_LIMIT: usize = 32;

    fn get(&self, addr: Word) -> Word {
        match &self.large {
            Some(map) => map.get(&addr).copied().unwrap_or(0),
            None => self.small.iter().find(|(a, _)| *a == addr).map_or(0, |(_, v)| *v),
        }
    }

    fn set(&mut self, addr: Word, value: Word) {
        if let Some(map) = &mut self.large {
            map.insert(addr, value);
            return;
        }
        if let Some(slot) = self.small.iter_mut().find(|(a, _)| *a == addr) {
            slot.1 = value;
        } else if self.small.len() < Self::SMALL_LIMIT {
            self.small.push((addr, value));
        } else {
            let mut map: HashMap<Word, Word> = self.small.drain(..).collect();
            map.insert(addr, value);
            self.large = Some(map);
        }
    }
}

struct InputStream<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl InputStream<'_> {
    /// Next 8 bytes big-endian; missing bytes read as zero.
    fn next_word(&mut self) -> Word {
        let mut buf = [0u8; 8];
        let start = self.pos.min(self.bytes.len());
        let end = (self.pos + 8).min(self.bytes.len());
        buf[..end - start].copy_from_slice(&self.bytes[start..end]);
        self.pos += 8;
        Word::from_be_bytes(buf)
    }
}

/// Runs `program` on `input` for at most `step_budget` instructions.
pub fn execute(program: &Program, input: &[u8], step_budget: u64) -> ExecTrace {
    let mut trace = ExecTrace::default();
    execute_into(program, input, step_budget, &mut trace);
    trace
}

/// Like [`execute`] but reuses the buffers of `trace`.
pub fn execute_into(program: &Program, input: &[u8], step_budget: u64, trace: &mut ExecTrace) {
    trace.locations.clear();
    trace.branch_edges.clear();
    let mut machine = Machine {
        stack: Vec::with_capacity(64),
        memory: WordMap::default(),
        storage: WordMap::default(),
        input: InputStream { bytes: input, pos: 0 },
    };
    trace.status = machine.run(program, step_budget, trace);
    trace.steps_used = trace.locations.len() as u64;
}

struct Machine<'a> {
    stack: Vec<Word>,
    memory: WordMap,
    storage: WordMap,
    input: InputStream<'a>,
}

enum Flow {
    Next,
    Goto(Loc),
    Halt(Status),
}

impl Machine<'_> {
    fn run(&mut self, program: &Program, step_budget: u64, trace: &mut ExecTrace) -> Status {
        let code = program.instructions();
        let mut pc = program.entry();
        loop {
            if pc.index() >= code.len() {
                return Status::Stopped;
            }
            if trace.locations.len() as u64 >= step_budget {
                return Status::OutOfSteps;
            }
            trace.locations.push(pc);
            match self.step(program, code[pc.index()], pc, trace) {
                Ok(Flow::Next) => pc = pc.next(),
                Ok(Flow::Goto(to)) => pc = to,
                Ok(Flow::Halt(status)) => return status,
                Err(status) => return status,
            }
        }
    }

    #[inline]
    fn pop(&mut self) -> Result<Word, Status> {
        self.stack.pop().ok_or(Status::StackError)
    }

    #[inline]
    fn push(&mut self, v: Word) -> Result<(), Status> {
        if self.stack.len() >= MAX_STACK {
            return Err(Status::StackError);
        }
        self.stack.push(v);
        Ok(())
    }

    fn jump_target(program: &Program, target: Word) -> Result<Loc, Status> {
        if target > u32::MAX as Word {
            return Err(Status::InvalidJump);
        }
        let loc = Loc(target as u32);
        if program.is_jumpdest(loc) {
            Ok(loc)
        } else {
            Err(Status::InvalidJump)
        }
    }

    #[inline]
    fn step(
        &mut self,
        program: &Program,
        insn: Instruction,
        pc: Loc,
        trace: &mut ExecTrace,
    ) -> Result<Flow, Status> {
        match insn {
            Instruction::Push(v) => self.push(v)?,
            Instruction::Pop => {
                self.pop()?;
            }
            Instruction::Dup(n) => {
                let n = n as usize;
                if self.stack.len() < n {
                    return Err(Status::StackError);
                }
                let v = self.stack[self.stack.len() - n];
                self.push(v)?;
            }
            Instruction::Swap(n) => {
                let n = n as usize;
                let len = self.stack.len();
                if len < n + 1 {
                    return Err(Status::StackError);
                }
                self.stack.swap(len - 1, len - 1 - n);
            }
            Instruction::Bin(op) => {
                let a = self.pop()?;
                let b = self.pop()?;
                self.push(eval_binary(op, a, b))?;
            }
            Instruction::Un(op) => {
                let a = self.pop()?;
                self.push(eval_unary(op, a))?;
            }
            Instruction::Jump => {
                let target = Self::jump_target(program, self.pop()?)?;
                trace.branch_edges.push((pc, target));
                return Ok(Flow::Goto(target));
            }
            Instruction::JumpI => {
                let target = self.pop()?;
                let cond = self.pop()?;
                if cond != 0 {
                    let target = Self::jump_target(program, target)?;
                    trace.branch_edges.push((pc, target));
                    return Ok(Flow::Goto(target));
                }
                trace.branch_edges.push((pc, pc.next()));
            }
            Instruction::JumpDest | Instruction::Targetable => {}
            Instruction::Input => {
                let v = self.input.next_word();
                self.push(v)?;
            }
            Instruction::MLoad => {
                let addr = self.pop()?;
                let v = self.memory.get(addr);
                self.push(v)?;
            }
            Instruction::MStore => {
                let addr = self.pop()?;
                let v = self.pop()?;
                self.memory.set(addr, v);
            }
            Instruction::SLoad => {
                let addr = self.pop()?;
                let v = self.storage.get(addr);
                self.push(v)?;
            }
            Instruction::SStore => {
                let addr = self.pop()?;
                let v = self.pop()?;
                self.storage.set(addr, v);
            }
            Instruction::ExtCall => {
                // the callee is outside the program: its result is an environment read
                self.pop()?;
                let v = self.input.next_word();
                self.push(v)?;
            }
            Instruction::Stop => return Ok(Flow::Halt(Status::Stopped)),
            Instruction::Fail => return Ok(Flow::Halt(Status::Failed)),
        }
        Ok(Flow::Next)
    }
}

/// Hashes the branch edges and the final status of `trace`.
pub fn path_id(trace: &ExecTrace) -> PathId {
    let mut hasher = Sha256::new();
    let mut buf = Vec::with_capacity(trace.branch_edges.len() * 8 + 1);
    for (from, to) in &trace.branch_edges {
        buf.extend_from_slice(&from.0.to_be_bytes());
        buf.extend_from_slice(&to.0.to_be_bytes());
    }
    buf.push(trace.status.tag());
    hasher.update(&buf);
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    PathId(u64::from_be_bytes(head))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minivm::assemble;

    #[test]
    fn infinite_loop_runs_out_of_steps() {
        let p = assemble("top: JUMPDEST\nPUSH @top\nJUMP\n").unwrap();
        let t = execute(&p, &[], 100);
        assert_eq!(t.status, Status::OutOfSteps);
        assert_eq!(t.steps_used, 100);
    }

    #[test]
    fn input_words_are_big_endian_and_zero_padded() {
        let p = assemble("INPUT\nINPUT\nADD\nPUSH 0\nMSTORE\nPUSH 0\nMLOAD\nPUSH 258\nEQ\nPUSH @ok\nJUMPI\nFAIL\nok: JUMPDEST\nSTOP").unwrap();
        let mut input = vec![0u8; 8];
        input[7] = 2;
        // a short trailing word is padded on the right: reads 0x100
        input.extend_from_slice(&[0, 0, 0, 0, 0, 0, 1]);
        let t = execute(&p, &input, 1000);
        assert_eq!(t.status, Status::Stopped);
        let t = execute(&p, &[], 1000);
        assert_eq!(t.status, Status::Failed);
    }

    #[test]
    fn division_by_zero_is_zero() {
        assert_eq!(eval_binary(BinOp::Div, 7, 0), 0);
        assert_eq!(eval_binary(BinOp::Mod, 7, 0), 0);
        assert_eq!(eval_binary(BinOp::Sub, 0, 1), u64::MAX);
    }

    #[test]
    fn operand_order_matches_top_first() {
        // a = top = 10, b = 2: SUB gives 8
        let p = assemble("PUSH 2\nPUSH 10\nSUB\nPUSH 8\nEQ\nPUSH @ok\nJUMPI\nFAIL\nok: JUMPDEST").unwrap();
        assert_eq!(execute(&p, &[], 100).status, Status::Stopped);
    }

    #[test]
    fn invalid_jump_and_stack_errors() {
        let p = assemble("PUSH 1\nJUMP\nJUMPDEST").unwrap();
        assert_eq!(execute(&p, &[], 100).status, Status::InvalidJump);
        let p = assemble("POP").unwrap();
        let t = execute(&p, &[], 100);
        assert_eq!(t.status, Status::StackError);
        assert_eq!(t.locations, vec![Loc(0)]);
    }

    #[test]
    fn stack_overflow_is_a_stack_error() {
        let p = assemble("top: JUMPDEST\nPUSH 1\nPUSH @top\nJUMP").unwrap();
        assert_eq!(execute(&p, &[], 100_000).status, Status::StackError);
    }

    #[test]
    fn straight_line_programs_share_a_path_id() {
        let p = assemble("INPUT\nPUSH 3\nADD\nPOP\nSTOP").unwrap();
        let a = execute(&p, &[1; 8], 100);
        let b = execute(&p, &[9; 8], 100);
        assert_eq!(path_id(&a), path_id(&b));
    }

    #[test]
    fn one_differing_edge_changes_the_path_id() {
        let p = assemble("INPUT\nPUSH @skip\nJUMPI\nPUSH 0\nPOP\nskip: JUMPDEST\nSTOP").unwrap();
        let taken = execute(&p, &[0, 0, 0, 0, 0, 0, 0, 1], 100);
        let fallthrough = execute(&p, &[0; 8], 100);
        assert_eq!(taken.branch_edges.len(), 1);
        assert_eq!(fallthrough.branch_edges.len(), 1);
        assert_ne!(taken.branch_edges, fallthrough.branch_edges);
        assert_ne!(path_id(&taken), path_id(&fallthrough));
        // and the hashes are exactly the truncated digests of the edge encodings
        let expect = |edges: &[(u32, u32)]| {
            let mut bytes = Vec::new();
            for (a, b) in edges {
                bytes.extend_from_slice(&a.to_be_bytes());
                bytes.extend_from_slice(&b.to_be_bytes());
            }
            bytes.push(0);
            let d = Sha256::digest(&bytes);
            u64::from_be_bytes(d[..8].try_into().unwrap())
        };
        assert_eq!(path_id(&taken).0, expect(&[(2, 5)]));
        assert_eq!(path_id(&fallthrough).0, expect(&[(2, 3)]));
    }

    #[test]
    fn memory_spills_to_hash_map() {
        let mut m = WordMap::default();
        for i in 0..100 {
            m.set(i, i * 2);
        }
        assert!(m.large.is_some());
        assert_eq!(m.get(77), 154);
        assert_eq!(m.get(1000), 0);
    }
}
