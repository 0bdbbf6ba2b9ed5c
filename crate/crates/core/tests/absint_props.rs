mod common;

use std::collections::{BTreeMap, BTreeSet};

use lookahead_fuzz::absint::{
    join_state, join_value, prefix_inference, suffix_fixpoint, transfer, AbstractState, AbstractValue, CellMap,
    Origin, Slot, Space, SuffixOptions,
};
use lookahead_fuzz::minivm::{execute, BinOp, Instruction, Loc, Program, RawInstruction, Status, UnOp};
use proptest::prelude::*;

use common::{raw_of, small_program};

fn value() -> impl Strategy<Value = AbstractValue> {
    prop_oneof![
        1 => Just(AbstractValue::Bottom),
        4 => (0u64..4).prop_map(AbstractValue::Const),
        2 => Just(AbstractValue::Top),
    ]
}

fn stack_value() -> impl Strategy<Value = AbstractValue> {
    prop_oneof![3 => (0u64..4).prop_map(AbstractValue::Const), 1 => Just(AbstractValue::Top)]
}

fn slot() -> impl Strategy<Value = Slot> {
    let origin = prop_oneof![
        3 => Just(None),
        1 => (0u64..3).prop_map(|a| Some(Origin::Cell(Space::Memory, a))),
        1 => (0u64..3, 0u64..3).prop_map(|(a, k)| Some(Origin::CellEq(Space::Memory, a, k))),
        1 => (0u64..3, 0u64..3).prop_map(|(a, k)| Some(Origin::CellNe(Space::Storage, a, k))),
    ];
    (stack_value(), origin).prop_map(|(value, origin)| Slot { value, origin })
}

fn cells() -> impl Strategy<Value = CellMap> {
    (proptest::collection::vec((0u64..5, stack_value()), 0..4), proptest::bool::weighted(0.2)).prop_map(
        |(entries, havoc)| {
            let mut m = CellMap::default();
            if havoc {
                m.havoc();
            }
            for (a, v) in entries {
                m.set(a, v);
            }
            m
        },
    )
}

fn state() -> impl Strategy<Value = AbstractState> {
    (proptest::collection::vec(slot(), 0..6), proptest::bool::weighted(0.1), cells(), cells(), proptest::bool::weighted(0.05))
        .prop_map(|(stack, depth_conflict, memory, storage, bottom)| {
            if bottom {
                return AbstractState::bottom();
            }
            AbstractState { reachable: true, stack, depth_conflict, memory, storage }
        })
}

/// Successor states joined per location.
fn successors(p: &Program, loc: Loc, s: &AbstractState) -> BTreeMap<Loc, AbstractState> {
    let mut out: BTreeMap<Loc, AbstractState> = BTreeMap::new();
    for (l, t) in transfer(s, loc, p) {
        out.entry(l).and_modify(|x| *x = x.join(&t)).or_insert(t);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn value_join_laws(a in value(), b in value(), c in value()) {
        prop_assert_eq!(join_value(a, b), join_value(b, a));
        prop_assert_eq!(join_value(join_value(a, b), c), join_value(a, join_value(b, c)));
        prop_assert_eq!(join_value(a, a), a);
        prop_assert_eq!(join_value(AbstractValue::Bottom, a), a);
        prop_assert!(a.leq(join_value(a, b)));
    }

    #[test]
    fn state_join_laws(a in state(), b in state(), c in state()) {
        prop_assert_eq!(join_state(&a, &b), join_state(&b, &a));
        prop_assert_eq!(join_state(&join_state(&a, &b), &c), join_state(&a, &join_state(&b, &c)));
        prop_assert_eq!(join_state(&a, &a), a.clone());
        prop_assert_eq!(join_state(&AbstractState::bottom(), &a), a.clone());
        prop_assert!(a.leq(&join_state(&a, &b)));
    }

    #[test]
    fn transfer_is_monotone(p in small_program(20), at in any::<prop::sample::Index>(), a in state(), b in state()) {
        let loc = Loc(at.index(p.len()) as u32);
        let bigger = join_state(&a, &b);
        let small = successors(&p, loc, &a);
        let large = successors(&p, loc, &bigger);
        for (l, t) in &small {
            if t.is_bottom() {
                continue;
            }
            let upper = large.get(l);
            prop_assert!(upper.is_some_and(|u| t.leq(u)), "at {loc} -> {l}: {t:?} not below {upper:?}");
        }
    }

    #[test]
    fn fixpoint_is_stable(p in small_program(30), target in any::<prop::sample::Index>()) {
        let targets = BTreeSet::from([Loc(target.index(p.len()) as u32)]);
        let options = SuffixOptions { stop_at_first_hit: false };
        let first = suffix_fixpoint(&p, &[(p.entry(), AbstractState::initial())], &targets, options);
        let starts: Vec<_> = first.visited.iter().map(|(l, s)| (*l, s.clone())).collect();
        let second = suffix_fixpoint(&p, &starts, &targets, options);
        prop_assert_eq!(&first.visited, &second.visited);
        prop_assert_eq!(first.unreachable, second.unreachable);
    }
}

fn straight_line_op() -> impl Strategy<Value = Instruction> {
    use Instruction as I;
    let bin = prop::sample::select(vec![
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Mod,
        BinOp::Lt,
        BinOp::Gt,
        BinOp::Eq,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
    ]);
    prop_oneof![
        4 => prop_oneof![0u64..8, any::<u64>()].prop_map(I::Push),
        4 => bin.prop_map(I::Bin),
        1 => prop_oneof![Just(UnOp::IsZero), Just(UnOp::Not)].prop_map(I::Un),
        1 => (1u8..=3).prop_map(I::Dup),
        1 => (1u8..=2).prop_map(I::Swap),
        1 => Just(I::Pop),
        1 => Just(I::MStore),
        1 => Just(I::MLoad),
        1 => Just(I::SStore),
        1 => Just(I::SLoad),
    ]
}

/// Appends `PUSH c; EQ; PUSH @hit; JUMPI; STOP; hit: JUMPDEST; STOP`.
fn probe(fragment: &[Instruction], c: u64) -> Program {
    let mut raw: Vec<RawInstruction> = fragment.iter().map(|i| raw_of(*i)).collect();
    let hit = raw.len() as u64 + 5;
    raw.extend([
        RawInstruction::push(c),
        raw_of(Instruction::Bin(BinOp::Eq)),
        RawInstruction::push(hit),
        raw_of(Instruction::JumpI),
        raw_of(Instruction::Stop),
        raw_of(Instruction::JumpDest),
        raw_of(Instruction::Stop),
    ]);
    Program::validate(&raw).unwrap()
}

/// Stack effect `(pops, pushes)`.
fn arity(i: Instruction) -> (usize, usize) {
    match i {
        Instruction::Push(_) => (0, 1),
        Instruction::Pop => (1, 0),
        Instruction::Dup(n) => (n as usize, n as usize + 1),
        Instruction::Swap(n) => (n as usize + 1, n as usize + 1),
        Instruction::Bin(_) => (2, 1),
        Instruction::Un(_) | Instruction::MLoad | Instruction::SLoad => (1, 1),
        Instruction::MStore | Instruction::SStore => (2, 0),
        _ => (0, 0),
    }
}

/// Straight-line code that never underflows and leaves a value on the stack.
fn fragment() -> impl Strategy<Value = Vec<Instruction>> {
    (proptest::collection::vec(straight_line_op(), 1..16), proptest::collection::vec(0u64..6, 16)).prop_map(
        |(ops, fill)| {
            let mut out = Vec::new();
            let mut depth = 0;
            for (i, op) in ops.into_iter().enumerate() {
                let (pops, pushes) = arity(op);
                while depth < pops {
                    out.push(Instruction::Push(fill[i]));
                    depth += 1;
                }
                out.push(op);
                depth = depth - pops + pushes;
            }
            if depth == 0 {
                out.push(Instruction::Push(fill[0]));
            }
            out
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    /// Constant folding agrees with the interpreter on straight-line code.
    #[test]
    fn constant_folding_matches_execution(fragment in fragment()) {
        let p = probe(&fragment, 0);
        let t = execute(&p, &[], 1000);
        prop_assert_eq!(t.status, Status::Stopped);
        let post = prefix_inference(&p, &t, fragment.len()).unwrap();
        let (phi, next) = post.single().unwrap();
        prop_assert_eq!(next, Loc(fragment.len() as u32));
        let top = phi.stack.last().expect("non-empty stack").value;
        let c = top.as_const().expect("all operands are constants");
        prop_assert!(phi.stack.iter().all(|s| s.value.as_const().is_some()));

        let hit = Loc(fragment.len() as u32 + 5);
        prop_assert!(execute(&probe(&fragment, c), &[], 1000).locations.contains(&hit));
        prop_assert!(!execute(&probe(&fragment, c.wrapping_add(1)), &[], 1000).locations.contains(&hit));
    }
}
