mod common;

use lookahead_fuzz::minivm::{decode_program, encode_program, execute, path_id, Instruction, Loc, Program};
use proptest::prelude::*;

use common::small_program;

fn input() -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(any::<u8>(), 0..40)
}

/// Rebuilds the location sequence from the entry and the recorded branch edges.
fn replay(p: &Program, edges: &[(Loc, Loc)], len: usize) -> Vec<Loc> {
    let mut out = Vec::with_capacity(len);
    let mut pc = p.entry();
    let mut next_edge = 0;
    while out.len() < len {
        out.push(pc);
        let branches = matches!(p.get(pc), Some(Instruction::Jump | Instruction::JumpI));
        pc = match edges.get(next_edge) {
            Some(&(from, to)) if branches && from == pc => {
                next_edge += 1;
                to
            }
            _ => pc.next(),
        };
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn determinism(p in small_program(40), i in input(), budget in 1u64..2000) {
        let a = execute(&p, &i, budget);
        let b = execute(&p, &i, budget);
        prop_assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        prop_assert_eq!(path_id(&a), path_id(&b));
    }

    #[test]
    fn totality(p in small_program(40), i in input(), budget in 0u64..2000) {
        let t = execute(&p, &i, budget);
        prop_assert!(t.steps_used <= budget);
        prop_assert_eq!(t.steps_used, t.locations.len() as u64);
        if budget > 0 {
            prop_assert_eq!(t.locations.first(), Some(&p.entry()));
        }
    }

    #[test]
    fn path_consistency(p in small_program(40), i in input()) {
        let t = execute(&p, &i, 5000);
        prop_assert_eq!(replay(&p, &t.branch_edges, t.locations.len()), t.locations.clone());
        for w in t.locations.windows(2) {
            let (a, b) = (w[0], w[1]);
            prop_assert!(b == a.next() || t.branch_edges.contains(&(a, b)));
        }
    }

    #[test]
    fn leader_soundness(p in small_program(40), i in input()) {
        let t = execute(&p, &i, 5000);
        for &(_, to) in &t.branch_edges {
            if p.contains(to) {
                prop_assert!(p.block_leaders().contains(&to));
            }
        }
        prop_assert!(p.block_leaders().contains(&p.entry()));
    }

    #[test]
    fn binary_round_trip(p in small_program(40)) {
        let decoded = decode_program(&encode_program(&p)).unwrap();
        prop_assert_eq!(decoded.instructions(), p.instructions());
        prop_assert_eq!(decoded.block_leaders(), p.block_leaders());
    }

    #[test]
    fn pid_separates_paths(p in small_program(30), a in input(), b in input()) {
        let (ta, tb) = (execute(&p, &a, 2000), execute(&p, &b, 2000));
        if ta.branch_edges != tb.branch_edges || ta.status != tb.status {
            prop_assert_ne!(path_id(&ta), path_id(&tb));
        } else {
            prop_assert_eq!(path_id(&ta), path_id(&tb));
        }
    }
}
