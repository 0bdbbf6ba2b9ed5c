use rand::Rng;

pub const DEFAULT_MAX_INPUT_LEN: usize = 256;

pub const INTERESTING_WORDS: [u64; 8] = [0, 1, 2, 42, 256, 257, 5687, u64::MAX];

const MAX_STACKED: usize = 4;
const MAX_DELTA: u8 = 16;
const MAX_RESIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mutation {
    BitFlip,
    ByteSet,
    ByteAddSub,
    WordOverwrite,
    Truncate,
    Extend,
}

fn applicable(len: usize, max_len: usize) -> Vec<Mutation> {
    let mut ops = Vec::with_capacity(6);
    if len > 0 {
        ops.extend([Mutation::BitFlip, Mutation::ByteSet, Mutation::ByteAddSub]);
    }
    if len > 1 {
        ops.push(Mutation::Truncate);
    }
    if len >= 8 {
        ops.push(Mutation::WordOverwrite);
    }
    if len < max_len {
        ops.push(Mutation::Extend);
    }
    ops
}

fn apply<R: Rng + ?Sized>(op: Mutation, input: &mut Vec<u8>, max_len: usize, rng: &mut R) {
    match op {
        Mutation::BitFlip => {
            let i = rng.random_range(0..input.len());
            input[i] ^= 1 << rng.random_range(0..8);
        }
        Mutation::ByteSet => {
            let i = rng.random_range(0..input.len());
            input[i] ^= rng.random_range(1..=255u8);
        }
        Mutation::ByteAddSub => {
            let i = rng.random_range(0..input.len());
            let d = rng.random_range(1..=MAX_DELTA);
            input[i] = if rng.random() { input[i].wrapping_add(d) } else { input[i].wrapping_sub(d) };
        }
        Mutation::WordOverwrite => {
            let w = rng.random_range(0..input.len() / 8) * 8;
            let current = u64::from_be_bytes(input[w..w + 8].try_into().expect("8 bytes"));
            let choices: Vec<u64> = INTERESTING_WORDS.iter().copied().filter(|&c| c != current).collect();
            let c = choices[rng.random_range(0..choices.len())];
            input[w..w + 8].copy_from_slice(&c.to_be_bytes());
        }
        Mutation::Truncate => {
            let n = rng.random_range(1..=MAX_RESIZE.min(input.len() - 1));
            input.truncate(input.len() - n);
        }
        Mutation::Extend => {
            let n = rng.random_range(1..=MAX_RESIZE.min(max_len - input.len()));
            for _ in 0..n {
                input.push(rng.random());
            }
        }
    }
}

/// Applies 1 to 4 stacked random mutations to `input`.
pub fn fuzz_input<R: Rng + ?Sized>(input: &[u8], max_len: usize, rng: &mut R) -> Vec<u8> {
    let mut out = input.to_vec();
    out.truncate(max_len);
    let rounds = rng.random_range(1..=MAX_STACKED);
    for _ in 0..rounds {
        let ops = applicable(out.len(), max_len);
        if ops.is_empty() {
            break;
        }
        let op = ops[rng.random_range(0..ops.len())];
        apply(op, &mut out, max_len, rng);
    }
    out
}
