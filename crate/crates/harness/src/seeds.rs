//! Stable seed derivation, so every task owns an RNG stream that depends
//! only on the config and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TEACHER_STREAM: u64 = 0x0074_6561_6368_6572;
const EVAL_STREAM: u64 = 0x6576_616c;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a of a method name.
pub fn name_tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(master), |h, p| splitmix64(h ^ splitmix64(*p)))
}

pub fn task_seed(master: u64, mdp_index: usize, method: &str, run_seed: u64) -> u64 {
    derive_seed(master, &[mdp_index as u64, name_tag(method), run_seed])
}

pub fn teacher_rng(master: u64, mdp_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &[mdp_index as u64, TEACHER_STREAM]))
}

/// Separate stream for evaluation episodes, so the eval cadence never
/// changes the training trajectory.
pub fn eval_rng(task_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(task_seed, &[EVAL_STREAM]))
}

pub fn train_rng(task_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(task_seed)
}
