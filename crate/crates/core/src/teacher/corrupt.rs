use std::collections::{BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::Rng;

use super::{TeacherBundle, TeacherError};
use crate::episode::{rollout, sample_index, DEFAULT_MAX_EPISODE_LEN};
use crate::mdp::{Environment, ObsId};
use crate::tabular::ValueTable;

const INITIAL_ROLLOUTS: usize = 1000;
const EXTRA_ROLLOUTS: usize = 100;
const GROWTH_THRESHOLD: f64 = 0.01;

/// Observations the teacher reaches: the union over 1,000 rollouts, extended
/// 100 rollouts at a time until a batch grows the set by less than 1%.
pub fn collect_visited<E, R>(env: &E, teacher: &TeacherBundle, rng: &mut R) -> Result<BTreeSet<ObsId>, TeacherError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let mut visited = BTreeSet::new();
    let batch = |count: usize, visited: &mut BTreeSet<ObsId>, rng: &mut R| -> Result<(), TeacherError> {
        for _ in 0..count {
            let traj = rollout(env, DEFAULT_MAX_EPISODE_LEN, rng, |s, rng| {
                sample_index(&teacher.control_probs(s), rng)
            })?;
            visited.extend(traj.steps.iter().map(|st| teacher.obs(st.state)));
        }
        Ok(())
    };
    batch(INITIAL_ROLLOUTS, &mut visited, rng)?;
    loop {
        let before = visited.len();
        batch(EXTRA_ROLLOUTS, &mut visited, rng)?;
        if ((visited.len() - before) as f64) < GROWTH_THRESHOLD * before as f64 {
            return Ok(visited);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedTeacher {
    pub teacher: TeacherBundle,
    pub visited: BTreeSet<ObsId>,
    pub corrupted: Vec<ObsId>,
}

/// Flips the most probable action at ⌊fraction·|visited|⌋ uniformly chosen
/// visited observations: its mass is swapped with that of a uniformly chosen
/// action of strictly lower probability. Other observations are untouched.
pub fn corrupt_teacher<E, R>(
    env: &E,
    teacher: &TeacherBundle,
    fraction: f64,
    rng: &mut R,
) -> Result<CorruptedTeacher, TeacherError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    if !(0.0..=1.0).contains(&fraction) {
        return Err(TeacherError::InvalidArgument(format!("corruption fraction {fraction} outside [0, 1]")));
    }
    let visited = collect_visited(env, teacher, rng)?;
    let keys: Vec<ObsId> = visited.iter().copied().collect();
    let count = (fraction * keys.len() as f64).floor() as usize;
    let mut chosen: Vec<ObsId> = sample(rng, keys.len(), count).into_iter().map(|i| keys[i]).collect();
    chosen.sort();
    let mut out = teacher.clone();
    out.provenance.corruption_fraction = fraction;
    for &o in &chosen {
        let mut probs = out.policy.probs(o).into_owned();
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let top = probs.iter().position(|p| *p == max).expect("non-empty distribution");
        let lower: Vec<usize> = (0..probs.len()).filter(|&a| probs[a] < max).collect();
        if lower.is_empty() {
            continue;
        }
        let other = lower[rng.gen_range(0..lower.len())];
        probs.swap(top, other);
        out.policy.set(o, probs);
    }
    Ok(CorruptedTeacher { teacher: out, visited, corrupted: chosen })
}

/// Every-visit Monte Carlo estimate of the teacher's discounted
/// return-to-go per observation, from `n` rollouts. Unvisited observations
/// read 0.
pub fn estimate_value<E, R>(
    env: &E,
    teacher: &TeacherBundle,
    n: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<ValueTable, TeacherError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(TeacherError::InvalidArgument("at least one trajectory is required".into()));
    }
    let mut sums: HashMap<ObsId, (f64, usize)> = HashMap::new();
    for _ in 0..n {
        let traj = rollout(env, DEFAULT_MAX_EPISODE_LEN, rng, |s, rng| {
            sample_index(&teacher.control_probs(s), rng)
        })?;
        let mut ret = 0.0;
        for step in traj.steps.iter().rev() {
            ret = step.reward + gamma * ret;
            let e = sums.entry(teacher.obs(step.state)).or_insert((0.0, 0));
            e.0 += ret;
            e.1 += 1;
        }
    }
    let mut values = ValueTable::new();
    let mut keys: Vec<_> = sums.into_iter().collect();
    keys.sort_by_key(|(o, _)| *o);
    for (o, (total, count)) in keys {
        values.set(o, total / count as f64);
    }
    Ok(values)
}
