use rand::Rng;

use super::engine::run_episode_cached;
use super::{Control, DistillError};
use crate::episode::{rollout, sample_index};
use crate::mdp::{Environment, ObservationSpace};
use crate::tabular::{PolicyTable, ProbabilityCache};
use crate::teacher::TeacherBundle;

/// Mean undiscounted return of the frozen student over `episodes` episodes.
pub fn evaluate_return<E, R>(
    env: &E,
    observations: &ObservationSpace,
    policy: &PolicyTable,
    episodes: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<f64, DistillError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let mut cache = ProbabilityCache::new(policy);
    let mut total = 0.0;
    for _ in 0..episodes {
        let t = rollout(env, max_len, rng, |s, rng| sample_index(cache.get(observations.obs(s)), rng))?;
        total += t.total_reward();
    }
    Ok(total / episodes.max(1) as f64)
}

/// Mean undiscounted return of the teacher over `episodes` episodes.
pub fn evaluate_teacher_return<E, R>(
    env: &E,
    teacher: &TeacherBundle,
    episodes: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<f64, DistillError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let mut total = 0.0;
    for _ in 0..episodes {
        let t = rollout(env, max_len, rng, |s, rng| sample_index(&teacher.control_probs(s), rng))?;
        total += t.total_reward();
    }
    Ok(total / episodes.max(1) as f64)
}

/// Mean over episodes sampled under `control` of Σ_t H×(π(τ_t)‖π_θ(τ_t)),
/// summed over the steps where the teacher supervises.
#[allow(clippy::too_many_arguments)]
pub fn episodic_cross_entropy<E, R>(
    env: &E,
    observations: &ObservationSpace,
    policy: &PolicyTable,
    teacher: &TeacherBundle,
    control: Control,
    episodes: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<f64, DistillError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let mut cache = ProbabilityCache::new(policy);
    let mut total = 0.0;
    for _ in 0..episodes {
        let ep = run_episode_cached(env, observations, &mut cache, Some(teacher), control, max_len, rng)?;
        for (t, step) in ep.trajectory.steps.iter().enumerate() {
            if let Some(target) = teacher.target(step.state) {
                total += target
                    .iter()
                    .zip(ep.student_probs(t))
                    .filter(|(p, _)| **p > 0.0)
                    .map(|(p, q)| -p * q.ln())
                    .sum::<f64>();
            }
        }
    }
    Ok(total / episodes.max(1) as f64)
}
