use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TeacherError;
use crate::episode::{rollout, sample_index, DEFAULT_MAX_EPISODE_LEN};
use crate::mdp::{Environment, ObservationSpace};
use crate::tabular::{action_probabilities, apply_to_policy, PolicyTable, UpdateAccumulator, ValueTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    /// Advantage from the discounted return-to-go.
    MonteCarlo,
    /// Advantage from the one-step bootstrap r + γ V(s').
    Td1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActorCriticConfig {
    pub mode: CriticMode,
    pub gamma: f64,
    pub learning_rate: f64,
    pub episodes: usize,
    pub max_episode_len: usize,
}

impl Default for ActorCriticConfig {
    fn default() -> Self {
        Self {
            mode: CriticMode::MonteCarlo,
            gamma: 0.99,
            learning_rate: 0.1,
            episodes: 30_000,
            max_episode_len: DEFAULT_MAX_EPISODE_LEN,
        }
    }
}

/// Tabular actor-critic, one sampled episode per update. Advantages use the
/// critic as it was before the episode; the critic is then fitted visit by
/// visit toward the same targets.
pub fn train_actor_critic<E, R>(
    env: &E,
    observations: &ObservationSpace,
    config: &ActorCriticConfig,
    rng: &mut R,
) -> Result<(PolicyTable, ValueTable), TeacherError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let mut policy = PolicyTable::new(env.action_count());
    let mut values = ValueTable::new();
    let mut acc = UpdateAccumulator::new();
    let mut probs = Vec::new();
    for _ in 0..config.episodes {
        let traj = rollout(env, config.max_episode_len, rng, |s, rng| {
            policy.probabilities_into(observations.obs(s), &mut probs);
            sample_index(&probs, rng)
        })?;
        let mut targets = vec![0.0; traj.len()];
        let mut ret = 0.0;
        for (t, step) in traj.steps.iter().enumerate().rev() {
            ret = step.reward + config.gamma * ret;
            targets[t] = match config.mode {
                CriticMode::MonteCarlo => ret,
                CriticMode::Td1 => {
                    step.reward
                        + config.gamma * step.next.map_or(0.0, |n| values.get(observations.obs(n)))
                }
            };
        }
        for (step, target) in traj.steps.iter().zip(&targets) {
            let o = observations.obs(step.state);
            let advantage = target - values.get(o);
            let p = action_probabilities(&policy, o);
            acc.add_logprob_gradient(o, &p, step.action, advantage);
        }
        for (step, target) in traj.steps.iter().zip(&targets) {
            let o = observations.obs(step.state);
            let v = values.get(o);
            values.set(o, v + config.learning_rate * (target - v));
        }
        apply_to_policy(&mut acc, &mut policy, config.learning_rate);
    }
    Ok((policy, values))
}
