use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TeacherError;
use crate::episode::DEFAULT_MAX_EPISODE_LEN;
use crate::mdp::{Environment, ObservationSpace};
use crate::tabular::{softmax, DistributionTable, QTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QLearningConfig {
    /// Environment steps, summed over episodes.
    pub steps: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub max_episode_len: usize,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self {
            steps: 30_000,
            lambda: 0.01,
            gamma: 0.99,
            epsilon: 0.1,
            max_episode_len: DEFAULT_MAX_EPISODE_LEN,
        }
    }
}

fn argmax_set(row: &[f64]) -> Vec<usize> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..row.len()).filter(|&a| row[a] == max).collect()
}

/// ε-greedy Q-learning with random tie-breaking. Q at the end of an episode
/// is 0.
pub fn train_q_learning<E, R>(
    env: &E,
    observations: &ObservationSpace,
    config: &QLearningConfig,
    rng: &mut R,
) -> Result<QTable, TeacherError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let actions = env.action_count();
    let mut q = QTable::new(actions);
    let mut steps = 0;
    while steps < config.steps {
        let mut state = env.initial_state();
        for _ in 0..config.max_episode_len {
            if steps >= config.steps {
                break;
            }
            let o = observations.obs(state);
            let action = if rng.gen::<f64>() < config.epsilon {
                rng.gen_range(0..actions)
            } else {
                let best = argmax_set(&q.row(o));
                best[rng.gen_range(0..best.len())]
            };
            let t = env.sample(state, action, rng)?;
            steps += 1;
            let bootstrap = t.next.map_or(0.0, |n| q.max(observations.obs(n)));
            let old = q.get(o, action);
            let updated =
                (1.0 - config.lambda) * old + config.lambda * (t.reward + config.gamma * bootstrap);
            if config.lambda != 0.0 {
                q.set(o, action, updated);
            }
            match t.next {
                Some(n) => state = n,
                None => break,
            }
        }
    }
    Ok(q)
}

/// Teacher policy from Q-values. Temperature 0 is uniform over the argmax
/// set; positive temperatures are Boltzmann.
pub fn extract_policy(q: &QTable, observations: &ObservationSpace, temperature: f64) -> DistributionTable {
    let mut table = DistributionTable::new(q.action_count());
    for o in observations.ids() {
        let row = q.row(o);
        let probs = if temperature <= 0.0 {
            let best = argmax_set(&row);
            let mut p = vec![0.0; row.len()];
            for a in &best {
                p[*a] = 1.0 / best.len() as f64;
            }
            p
        } else {
            softmax(&row.iter().map(|v| v / temperature).collect::<Vec<_>>())
        };
        table.set(o, probs);
    }
    table
}
