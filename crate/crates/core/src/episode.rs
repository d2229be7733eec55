//! Episode sampling shared by teachers, the distillation engine and evaluation.

use rand::Rng;

use crate::mdp::{Environment, MdpError, StateId};

/// Default cap on episode length; only reached in worlds without random
/// termination under policies that avoid the terminal cells.
pub const DEFAULT_MAX_EPISODE_LEN: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: StateId,
    pub action: usize,
    pub reward: f64,
    /// `None` when the episode ended with this step.
    pub next: Option<StateId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// Set when the length cap cut the episode short.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.steps.iter().rev().fold(0.0, |acc, s| s.reward + gamma * acc)
    }
}

/// Draws an index from a probability vector by inversion.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Samples one episode from the initial state. `choose` picks the action in
/// a decision state.
pub fn rollout<E, R, F>(
    env: &E,
    max_len: usize,
    rng: &mut R,
    mut choose: F,
) -> Result<Trajectory, MdpError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(StateId, &mut R) -> usize,
{
    let mut traj = Trajectory::default();
    let mut state = env.initial_state();
    loop {
        if traj.steps.len() >= max_len {
            traj.truncated = true;
            return Ok(traj);
        }
        let action = choose(state, rng);
        let t = env.sample(state, action, rng)?;
        traj.steps.push(Step { state, action, reward: t.reward, next: t.next });
        match t.next {
            Some(n) => state = n,
            None => return Ok(traj),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{CorridorWorld, RIGHT};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_corridor_episode() {
        let c = CorridorWorld::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = rollout(&c, 100, &mut rng, |_, _| RIGHT).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.total_reward(), 1.0);
        assert!((t.discounted_return(0.5) - 0.5).abs() < 1e-15);
        assert!(!t.truncated);
    }

    #[test]
    fn cap_truncates() {
        let c = CorridorWorld::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut flip = false;
        let t = rollout(&c, 7, &mut rng, |_, _| {
            flip = !flip;
            usize::from(flip)
        })
        .unwrap();
        assert_eq!(t.len(), 7);
        assert!(t.truncated);
    }

    #[test]
    fn sample_index_respects_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(sample_index(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }
}
