use serde::{Deserialize, Serialize};

use super::{Environment, MdpError, ObservationKey, ObservationSpace, Outcome, StateId};

/// Decision states of the two-step oscillation game. The four leaves
/// (LL, LR, RL, RR) end the episode and are not states of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterexampleState {
    Root = 0,
    Left = 1,
    Right = 2,
}

/// Seven-state tree: from the root pick L or R, then pick a branch again.
/// Rewards: r(L, s_L) = -1, r(R, s_L) = -2, r(R, s_R) = -3, zero elsewhere.
/// Action 0 is L (the first branch), action 1 is R.
///
/// The student observes s_L and s_R identically, so one parameter drives the
/// second decision in both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleMdp;

impl CounterexampleMdp {
    pub const ROOT: StateId = CounterexampleState::Root as StateId;
    pub const LEFT: StateId = CounterexampleState::Left as StateId;
    pub const RIGHT: StateId = CounterexampleState::Right as StateId;

    pub fn new() -> Self {
        Self
    }

    /// Student view: the root, and one shared observation for s_L and s_R.
    pub fn student_observations(&self) -> ObservationSpace {
        ObservationSpace::from_keys(vec![
            Some(ObservationKey::new("root")),
            Some(ObservationKey::new("second")),
            Some(ObservationKey::new("second")),
        ])
    }
}

impl Environment for CounterexampleMdp {
    fn state_count(&self) -> usize {
        3
    }

    fn action_count(&self) -> usize {
        2
    }

    fn initial_state(&self) -> StateId {
        Self::ROOT
    }

    fn is_decision_state(&self, state: StateId) -> bool {
        state < 3
    }

    fn outcomes(&self, state: StateId, action: usize) -> Result<Vec<Outcome>, MdpError> {
        if action >= 2 {
            return Err(MdpError::InvalidAction { action, count: 2 });
        }
        let (next, reward) = match (state, action) {
            (Self::ROOT, 0) => (Some(Self::LEFT), 0.0),
            (Self::ROOT, _) => (Some(Self::RIGHT), 0.0),
            (Self::LEFT, 0) => (None, -1.0),
            (Self::LEFT, _) => (None, -2.0),
            (Self::RIGHT, 0) => (None, 0.0),
            (Self::RIGHT, _) => (None, -3.0),
            _ => return Err(MdpError::InvalidState(state)),
        };
        Ok(vec![Outcome { next, reward, prob: 1.0 }])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episodes_last_exactly_two_decisions() {
        let m = CounterexampleMdp::new();
        for a in 0..2 {
            let first = m.outcomes(CounterexampleMdp::ROOT, a).unwrap();
            let s = first[0].next.unwrap();
            for b in 0..2 {
                assert_eq!(m.outcomes(s, b).unwrap()[0].next, None);
            }
        }
    }

    #[test]
    fn second_step_states_alias_for_the_student() {
        let obs = CounterexampleMdp::new().student_observations();
        assert_eq!(obs.obs(CounterexampleMdp::LEFT), obs.obs(CounterexampleMdp::RIGHT));
        assert_ne!(obs.obs(CounterexampleMdp::ROOT), obs.obs(CounterexampleMdp::LEFT));
    }
}
