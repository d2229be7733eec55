use serde::{Deserialize, Serialize};

use super::{Environment, MdpError, Outcome, StateId, LEFT, RIGHT};

/// Chain s_{-T} .. s_{+T} with deterministic left/right moves. The right end
/// pays +1, the left end -1, and both end the episode. State `k` is s_{k-T}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorWorld {
    half_length: usize,
    #[serde(default)]
    p_term: f64,
}

impl CorridorWorld {
    pub fn new(half_length: usize) -> Result<Self, MdpError> {
        if half_length == 0 {
            return Err(MdpError::Malformed("corridor half-length must be positive".into()));
        }
        Ok(Self { half_length, p_term: 0.0 })
    }

    pub fn with_p_term(mut self, p_term: f64) -> Result<Self, MdpError> {
        if !(0.0..=1.0).contains(&p_term) {
            return Err(MdpError::Malformed("p_term must lie in [0, 1]".into()));
        }
        self.p_term = p_term;
        Ok(self)
    }

    pub fn half_length(&self) -> usize {
        self.half_length
    }

    pub fn p_term(&self) -> f64 {
        self.p_term
    }

    fn end_reward(&self, state: StateId) -> Option<f64> {
        if state == 0 {
            Some(-1.0)
        } else if state == 2 * self.half_length {
            Some(1.0)
        } else {
            None
        }
    }

    /// Discounted value of always moving right, zero at the ends.
    pub fn always_right_value(&self, state: StateId, gamma: f64) -> f64 {
        match self.end_reward(state) {
            Some(_) => 0.0,
            None => gamma.powi((2 * self.half_length - state) as i32 - 1),
        }
    }
}

impl Environment for CorridorWorld {
    fn state_count(&self) -> usize {
        2 * self.half_length + 1
    }

    fn action_count(&self) -> usize {
        2
    }

    fn initial_state(&self) -> StateId {
        self.half_length
    }

    fn is_decision_state(&self, state: StateId) -> bool {
        state < self.state_count() && self.end_reward(state).is_none()
    }

    fn outcomes(&self, state: StateId, action: usize) -> Result<Vec<Outcome>, MdpError> {
        if !self.is_decision_state(state) {
            return Err(MdpError::InvalidState(state));
        }
        let next = match action {
            LEFT => state - 1,
            RIGHT => state + 1,
            _ => return Err(MdpError::InvalidAction { action, count: 2 }),
        };
        Ok(match self.end_reward(next) {
            Some(r) => vec![Outcome { next: None, reward: r, prob: 1.0 }],
            None if self.p_term > 0.0 => vec![
                Outcome { next: Some(next), reward: 0.0, prob: 1.0 - self.p_term },
                Outcome { next: None, reward: 0.0, prob: self.p_term },
            ],
            None => vec![Outcome { next: Some(next), reward: 0.0, prob: 1.0 }],
        })
    }
}
