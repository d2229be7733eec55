//! Environments: random grid worlds, the corridor chain and the seven-state
//! oscillation game, plus observation construction.

mod corridor;
mod counterexample;
mod generate;
mod grid;
mod observation;

pub use corridor::CorridorWorld;
pub use counterexample::{CounterexampleMdp, CounterexampleState};
pub use generate::{generate_random_mdp, path_exists, GenParams};
pub use grid::{Cell, Coord, GridWorld, TransitionDistribution, DEFAULT_ETA, DEFAULT_P_TERM};
pub use observation::{ObsId, ObsMode, ObservationKey, ObservationSpace};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a state inside one environment.
pub type StateId = usize;

/// Movement actions of the grid worlds. Indices above `DOWN` are no-ops.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const UP: usize = 2;
pub const DOWN: usize = 3;
pub const MOVEMENT_ACTIONS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("no solvable grid within {attempts} generation attempts")]
    GenerationExhausted { attempts: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("state {0} is not a decision state (wall, terminal or out of range)")]
    InvalidState(StateId),
    #[error("action {action} out of range for {count} actions")]
    InvalidAction { action: usize, count: usize },
    #[error("malformed world: {0}")]
    Malformed(String),
}

/// One sampled environment transition. `next == None` means the episode ended
/// (terminal cell reached or the random-termination coin fired).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: Option<StateId>,
    pub reward: f64,
}

/// One branch of the exact transition distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub next: Option<StateId>,
    pub reward: f64,
    pub prob: f64,
}

/// A finite episodic MDP with a single initial state.
///
/// States for which `is_decision_state` is false are never occupied by the
/// agent: episodes end on arrival.
pub trait Environment: Send + Sync {
    fn state_count(&self) -> usize;
    fn action_count(&self) -> usize;
    fn initial_state(&self) -> StateId;
    fn is_decision_state(&self, state: StateId) -> bool;

    /// Exact distribution over (next state or end, reward). Branches with the
    /// same destination are merged; probabilities sum to one.
    fn outcomes(&self, state: StateId, action: usize) -> Result<Vec<Outcome>, MdpError>;

    fn sample<R: Rng + ?Sized>(
        &self,
        state: StateId,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, MdpError> {
        let outcomes = self.outcomes(state, action)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for o in &outcomes {
            acc += o.prob;
            if u < acc {
                return Ok(Transition { next: o.next, reward: o.reward });
            }
        }
        let last = outcomes.last().expect("outcome list is never empty");
        Ok(Transition { next: last.next, reward: last.reward })
    }

    /// Decision states in index order.
    fn decision_states(&self) -> Vec<StateId> {
        (0..self.state_count()).filter(|&s| self.is_decision_state(s)).collect()
    }
}

/// Merges branches that share a destination and reward, keeping first-seen order.
pub(crate) fn merge_outcomes(raw: impl IntoIterator<Item = Outcome>) -> Vec<Outcome> {
    let mut merged: Vec<Outcome> = Vec::new();
    for o in raw {
        if o.prob == 0.0 {
            continue;
        }
        match merged
            .iter_mut()
            .find(|m| m.next == o.next && m.reward.to_bits() == o.reward.to_bits())
        {
            Some(m) => m.prob += o.prob,
            None => merged.push(o),
        }
    }
    merged
}

/// Any of the environments the harness can run on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum World {
    Grid(GridWorld),
    Corridor(CorridorWorld),
    Counterexample(CounterexampleMdp),
}

impl World {
    /// Observation space for the given mode. Corridor and counterexample worlds
    /// only support full observability for the teacher; the counterexample's
    /// student view aliases its two second-step states.
    pub fn observation_space(&self, mode: ObsMode) -> ObservationSpace {
        match self {
            World::Grid(g) => ObservationSpace::for_grid(g, mode),
            World::Corridor(c) => ObservationSpace::full(c),
            World::Counterexample(c) => match mode {
                ObsMode::Full => ObservationSpace::full(c),
                ObsMode::Window(_) => c.student_observations(),
            },
        }
    }
}

impl Environment for World {
    fn state_count(&self) -> usize {
        match self {
            World::Grid(g) => g.state_count(),
            World::Corridor(c) => c.state_count(),
            World::Counterexample(c) => c.state_count(),
        }
    }

    fn action_count(&self) -> usize {
        match self {
            World::Grid(g) => g.action_count(),
            World::Corridor(c) => c.action_count(),
            World::Counterexample(c) => c.action_count(),
        }
    }

    fn initial_state(&self) -> StateId {
        match self {
            World::Grid(g) => g.initial_state(),
            World::Corridor(c) => c.initial_state(),
            World::Counterexample(c) => c.initial_state(),
        }
    }

    fn is_decision_state(&self, state: StateId) -> bool {
        match self {
            World::Grid(g) => g.is_decision_state(state),
            World::Corridor(c) => c.is_decision_state(state),
            World::Counterexample(c) => c.is_decision_state(state),
        }
    }

    fn outcomes(&self, state: StateId, action: usize) -> Result<Vec<Outcome>, MdpError> {
        match self {
            World::Grid(g) => g.outcomes(state, action),
            World::Corridor(c) => c.outcomes(state, action),
            World::Counterexample(c) => c.outcomes(state, action),
        }
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        state: StateId,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, MdpError> {
        match self {
            World::Grid(g) => g.sample(state, action, rng),
            World::Corridor(c) => c.sample(state, action, rng),
            World::Counterexample(c) => c.sample(state, action, rng),
        }
    }
}
