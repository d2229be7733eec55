use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::grid::{Cell, GridWorld};
use super::{Environment, StateId};

/// Canonical, process-independent encoding of what the agent observes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationKey(String);

impl ObservationKey {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Key of a fully observed state.
    pub fn state(index: StateId) -> Self {
        Self(format!("s{index}"))
    }
}

impl fmt::Display for ObservationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Dense id of an observation key within one [`ObservationSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObsId(pub u32);

impl ObsId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsMode {
    Full,
    /// A (2k+1) x (2k+1) window centred on the agent.
    Window(usize),
}

impl Default for ObsMode {
    fn default() -> Self {
        ObsMode::Window(4)
    }
}

/// Token of one cell inside a window: walls and out-of-grid cells share `#`,
/// free cells are `reward` with a `T` suffix when terminating.
fn window_token(cell: Cell, out: &mut String) {
    match cell {
        Cell::Wall => out.push('#'),
        Cell::Free { reward, terminal } => {
            let reward = if reward == 0.0 { 0.0 } else { reward };
            out.push_str(&reward.to_string());
            if terminal {
                out.push('T');
            }
        }
    }
}

/// Observation of a grid state. Window keys list rows i-k..=i+k, each over
/// columns j-k..=j+k.
pub fn observe(world: &GridWorld, state: StateId, mode: ObsMode) -> ObservationKey {
    match mode {
        ObsMode::Full => ObservationKey::state(state),
        ObsMode::Window(k) => {
            let c = world.coord(state);
            let k = k as isize;
            let mut s = String::with_capacity(((2 * k + 1) * (2 * k + 1) * 3) as usize);
            for di in -k..=k {
                for dj in -k..=k {
                    if !s.is_empty() {
                        s.push(',');
                    }
                    window_token(world.cell_at(c.i as isize + di, c.j as isize + dj), &mut s);
                }
            }
            ObservationKey(s)
        }
    }
}

/// Maps every decision state of one environment to an interned observation.
/// Ids are assigned in state order, so the mapping is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpace {
    state_obs: Vec<Option<ObsId>>,
    keys: Vec<ObservationKey>,
}

impl ObservationSpace {
    pub fn from_keys(keys_by_state: Vec<Option<ObservationKey>>) -> Self {
        let mut index: HashMap<ObservationKey, ObsId> = HashMap::new();
        let mut keys = Vec::new();
        let state_obs = keys_by_state
            .into_iter()
            .map(|k| {
                k.map(|k| {
                    *index.entry(k.clone()).or_insert_with(|| {
                        keys.push(k);
                        ObsId((keys.len() - 1) as u32)
                    })
                })
            })
            .collect();
        Self { state_obs, keys }
    }

    /// One observation per decision state.
    pub fn full<E: Environment>(env: &E) -> Self {
        Self::from_keys(
            (0..env.state_count())
                .map(|s| env.is_decision_state(s).then(|| ObservationKey::state(s)))
                .collect(),
        )
    }

    pub fn for_grid(world: &GridWorld, mode: ObsMode) -> Self {
        Self::from_keys(
            (0..world.state_count())
                .map(|s| world.is_decision_state(s).then(|| observe(world, s, mode)))
                .collect(),
        )
    }

    /// Observation of a decision state. Panics for states the agent never occupies.
    #[inline]
    pub fn obs(&self, state: StateId) -> ObsId {
        self.state_obs[state].expect("observation requested for a non-decision state")
    }

    pub fn try_obs(&self, state: StateId) -> Option<ObsId> {
        self.state_obs.get(state).copied().flatten()
    }

    pub fn key(&self, id: ObsId) -> &ObservationKey {
        &self.keys[id.index()]
    }

    pub fn id_of(&self, key: &ObservationKey) -> Option<ObsId> {
        self.keys.iter().position(|k| k == key).map(|p| ObsId(p as u32))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn state_count(&self) -> usize {
        self.state_obs.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = ObsId> {
        (0..self.keys.len() as u32).map(ObsId)
    }

    /// States that share a given observation.
    pub fn states_of(&self, id: ObsId) -> Vec<StateId> {
        (0..self.state_obs.len()).filter(|&s| self.state_obs[s] == Some(id)).collect()
    }
}
