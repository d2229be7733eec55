//! Teachers: Q-learning with greedy or Boltzmann extraction, actor-critic
//! teachers, corruption, value estimation and exact solvers used as oracles.

mod actor_critic;
mod bundle;
mod corrupt;
mod exact;
mod q_learning;

pub use actor_critic::{train_actor_critic, ActorCriticConfig, CriticMode};
pub use bundle::{TeacherBundle, TeacherDoc, TeacherProvenance};
pub use corrupt::{collect_visited, corrupt_teacher, estimate_value, CorruptedTeacher};
pub use exact::{evaluate_policy, value_iteration, ValueIteration};
pub use q_learning::{extract_policy, train_q_learning, QLearningConfig};

use thiserror::Error;

use crate::mdp::{CorridorWorld, Environment, MdpError, ObservationSpace, LEFT, RIGHT};
use crate::tabular::{DistributionTable, TabularError, ValueTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeacherError {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error("policy evaluation is singular: the policy does not terminate with probability one")]
    NonTerminating,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn corridor_teacher(world: &CorridorWorld, gamma: f64, action: usize, method: &str) -> TeacherBundle {
    let space = ObservationSpace::full(world);
    let mut policy = DistributionTable::new(2);
    let mut values = ValueTable::new();
    for s in world.decision_states() {
        let o = space.obs(s);
        let mut p = vec![0.0; 2];
        p[action] = 1.0;
        policy.set(o, p);
        values.set(o, world.always_right_value(s, gamma));
    }
    TeacherBundle::new(space, policy, TeacherProvenance::named(method)).with_values(values)
}

/// Always-right teacher with its own (optimal) value.
pub fn make_optimal_corridor_teacher(world: &CorridorWorld, gamma: f64) -> TeacherBundle {
    corridor_teacher(world, gamma, RIGHT, "corridor_optimal")
}

/// Always-left teacher bundled with the optimal policy's value table.
pub fn make_adversarial_corridor_teacher(world: &CorridorWorld, gamma: f64) -> TeacherBundle {
    corridor_teacher(world, gamma, LEFT, "corridor_adversarial")
}
