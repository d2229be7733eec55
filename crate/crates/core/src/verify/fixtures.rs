use super::{ExactDynamics, Parametrization, VerifyError};
use crate::distill::MethodSpec;
use crate::mdp::{Cell, Coord, CounterexampleMdp, Environment, GridWorld, ObservationKey, ObservationSpace};
use crate::tabular::{DistributionTable, Matching, QTable, ValueTable};
use crate::teacher::{evaluate_policy, extract_policy, value_iteration, TeacherBundle, TeacherProvenance};

/// An environment with a student view, a teacher and the parameters the
/// exact field is taken over.
#[derive(Debug, Clone)]
pub struct Fixture<E> {
    pub env: E,
    pub observations: ObservationSpace,
    pub teacher: TeacherBundle,
    pub parametrization: Parametrization,
}

impl<E: Environment> Fixture<E> {
    /// Exact dynamics of `spec`, in theory mode (γ = 1).
    pub fn dynamics(&self, spec: MethodSpec) -> Result<ExactDynamics<'_, E>, VerifyError> {
        ExactDynamics::new(
            &self.env,
            &self.observations,
            &self.teacher,
            spec.with_gamma(1.0),
            self.parametrization.clone(),
        )
    }
}

/// Teacher critic from an exact undiscounted evaluation of its control policy.
fn exact_values<E: Environment>(env: &E, teacher: &TeacherBundle) -> Result<ValueTable, VerifyError> {
    let v = evaluate_policy(env, |s| teacher.control_probs(s).into_owned(), 1.0)?;
    let mut values = ValueTable::new();
    for s in env.decision_states() {
        values.set(teacher.obs(s), v[s]);
    }
    Ok(values)
}

/// Teacher of the oscillation game: always R at s_R, silent elsewhere, with
/// the linear matching loss φ(p) = -4p and its exact critic.
pub fn counterexample_teacher() -> Result<TeacherBundle, VerifyError> {
    let env = CounterexampleMdp::new();
    let observations = ObservationSpace::full(&env);
    let right = observations.obs(CounterexampleMdp::RIGHT);
    let mut policy = DistributionTable::new(2);
    policy.set(right, vec![0.0, 1.0]);
    let teacher = TeacherBundle::new(observations, policy, TeacherProvenance::named("counterexample"))
        .with_matching(Matching::InformationPotential { scale: 4.0 })
        .with_supervision(&[right]);
    let values = exact_values(&env, &teacher)?;
    Ok(teacher.with_values(values))
}

/// The oscillation game with two parameters: the root's R logit and the
/// shared second-step L logit. All other logits stay at 0.
pub fn counterexample_fixture() -> Result<Fixture<CounterexampleMdp>, VerifyError> {
    let env = CounterexampleMdp::new();
    let observations = env.student_observations();
    let root = observations.id_of(&ObservationKey::new("root")).expect("root observation");
    let second = observations.id_of(&ObservationKey::new("second")).expect("second observation");
    let parametrization = Parametrization::pinned(observations.len(), 2, vec![(root, 1), (second, 0)]);
    Ok(Fixture { env, observations, teacher: counterexample_teacher()?, parametrization })
}

/// Boltzmann (T = 1) teacher on the optimal undiscounted Q-values of a
/// fully observed grid, with its exact critic; every student logit free.
fn boltzmann_fixture(env: GridWorld) -> Result<Fixture<GridWorld>, VerifyError> {
    let observations = ObservationSpace::full(&env);
    let vi = value_iteration(&env, 1.0, 1e-13, 100_000)?;
    let actions = env.action_count();
    let mut q = QTable::new(actions);
    for s in env.decision_states() {
        for a in 0..actions {
            q.set(observations.obs(s), a, vi.q[s][a]);
        }
    }
    let policy = extract_policy(&q, &observations, 1.0);
    let mut teacher = TeacherBundle::new(observations.clone(), policy, TeacherProvenance::named("boltzmann_q"));
    teacher.provenance.temperature = Some(1.0);
    let values = exact_values(&env, &teacher)?;
    let parametrization = Parametrization::full(observations.len(), actions);
    Ok(Fixture { env, observations, teacher: teacher.with_values(values), parametrization })
}

/// A 3×1 corridor: -1 on the left cell, +1 on the right one, start in the
/// middle, episodes cut with probability 0.4 per step.
pub fn three_state_fixture() -> Result<Fixture<GridWorld>, VerifyError> {
    let env = GridWorld::open(3, 1)
        .with_cell(Coord::new(1, 1), Cell::Free { reward: -1.0, terminal: false })?
        .with_cell(Coord::new(3, 1), Cell::Free { reward: 1.0, terminal: false })?
        .with_dynamics(0.1, 0.4)?;
    boltzmann_fixture(env)
}

/// A 3×3 room with a wall, a -1 cell and a +1 exit in the top-right corner,
/// episodes cut with probability 0.2 per step.
pub fn three_by_three_fixture() -> Result<Fixture<GridWorld>, VerifyError> {
    let env = GridWorld::open(3, 3)
        .with_cell(Coord::new(3, 3), Cell::Free { reward: 1.0, terminal: true })?
        .with_cell(Coord::new(1, 1), Cell::Free { reward: -1.0, terminal: false })?
        .with_cell(Coord::new(2, 3), Cell::Wall)?
        .with_dynamics(0.1, 0.2)?;
    boltzmann_fixture(env)
}
