use nalgebra::{DMatrix, DVector};

use super::VerifyError;
use crate::distill::{Control, DistillError, IntrinsicReward, LossKind, MethodSpec};
use crate::distill::{Follow, StepTerms};
use crate::mdp::{Environment, ObsId, ObservationSpace, Outcome, StateId};
use crate::tabular::{action_probabilities, PolicyTable, ValueTable};
use crate::teacher::TeacherBundle;

/// Steps after which leftover episode mass must be negligible.
pub const DEFAULT_HORIZON: usize = 100_000;
pub const HORIZON_MASS_TOLERANCE: f64 = 1e-10;

/// Maps a flat parameter vector onto student logits. Logits not listed are
/// pinned at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Parametrization {
    obs_count: usize,
    action_count: usize,
    slots: Vec<(ObsId, usize)>,
}

impl Parametrization {
    /// Every logit of every observation, observation-major.
    pub fn full(obs_count: usize, action_count: usize) -> Self {
        let slots = (0..obs_count as u32)
            .flat_map(|o| (0..action_count).map(move |a| (ObsId(o), a)))
            .collect();
        Self { obs_count, action_count, slots }
    }

    pub fn pinned(obs_count: usize, action_count: usize, slots: Vec<(ObsId, usize)>) -> Self {
        Self { obs_count, action_count, slots }
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn slots(&self) -> &[(ObsId, usize)] {
        &self.slots
    }

    pub fn policy(&self, theta: &[f64]) -> Result<PolicyTable, VerifyError> {
        if theta.len() != self.dim() {
            return Err(VerifyError::Dimension { expected: self.dim(), got: theta.len() });
        }
        let mut p = PolicyTable::new(self.action_count);
        for o in 0..self.obs_count as u32 {
            p.row_mut(ObsId(o));
        }
        for ((o, a), v) in self.slots.iter().zip(theta) {
            p.row_mut(*o)[*a] = *v;
        }
        Ok(p)
    }

    pub fn theta_of(&self, policy: &PolicyTable) -> Vec<f64> {
        self.slots.iter().map(|(o, a)| policy.logits(*o).map_or(0.0, |l| l[*a])).collect()
    }

    /// Restricts a dense observation-major logit vector to the parameters.
    pub fn project(&self, dense: &[f64]) -> Vec<f64> {
        self.slots.iter().map(|(o, a)| dense[o.index() * self.action_count + a]).collect()
    }
}

/// Transition matrix of the decision states under a state-conditional
/// control, restricted to the listed states.
fn transition_matrix(
    states: &[StateId],
    index: &[Option<usize>],
    outcomes: &[Vec<Vec<Outcome>>],
    control: &[Vec<f64>],
) -> DMatrix<f64> {
    let n = states.len();
    let mut p = DMatrix::zeros(n, n);
    for (k, ctrl) in control.iter().enumerate() {
        for (a, ca) in ctrl.iter().enumerate() {
            if *ca == 0.0 {
                continue;
            }
            for o in &outcomes[k][a] {
                if let Some(next) = o.next {
                    let j = index[next].expect("successors are decision states");
                    p[(k, j)] += ca * o.prob;
                }
            }
        }
    }
    p
}

/// Expected visit counts from the initial state, `(I - Pᵀ) d = e_0`.
fn visit_counts(p: &DMatrix<f64>, start: usize, horizon: usize) -> Result<DVector<f64>, VerifyError> {
    let n = p.nrows();
    let pt = p.transpose();
    let mut mass = DVector::zeros(n);
    mass[start] = 1.0;
    let mut remaining = 1.0;
    for _ in 0..horizon {
        mass = &pt * mass;
        remaining = mass.sum();
        if remaining <= HORIZON_MASS_TOLERANCE {
            break;
        }
    }
    if remaining > HORIZON_MASS_TOLERANCE {
        return Err(VerifyError::HorizonUnbounded { horizon, remaining });
    }
    let mut e = DVector::zeros(n);
    e[start] = 1.0;
    let a = DMatrix::identity(n, n) - pt;
    a.lu().solve(&e).ok_or(VerifyError::HorizonUnbounded { horizon, remaining })
}

/// Expected visit count of every state when acting with `control`.
pub fn occupancy<E, F>(env: &E, control: F, horizon: usize) -> Result<Vec<f64>, VerifyError>
where
    E: Environment + ?Sized,
    F: Fn(StateId) -> Vec<f64>,
{
    let states = env.decision_states();
    let mut index = vec![None; env.state_count()];
    for (k, s) in states.iter().enumerate() {
        index[*s] = Some(k);
    }
    let outcomes = states
        .iter()
        .map(|s| (0..env.action_count()).map(|a| env.outcomes(*s, a)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let ctrl: Vec<Vec<f64>> = states.iter().map(|s| control(*s)).collect();
    let p = transition_matrix(&states, &index, &outcomes, &ctrl);
    let start = index[env.initial_state()].expect("initial state is a decision state");
    let d = visit_counts(&p, start, horizon)?;
    let mut out = vec![0.0; env.state_count()];
    for (k, s) in states.iter().enumerate() {
        out[*s] = d[k];
    }
    Ok(out)
}

/// The expected update field θ ↦ E_q[Σ_t ∇log π_θ(a_t|τ_t) R̂_t - ∇ℓ_t] of
/// one method, evaluated exactly by dynamic programming over the states.
/// The returned vector is the parameter velocity: the engine's mean update
/// before the learning rate.
#[derive(Debug, Clone)]
pub struct ExactDynamics<'a, E: Environment + ?Sized> {
    env: &'a E,
    observations: &'a ObservationSpace,
    teacher: &'a TeacherBundle,
    terms: StepTerms<'a>,
    parametrization: Parametrization,
    student_values: ValueTable,
    horizon: usize,
    states: Vec<StateId>,
    index: Vec<Option<usize>>,
    outcomes: Vec<Vec<Vec<Outcome>>>,
}

struct Evaluated {
    student: Vec<Vec<f64>>,
    control: Vec<Vec<f64>>,
    transitions: DMatrix<f64>,
    visits: DVector<f64>,
}

impl<'a, E: Environment + ?Sized> ExactDynamics<'a, E> {
    pub fn new(
        env: &'a E,
        observations: &'a ObservationSpace,
        teacher: &'a TeacherBundle,
        spec: MethodSpec,
        parametrization: Parametrization,
    ) -> Result<Self, VerifyError> {
        if teacher.action_count() != env.action_count() {
            return Err(DistillError::ActionMismatch { teacher: teacher.action_count(), env: env.action_count() }.into());
        }
        let states = env.decision_states();
        let mut index = vec![None; env.state_count()];
        for (k, s) in states.iter().enumerate() {
            index[*s] = Some(k);
        }
        let outcomes = states
            .iter()
            .map(|s| (0..env.action_count()).map(|a| env.outcomes(*s, a)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            env,
            observations,
            teacher,
            terms: StepTerms::new(spec, teacher)?,
            parametrization,
            student_values: ValueTable::new(),
            horizon: DEFAULT_HORIZON,
            states,
            index,
            outcomes,
        })
    }

    /// Student critic read by the gated loss (held fixed).
    pub fn with_student_values(mut self, values: ValueTable) -> Self {
        self.student_values = values;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn dim(&self) -> usize {
        self.parametrization.dim()
    }

    pub fn spec(&self) -> &MethodSpec {
        &self.terms.spec
    }

    pub fn parametrization(&self) -> &Parametrization {
        &self.parametrization
    }

    fn evaluate(&self, policy: &PolicyTable) -> Result<Evaluated, VerifyError> {
        let actions = self.env.action_count();
        let student: Vec<Vec<f64>> =
            self.states.iter().map(|s| action_probabilities(policy, self.observations.obs(*s))).collect();
        let control: Vec<Vec<f64>> = match self.terms.spec.control {
            Control::Student => student.clone(),
            Control::Uniform => vec![vec![1.0 / actions as f64; actions]; self.states.len()],
            Control::Teacher => self.states.iter().map(|s| self.teacher.control_probs(*s).into_owned()).collect(),
        };
        let transitions = transition_matrix(&self.states, &self.index, &self.outcomes, &control);
        let start = self.index[self.env.initial_state()].expect("initial state is a decision state");
        let visits = visit_counts(&transitions, start, self.horizon)?;
        Ok(Evaluated { student, control, transitions, visits })
    }

    /// Expected r̂ of taking `action` in the k-th state, averaged over the
    /// successor and the decision made there.
    fn expected_step_reward(&self, ev: &Evaluated, k: usize, action: usize) -> f64 {
        let s = self.states[k];
        let needs_next_action = self.terms.spec.intrinsic == IntrinsicReward::NextLogTeacherProb;
        let mut total = 0.0;
        for o in &self.outcomes[k][action] {
            let r = match o.next {
                None => self.terms.reward(s, action, o.reward, None, None),
                Some(next) => {
                    let j = self.index[next].expect("successors are decision states");
                    let probs = &ev.student[j];
                    if needs_next_action {
                        ev.control[j]
                            .iter()
                            .enumerate()
                            .filter(|(_, c)| **c > 0.0)
                            .map(|(a2, c)| {
                                let follow = Follow { state: next, action: Some(a2), student_probs: probs };
                                c * self.terms.reward(s, action, o.reward, Some(next), Some(follow))
                            })
                            .sum()
                    } else {
                        let follow = Follow { state: next, action: None, student_probs: probs };
                        self.terms.reward(s, action, o.reward, Some(next), Some(follow))
                    }
                }
            };
            total += o.prob * r;
        }
        total
    }

    /// Dense observation-major velocity for a full student policy table.
    pub fn dense_field(&self, policy: &PolicyTable) -> Result<Vec<f64>, VerifyError> {
        let ev = self.evaluate(policy)?;
        let actions = self.env.action_count();
        let n = self.states.len();
        let mut field = vec![0.0; self.observations.len() * actions];
        let spec = &self.terms.spec;
        let mut q_hat = vec![vec![0.0; actions]; n];
        if spec.has_rewards() {
            let discount = spec.return_discount();
            let mut step_reward = vec![vec![0.0; actions]; n];
            let mut mean_reward = DVector::zeros(n);
            for k in 0..n {
                for a in 0..actions {
                    if ev.control[k][a] > 0.0 {
                        step_reward[k][a] = self.expected_step_reward(&ev, k, a);
                        mean_reward[k] += ev.control[k][a] * step_reward[k][a];
                    }
                }
            }
            let values = if discount == 0.0 {
                mean_reward
            } else {
                let a = DMatrix::identity(n, n) - &ev.transitions * discount;
                a.lu().solve(&mean_reward).ok_or(VerifyError::HorizonUnbounded {
                    horizon: self.horizon,
                    remaining: f64::NAN,
                })?
            };
            for k in 0..n {
                for a in 0..actions {
                    if ev.control[k][a] == 0.0 {
                        continue;
                    }
                    let continuation: f64 = self.outcomes[k][a]
                        .iter()
                        .filter_map(|o| o.next.map(|s| o.prob * values[self.index[s].unwrap()]))
                        .sum();
                    q_hat[k][a] = step_reward[k][a] + discount * continuation;
                }
            }
        }
        for (k, &s) in self.states.iter().enumerate() {
            let o = self.observations.obs(s);
            let row = &mut field[o.index() * actions..(o.index() + 1) * actions];
            let w = ev.visits[k];
            let q = &ev.student[k];
            if spec.has_rewards() {
                for (a, ca) in ev.control[k].iter().enumerate() {
                    if *ca == 0.0 {
                        continue;
                    }
                    let coef = w * ca * q_hat[k][a];
                    for (b, r) in row.iter_mut().enumerate() {
                        let indicator = if a == b { 1.0 } else { 0.0 };
                        *r += coef * (indicator - q[b]);
                    }
                }
            }
            self.terms.add_loss_gradient(s, q, self.student_values.get(o), -w, row);
        }
        Ok(field)
    }

    /// Velocity in parameter space.
    pub fn field(&self, theta: &[f64]) -> Result<Vec<f64>, VerifyError> {
        let policy = self.parametrization.policy(theta)?;
        Ok(self.parametrization.project(&self.dense_field(&policy)?))
    }

    /// Σ_s d(s) f(s, π_θ(s), q(s)) with d the expected visit counts under
    /// the method's control.
    pub fn expected_per_state<F>(&self, theta: &[f64], f: F) -> Result<f64, VerifyError>
    where
        F: Fn(StateId, &[f64], &[f64]) -> f64,
    {
        let policy = self.parametrization.policy(theta)?;
        let ev = self.evaluate(&policy)?;
        Ok(self
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| ev.visits[k] * f(*s, &ev.student[k], &ev.control[k]))
            .sum())
    }

    /// E_q[Σ_t ℓ(π(τ_t)‖π_θ(τ_t))] with the forward matching loss.
    pub fn expected_forward_loss(&self, theta: &[f64]) -> Result<f64, VerifyError> {
        self.expected_per_state(theta, |s, q, _| self.terms.forward_loss(s, q))
    }

    /// E_{π_θ}[Σ_t φ(π(a_t|τ_t))]: the negative log teacher probability of
    /// the actions taken, for cross-entropy matching.
    pub fn expected_teacher_penalty(&self, theta: &[f64]) -> Result<f64, VerifyError> {
        let spec = MethodSpec { loss: LossKind::XentStudentGivenTeacher, ..self.terms.spec };
        let terms = StepTerms::new(spec, self.teacher)?;
        self.expected_per_state(theta, |s, q, _| terms.loss(s, q, 0.0))
    }

    /// E_q[Σ_t r_t], undiscounted.
    pub fn expected_env_return(&self, theta: &[f64]) -> Result<f64, VerifyError> {
        self.expected_per_state(theta, |s, _, c| {
            let k = self.index[s].unwrap();
            c.iter()
                .enumerate()
                .filter(|(_, ca)| **ca > 0.0)
                .map(|(a, ca)| ca * self.outcomes[k][a].iter().map(|o| o.prob * o.reward).sum::<f64>())
                .sum()
        })
    }

    /// The scalar the method descends, when it has one (undiscounted).
    /// On-policy cloning has none.
    pub fn objective(&self, theta: &[f64]) -> Result<Option<f64>, VerifyError> {
        let spec = self.terms.spec;
        let base = match (spec.control, spec.loss, spec.intrinsic) {
            (Control::Student, LossKind::XentTeacherGivenStudent, IntrinsicReward::None) => return Ok(None),
            (_, LossKind::XentTeacherGivenStudent, IntrinsicReward::None | IntrinsicReward::NegNextXent) => {
                self.expected_forward_loss(theta)?
            }
            (Control::Student, LossKind::None, IntrinsicReward::LogTeacherProb)
            | (Control::Student, LossKind::XentStudentGivenTeacher, IntrinsicReward::NextLogTeacherProb) => {
                self.expected_teacher_penalty(theta)?
            }
            (Control::Student, LossKind::None, IntrinsicReward::TeacherVShaping) => {
                -self.expected_env_return(theta)?
            }
            (Control::Student, LossKind::None, IntrinsicReward::None) => 0.0,
            _ => return Ok(None),
        };
        Ok(Some(if spec.add_env_reward { base - self.expected_env_return(theta)? } else { base }))
    }
}
