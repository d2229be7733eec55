//! The distillation update engine: one sampled episode per step, with the
//! policy-gradient term on R̂_t and the per-step loss gradient, for every
//! method in the family.

mod engine;
mod eval;
mod spec;

pub use engine::{
    episode_update, gated_loss_coefficient, run_episode, shaping_reward, td_teacher_bootstrap_step,
    DistillConfig, DistillState, Distiller, EpisodeUpdate, SampledEpisode, StepMetrics,
};
pub use eval::{episodic_cross_entropy, evaluate_return, evaluate_teacher_return};
pub use spec::{Control, IntrinsicReward, LossKind, MethodSpec, DEFAULT_GAMMA};

use thiserror::Error;

use crate::mdp::{MdpError, StateId};
use crate::tabular::{Matching, TabularError, XentDirection};
use crate::teacher::TeacherBundle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistillError {
    #[error("method {0} needs a teacher value table")]
    MissingTeacherValue(String),
    #[error("unknown method preset {0:?}")]
    UnknownPreset(String),
    #[error("teacher has {teacher} actions, environment has {env}")]
    ActionMismatch { teacher: usize, env: usize },
    #[error("parameters left the finite range at update {step}")]
    Diverged { step: u64 },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

/// What the episode does after a step: nothing (it ended) or a decision at
/// the successor with the student's distribution there.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Follow<'a> {
    pub state: StateId,
    pub action: Option<usize>,
    pub student_probs: &'a [f64],
}

/// Per-step r̂ and ℓ of one method against one teacher. Shared by the
/// sampled engine and the exact expected-update computation.
#[derive(Debug, Clone)]
pub(crate) struct StepTerms<'a> {
    pub spec: MethodSpec,
    pub teacher: &'a TeacherBundle,
    /// φ(π(a|o)) per teacher observation, empty where the teacher is silent.
    penalties: Vec<Vec<f64>>,
}

impl<'a> StepTerms<'a> {
    pub fn new(spec: MethodSpec, teacher: &'a TeacherBundle) -> Result<Self, DistillError> {
        if spec.needs_teacher_values() && teacher.values.is_none() {
            return Err(DistillError::MissingTeacherValue(spec.to_string()));
        }
        let m = teacher.matching;
        let penalties = teacher
            .observations
            .ids()
            .map(|o| {
                let silent = teacher.supervised.as_ref().is_some_and(|mask| !mask[o.index()]);
                if silent {
                    Vec::new()
                } else {
                    teacher.policy.probs(o).iter().map(|p| m.teacher_penalty(*p)).collect()
                }
            })
            .collect();
        Ok(Self { spec, teacher, penalties })
    }

    fn value(&self, state: Option<StateId>) -> f64 {
        self.teacher.value_after(state).unwrap_or(0.0)
    }

    fn penalties(&self, state: StateId) -> Option<&[f64]> {
        let p = &self.penalties[self.teacher.obs(state).index()];
        (!p.is_empty()).then_some(p.as_slice())
    }

    /// Forward matching loss ℓ(π(s)‖π_θ(s)); 0 where the teacher is silent.
    pub fn forward_loss(&self, state: StateId, student: &[f64]) -> f64 {
        let Some(target) = self.teacher.target(state) else {
            return 0.0;
        };
        match self.teacher.matching {
            Matching::CrossEntropy => target
                .iter()
                .zip(student)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, q)| -p * q.ln())
                .sum(),
            Matching::InformationPotential { scale } => {
                -scale * target.iter().zip(student).map(|(p, q)| p * q).sum::<f64>()
            }
        }
    }

    /// Reverse matching loss Σ_a π_θ(a) φ(π(a)).
    fn reverse_loss(&self, state: StateId, student: &[f64]) -> f64 {
        self.penalties(state).map_or(0.0, |c| c.iter().zip(student).map(|(c, q)| c * q).sum())
    }

    /// -φ(π(a|s)), the floored log teacher probability for cross-entropy matching.
    fn teacher_log_prob(&self, state: StateId, action: usize) -> f64 {
        self.penalties(state).map_or(0.0, |c| -c[action])
    }

    /// r̂_t, including the environment reward for +R methods. `next` is the
    /// successor state (`None` once the episode ended); `follow` describes
    /// the decision taken there, if any.
    pub fn reward(
        &self,
        state: StateId,
        action: usize,
        env_reward: f64,
        next: Option<StateId>,
        follow: Option<Follow<'_>>,
    ) -> f64 {
        let intrinsic = match self.spec.intrinsic {
            IntrinsicReward::None => 0.0,
            IntrinsicReward::LogTeacherProb => self.teacher_log_prob(state, action),
            IntrinsicReward::NegNextXent => {
                follow.map_or(0.0, |f| -self.forward_loss(f.state, f.student_probs))
            }
            IntrinsicReward::NextLogTeacherProb => follow
                .and_then(|f| f.action.map(|a| self.teacher_log_prob(f.state, a)))
                .unwrap_or(0.0),
            IntrinsicReward::TeacherVShaping => {
                shaping_reward(self.value(next), self.value(Some(state)), env_reward)
            }
            IntrinsicReward::TeacherVBootstrap => env_reward + self.spec.gamma * self.value(next),
        };
        if self.spec.add_env_reward {
            intrinsic + env_reward
        } else {
            intrinsic
        }
    }

    fn gate(&self, state: StateId, student_value: f64) -> f64 {
        gated_loss_coefficient(self.value(Some(state)), student_value)
    }

    /// ℓ at a step. `student_value` is the student critic at the step's
    /// observation (only read by the gated loss).
    pub fn loss(&self, state: StateId, student: &[f64], student_value: f64) -> f64 {
        match self.spec.loss {
            LossKind::None => 0.0,
            LossKind::XentTeacherGivenStudent => self.forward_loss(state, student),
            LossKind::XentStudentGivenTeacher => self.reverse_loss(state, student),
            LossKind::GatedXent => self.gate(state, student_value) * self.forward_loss(state, student),
        }
    }

    /// Adds `coefficient · ∇_logits ℓ` into `out`.
    pub fn add_loss_gradient(
        &self,
        state: StateId,
        student: &[f64],
        student_value: f64,
        coefficient: f64,
        out: &mut [f64],
    ) {
        let coefficient = match self.spec.loss {
            LossKind::None => return,
            LossKind::GatedXent => coefficient * self.gate(state, student_value),
            _ => coefficient,
        };
        if coefficient == 0.0 {
            return;
        }
        if self.spec.loss == LossKind::XentStudentGivenTeacher {
            let Some(c) = self.penalties(state) else {
                return;
            };
            let mean: f64 = c.iter().zip(student).map(|(c, q)| c * q).sum();
            for ((o, q), c) in out.iter_mut().zip(student).zip(c) {
                *o += coefficient * q * (c - mean);
            }
        } else if let Some(target) = self.teacher.target(state) {
            self.teacher.matching.add_gradient(
                XentDirection::TeacherGivenStudent,
                &target,
                student,
                coefficient,
                out,
            );
        }
    }

    pub fn has_loss(&self) -> bool {
        self.spec.loss != LossKind::None
    }
}
