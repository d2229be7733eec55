use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DistillError;

/// Policy that generates the trajectories updates are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Teacher,
    Student,
    Uniform,
}

/// Per-step auxiliary loss ℓ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    None,
    /// H×(π‖π_θ): cloning.
    XentTeacherGivenStudent,
    /// H×(π_θ‖π): argmax-seeking.
    XentStudentGivenTeacher,
    /// Cloning only where the teacher's value exceeds the student's.
    GatedXent,
}

/// Per-step intrinsic reward r̂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntrinsicReward {
    None,
    /// log π(a_t|τ_t).
    LogTeacherProb,
    /// -H×(π(τ_{t+1})‖π_θ(τ_{t+1})).
    NegNextXent,
    /// log π(a_{t+1}|τ_{t+1}).
    NextLogTeacherProb,
    /// r_t + V_π(τ_{t+1}) - V_π(τ_t); the environment reward is included.
    TeacherVShaping,
    /// r_t + γ V_π(τ_{t+1}) as a one-step target, not summed over time.
    TeacherVBootstrap,
}

/// One distillation method: control policy, loss, intrinsic reward, whether
/// the environment reward is added to r̂, and the return discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub control: Control,
    pub loss: LossKind,
    pub intrinsic: IntrinsicReward,
    pub add_env_reward: bool,
    pub gamma: f64,
}

pub const DEFAULT_GAMMA: f64 = 0.99;

/// Canonical preset names with their (control, loss, r̂, +R) tuples.
const PRESETS: &[(&str, Control, LossKind, IntrinsicReward, bool)] = &[
    ("teacher_distill", Control::Teacher, LossKind::XentTeacherGivenStudent, IntrinsicReward::None, false),
    ("on_policy_distill", Control::Student, LossKind::XentTeacherGivenStudent, IntrinsicReward::None, false),
    ("on_policy_distill_r", Control::Student, LossKind::XentTeacherGivenStudent, IntrinsicReward::None, true),
    ("entropy_reg", Control::Student, LossKind::None, IntrinsicReward::LogTeacherProb, false),
    ("entropy_reg_r", Control::Student, LossKind::None, IntrinsicReward::LogTeacherProb, true),
    ("n_distill", Control::Student, LossKind::XentTeacherGivenStudent, IntrinsicReward::NegNextXent, false),
    ("n_distill_r", Control::Student, LossKind::XentTeacherGivenStudent, IntrinsicReward::NegNextXent, true),
    ("exp_entropy_reg", Control::Student, LossKind::XentStudentGivenTeacher, IntrinsicReward::NextLogTeacherProb, false),
    ("exp_entropy_reg_r", Control::Student, LossKind::XentStudentGivenTeacher, IntrinsicReward::NextLogTeacherProb, true),
    ("teacher_v_reward", Control::Student, LossKind::None, IntrinsicReward::TeacherVShaping, false),
    ("td_teacher_bootstrap", Control::Student, LossKind::None, IntrinsicReward::TeacherVBootstrap, false),
    ("gated_distill_r", Control::Student, LossKind::GatedXent, IntrinsicReward::None, true),
    ("uniform_distill", Control::Uniform, LossKind::XentTeacherGivenStudent, IntrinsicReward::None, false),
    ("actor_critic", Control::Student, LossKind::None, IntrinsicReward::None, true),
];

impl MethodSpec {
    pub const PRESET_NAMES: [&'static str; 14] = [
        "teacher_distill",
        "on_policy_distill",
        "on_policy_distill_r",
        "entropy_reg",
        "entropy_reg_r",
        "n_distill",
        "n_distill_r",
        "exp_entropy_reg",
        "exp_entropy_reg_r",
        "teacher_v_reward",
        "td_teacher_bootstrap",
        "gated_distill_r",
        "uniform_distill",
        "actor_critic",
    ];

    pub fn preset(name: &str) -> Result<Self, DistillError> {
        PRESETS
            .iter()
            .find(|p| p.0 == name)
            .map(|&(_, control, loss, intrinsic, add_env_reward)| Self {
                control,
                loss,
                intrinsic,
                add_env_reward,
                gamma: DEFAULT_GAMMA,
            })
            .ok_or_else(|| DistillError::UnknownPreset(name.to_string()))
    }

    /// Canonical name of the matching preset, ignoring the discount.
    pub fn name(&self) -> Option<&'static str> {
        PRESETS
            .iter()
            .find(|p| {
                p.1 == self.control && p.2 == self.loss && p.3 == self.intrinsic && p.4 == self.add_env_reward
            })
            .map(|p| p.0)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Whether a policy-gradient term is present.
    pub fn has_rewards(&self) -> bool {
        self.intrinsic != IntrinsicReward::None || self.add_env_reward
    }

    pub fn needs_teacher_values(&self) -> bool {
        matches!(self.intrinsic, IntrinsicReward::TeacherVShaping | IntrinsicReward::TeacherVBootstrap)
            || self.loss == LossKind::GatedXent
    }

    /// Discount used to sum r̂ into R̂_t. Bootstrap targets are not summed.
    pub fn return_discount(&self) -> f64 {
        match self.intrinsic {
            IntrinsicReward::TeacherVBootstrap => 0.0,
            _ => self.gamma,
        }
    }
}

impl FromStr for MethodSpec {
    type Err = DistillError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::preset(s)
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => f.write_str(n),
            None => write!(f, "{self:?}"),
        }
    }
}
