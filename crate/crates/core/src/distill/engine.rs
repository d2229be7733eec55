use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Control, DistillError, Follow, MethodSpec, StepTerms};
use crate::episode::{sample_index, Step, Trajectory, DEFAULT_MAX_EPISODE_LEN};
use crate::mdp::{Environment, ObsId, ObservationSpace};
use crate::tabular::{apply_to_policy, PolicyTable, ProbabilityCache, UpdateAccumulator, ValueTable};
use crate::teacher::TeacherBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub learning_rate: f64,
    pub max_episode_len: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, max_episode_len: DEFAULT_MAX_EPISODE_LEN }
    }
}

/// Student parameters: policy logits, the critic used as a baseline (and by
/// the gate), and the number of updates applied.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillState {
    pub policy: PolicyTable,
    pub baseline: ValueTable,
    pub steps: u64,
}

impl DistillState {
    pub fn new(action_count: usize) -> Self {
        Self { policy: PolicyTable::new(action_count), baseline: ValueTable::new(), steps: 0 }
    }
}

/// An episode together with the student's action distribution at every
/// step, taken from the parameters it was sampled under.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledEpisode {
    pub trajectory: Trajectory,
    action_count: usize,
    student_probs: Vec<f64>,
}

impl SampledEpisode {
    /// Pairs a given trajectory with the student's distributions along it.
    pub fn from_trajectory(trajectory: Trajectory, observations: &ObservationSpace, policy: &PolicyTable) -> Self {
        let action_count = policy.action_count();
        let mut cache = ProbabilityCache::new(policy);
        let mut student_probs = Vec::with_capacity(trajectory.len() * action_count);
        for step in &trajectory.steps {
            student_probs.extend_from_slice(cache.get(observations.obs(step.state)));
        }
        Self { trajectory, action_count, student_probs }
    }

    pub fn student_probs(&self, t: usize) -> &[f64] {
        &self.student_probs[t * self.action_count..(t + 1) * self.action_count]
    }
}

/// Samples one episode under `control`. The teacher is required for
/// teacher control only.
pub fn run_episode<E, R>(
    env: &E,
    observations: &ObservationSpace,
    policy: &PolicyTable,
    teacher: Option<&TeacherBundle>,
    control: Control,
    max_len: usize,
    rng: &mut R,
) -> Result<SampledEpisode, DistillError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    run_episode_cached(env, observations, &mut ProbabilityCache::new(policy), teacher, control, max_len, rng)
}

/// [`run_episode`] reading the student's distributions from `cache`, which
/// may be shared by many episodes of the same frozen policy.
pub(crate) fn run_episode_cached<E, R>(
    env: &E,
    observations: &ObservationSpace,
    cache: &mut ProbabilityCache<'_>,
    teacher: Option<&TeacherBundle>,
    control: Control,
    max_len: usize,
    rng: &mut R,
) -> Result<SampledEpisode, DistillError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let actions = env.action_count();
    let uniform = vec![1.0 / actions as f64; actions];
    let mut trajectory = Trajectory::default();
    let mut student_probs = Vec::new();
    let mut state = env.initial_state();
    loop {
        if trajectory.steps.len() >= max_len {
            trajectory.truncated = true;
            break;
        }
        let probs = cache.get(observations.obs(state));
        student_probs.extend_from_slice(probs);
        let action = match control {
            Control::Student => sample_index(probs, rng),
            Control::Uniform => sample_index(&uniform, rng),
            Control::Teacher => {
                let t = teacher.expect("teacher control needs a teacher");
                sample_index(&t.control_probs(state), rng)
            }
        };
        let tr = env.sample(state, action, rng)?;
        trajectory.steps.push(Step { state, action, reward: tr.reward, next: tr.next });
        match tr.next {
            Some(n) => state = n,
            None => break,
        }
    }
    Ok(SampledEpisode { trajectory, action_count: actions, student_probs })
}

/// Diagnostics of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub episode_len: usize,
    pub env_return: f64,
    pub mean_abs_reward: f64,
}

/// The per-episode update before the learning rate: logit adjustments in
/// the ascent direction, and critic targets in visit order.
#[derive(Debug, Clone, Default)]
pub struct EpisodeUpdate {
    pub logits: UpdateAccumulator,
    pub baseline_targets: Vec<(ObsId, f64)>,
    pub metrics: StepMetrics,
}

/// One method bound to an environment, the student's observations and a
/// teacher.
#[derive(Debug, Clone)]
pub struct Distiller<'a, E: Environment + ?Sized> {
    env: &'a E,
    observations: &'a ObservationSpace,
    teacher: &'a TeacherBundle,
    terms: StepTerms<'a>,
    config: DistillConfig,
}

impl<'a, E: Environment + ?Sized> Distiller<'a, E> {
    pub fn new(
        env: &'a E,
        observations: &'a ObservationSpace,
        teacher: &'a TeacherBundle,
        spec: MethodSpec,
        config: DistillConfig,
    ) -> Result<Self, DistillError> {
        if teacher.action_count() != env.action_count() {
            return Err(DistillError::ActionMismatch { teacher: teacher.action_count(), env: env.action_count() });
        }
        Ok(Self { env, observations, teacher, terms: StepTerms::new(spec, teacher)?, config })
    }

    pub fn spec(&self) -> &MethodSpec {
        &self.terms.spec
    }

    pub fn config(&self) -> &DistillConfig {
        &self.config
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: &DistillState, rng: &mut R) -> Result<SampledEpisode, DistillError> {
        run_episode(
            self.env,
            self.observations,
            &state.policy,
            Some(self.teacher),
            self.terms.spec.control,
            self.config.max_episode_len,
            rng,
        )
    }

    /// The update an episode prescribes, without applying it.
    pub fn episode_update(&self, state: &DistillState, episode: &SampledEpisode) -> EpisodeUpdate {
        let steps = &episode.trajectory.steps;
        let n = steps.len();
        let spec = &self.terms.spec;
        let mut rewards = vec![0.0; n];
        for (t, step) in steps.iter().enumerate() {
            let follow = (t + 1 < n).then(|| Follow {
                state: steps[t + 1].state,
                action: Some(steps[t + 1].action),
                student_probs: episode.student_probs(t + 1),
            });
            rewards[t] = self.terms.reward(step.state, step.action, step.reward, step.next, follow);
        }
        let mut update = EpisodeUpdate {
            metrics: StepMetrics {
                episode_len: n,
                env_return: episode.trajectory.total_reward(),
                mean_abs_reward: if n == 0 { 0.0 } else { rewards.iter().map(|r| r.abs()).sum::<f64>() / n as f64 },
            },
            ..EpisodeUpdate::default()
        };
        let discount = spec.return_discount();
        let mut to_go = 0.0;
        let mut returns = vec![0.0; n];
        for t in (0..n).rev() {
            to_go = rewards[t] + discount * to_go;
            returns[t] = to_go;
        }
        let actions = self.env.action_count();
        for (t, step) in steps.iter().enumerate() {
            let o = self.observations.obs(step.state);
            let probs = episode.student_probs(t);
            let v = state.baseline.get(o);
            if spec.has_rewards() {
                update.logits.add_logprob_gradient(o, probs, step.action, returns[t] - v);
                update.baseline_targets.push((o, returns[t]));
            }
            if self.terms.has_loss() {
                let row = update.logits.logit_row(o, actions);
                self.terms.add_loss_gradient(step.state, probs, v, -1.0, row);
            }
        }
        update
    }

    /// θ ← θ + lr·Δθ; the critic moves toward each target in visit order.
    pub fn apply(&self, state: &mut DistillState, mut update: EpisodeUpdate) {
        let lr = self.config.learning_rate;
        apply_to_policy(&mut update.logits, &mut state.policy, lr);
        for (o, target) in update.baseline_targets {
            let v = state.baseline.get(o);
            state.baseline.set(o, v + lr * (target - v));
        }
        state.steps += 1;
    }

    /// Whether applying `update` keeps every touched logit and critic value finite.
    pub fn stays_finite(&self, state: &DistillState, update: &EpisodeUpdate) -> bool {
        let lr = self.config.learning_rate;
        let logits_ok = update.logits.logit_entries().all(|(o, delta)| match state.policy.logits(o) {
            Some(row) => row.iter().zip(delta).all(|(r, d)| (r + lr * d).is_finite()),
            None => delta.iter().all(|d| (lr * d).is_finite()),
        });
        logits_ok && update.baseline_targets.iter().all(|(_, t)| t.is_finite())
    }

    /// One distillation step: sample, compute, apply. A step that would
    /// leave the finite range is refused and the state is left untouched.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut DistillState, rng: &mut R) -> Result<StepMetrics, DistillError> {
        let episode = self.sample(state, rng)?;
        let update = self.episode_update(state, &episode);
        if !self.stays_finite(state, &update) {
            return Err(DistillError::Diverged { step: state.steps });
        }
        let metrics = update.metrics;
        self.apply(state, update);
        Ok(metrics)
    }
}

/// Standalone form of [`Distiller::episode_update`].
pub fn episode_update<E: Environment + ?Sized>(
    distiller: &Distiller<'_, E>,
    state: &DistillState,
    episode: &SampledEpisode,
) -> EpisodeUpdate {
    distiller.episode_update(state, episode)
}

/// One step of the bootstrapped policy gradient with target r_t + γ V_π(s_{t+1}).
pub fn td_teacher_bootstrap_step<E, R>(
    env: &E,
    observations: &ObservationSpace,
    state: &mut DistillState,
    teacher: &TeacherBundle,
    learning_rate: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<StepMetrics, DistillError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let spec = MethodSpec::preset("td_teacher_bootstrap")?.with_gamma(gamma);
    let config = DistillConfig { learning_rate, ..DistillConfig::default() };
    Distiller::new(env, observations, teacher, spec, config)?.step(state, rng)
}

/// 1 iff the teacher's value strictly exceeds the student's.
pub fn gated_loss_coefficient(teacher_value: f64, student_value: f64) -> f64 {
    if teacher_value > student_value {
        1.0
    } else {
        0.0
    }
}

/// V_π(s_{t+1}) - V_π(s_t) + r_t. Terminal successors are worth 0.
pub fn shaping_reward(teacher_value_next: f64, teacher_value: f64, env_reward: f64) -> f64 {
    teacher_value_next - teacher_value + env_reward
}
