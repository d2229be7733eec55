use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use distill_core::distill::{MethodSpec, DEFAULT_GAMMA};
use distill_core::episode::DEFAULT_MAX_EPISODE_LEN;
use distill_core::mdp::{GenParams, ObsMode};
use distill_core::teacher::{ActorCriticConfig, QLearningConfig};

use crate::HarnessError;

/// Where the environments of a sweep come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldSource {
    /// `count` generated grids with seeds `first_seed..first_seed + count`.
    Random {
        #[serde(default = "default_count")]
        count: usize,
        #[serde(default)]
        first_seed: u64,
        #[serde(default = "default_side")]
        width: usize,
        #[serde(default = "default_side")]
        height: usize,
        #[serde(default)]
        params: GenParams,
        /// Total actions: 4 moves, the rest no-ops.
        #[serde(default = "default_action_count")]
        action_count: usize,
    },
    Corridor {
        half_length: usize,
        #[serde(default)]
        p_term: f64,
    },
    Counterexample,
}

impl WorldSource {
    pub fn count(&self) -> usize {
        match self {
            WorldSource::Random { count, .. } => *count,
            _ => 1,
        }
    }

    /// Seed recorded in the CSV for the i-th world.
    pub fn mdp_seed(&self, index: usize) -> u64 {
        match self {
            WorldSource::Random { first_seed, .. } => first_seed + index as u64,
            _ => index as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherMethod {
    QLearning,
    ValueIteration,
    ActorCritic,
    CorridorOptimal,
    CorridorAdversarial,
    Counterexample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSource {
    /// Exact policy evaluation with the sweep's γ.
    Exact,
    /// Every-visit Monte Carlo over `value_episodes` teacher rollouts.
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherRecipe {
    pub method: TeacherMethod,
    /// Boltzmann temperature for Q-based teachers; 0 is greedy.
    pub temperature: f64,
    /// Fraction of visited observations whose best action is swapped.
    pub corruption: f64,
    pub values: ValueSource,
    pub value_episodes: usize,
    pub q_learning: QLearningConfig,
    pub actor_critic: ActorCriticConfig,
}

impl Default for TeacherRecipe {
    fn default() -> Self {
        Self {
            method: TeacherMethod::QLearning,
            temperature: 0.0,
            corruption: 0.0,
            values: ValueSource::Exact,
            value_episodes: 1000,
            q_learning: QLearningConfig::default(),
            actor_critic: ActorCriticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    /// Master seed; every task seed derives from it.
    #[serde(default)]
    pub seed: u64,
    pub world: WorldSource,
    #[serde(default)]
    pub observation: ObsMode,
    #[serde(default)]
    pub teacher: TeacherRecipe,
    pub methods: Vec<String>,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Episodes for the teacher's reference return, once per world.
    #[serde(default = "default_teacher_eval_episodes")]
    pub teacher_eval_episodes: usize,
    #[serde(default = "default_run_seeds")]
    pub run_seeds: Vec<u64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_max_episode_len")]
    pub max_episode_len: usize,
}

fn default_count() -> usize {
    100
}
fn default_side() -> usize {
    20
}
fn default_action_count() -> usize {
    4
}
fn default_steps() -> u64 {
    30_000
}
fn default_eval_every() -> u64 {
    100
}
fn default_eval_episodes() -> usize {
    30
}
fn default_teacher_eval_episodes() -> usize {
    1000
}
fn default_run_seeds() -> Vec<u64> {
    vec![0]
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_max_episode_len() -> usize {
    DEFAULT_MAX_EPISODE_LEN
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and applies `key=value` overrides (dotted keys,
    /// TOML values; bare words are taken as strings).
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Self = table.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        for m in &self.methods {
            MethodSpec::preset(m).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return bad("methods must be distinct".into());
        }
        if self.run_seeds.is_empty() {
            return bad("at least one run seed is required".into());
        }
        if self.run_seeds.iter().collect::<BTreeSet<_>>().len() != self.run_seeds.len() {
            return bad("run seeds must be distinct".into());
        }
        if self.eval_every == 0 || self.eval_episodes == 0 || self.teacher_eval_episodes == 0 {
            return bad("eval_every, eval_episodes and teacher_eval_episodes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if self.max_episode_len == 0 {
            return bad("max_episode_len must be positive".into());
        }
        let t = &self.teacher;
        if !(0.0..=1.0).contains(&t.corruption) {
            return bad(format!("teacher corruption {} outside [0, 1]", t.corruption));
        }
        if t.temperature < 0.0 {
            return bad("teacher temperature must be non-negative".into());
        }
        if t.values == ValueSource::MonteCarlo && t.value_episodes == 0 {
            return bad("value_episodes must be positive".into());
        }
        use TeacherMethod::*;
        match (&self.world, t.method) {
            (WorldSource::Random { count, params, action_count, width, height, .. }, QLearning | ValueIteration | ActorCritic) => {
                if *count == 0 {
                    return bad("world count must be positive".into());
                }
                if *action_count < 4 {
                    return bad("action_count must be at least 4".into());
                }
                if *width < 2 || *height < 2 {
                    return bad("grids need width and height of at least 2".into());
                }
                params.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            }
            (WorldSource::Corridor { half_length, p_term }, CorridorOptimal | CorridorAdversarial) => {
                if *half_length == 0 || !(0.0..1.0).contains(p_term) {
                    return bad("corridor needs half_length ≥ 1 and p_term in [0, 1)".into());
                }
            }
            (WorldSource::Counterexample, Counterexample) => {}
            (w, m) => return bad(format!("teacher {m:?} cannot be built for world {w:?}")),
        }
        Ok(())
    }

    /// Whether any method reads the teacher critic.
    pub fn needs_teacher_values(&self) -> bool {
        self.methods.iter().any(|m| MethodSpec::preset(m).is_ok_and(|s| s.needs_teacher_values()))
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), HarnessError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {spec:?} is not key=value")))?;
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| HarnessError::Config(format!("empty key in {spec:?}")))?;
    let mut cursor = table;
    for p in parts {
        cursor = cursor
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("{p} is not a table in {spec:?}")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}
