use std::path::Path;

use serde::{Deserialize, Serialize};

use distill_core::distill::{
    episodic_cross_entropy, evaluate_return, Control, DistillConfig, DistillState, Distiller, MethodSpec,
};
use distill_core::mdp::Environment;

use crate::config::ExperimentConfig;
use crate::prepare::Prepared;
use crate::seeds::{eval_rng, task_seed, train_rng};
use crate::HarnessError;

/// One evaluation point of one run. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mdp_seed: u64,
    pub run_seed: u64,
    pub method: String,
    pub step: u64,
    pub ret_student: f64,
    pub ret_teacher_ref: f64,
    pub xent_student: f64,
    pub xent_teacher: f64,
    pub xent_uniform: f64,
}

pub const CSV_COLUMNS: [&str; 9] = [
    "mdp_seed",
    "run_seed",
    "method",
    "step",
    "ret_student",
    "ret_teacher_ref",
    "xent_student",
    "xent_teacher",
    "xent_uniform",
];

impl RunRecord {
    fn sort_key(&self) -> (u64, u64, &str, u64) {
        (self.mdp_seed, self.run_seed, &self.method, self.step)
    }
}

pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Steps at which a run of `steps` updates is evaluated: 0, every
/// `every` steps, and the last step.
pub fn eval_steps(steps: u64, every: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (0..=steps).step_by(every as usize).collect();
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

/// Distils one student and evaluates it at the configured cadence.
/// Evaluation uses its own RNG stream and never touches the parameters.
pub fn run_once(
    config: &ExperimentConfig,
    prepared: &Prepared,
    method: &str,
    run_seed: u64,
) -> Result<Vec<RunRecord>, HarnessError> {
    let spec = MethodSpec::preset(method)?.with_gamma(config.gamma);
    let world = &prepared.world;
    let distiller = Distiller::new(
        world,
        &prepared.student_obs,
        &prepared.teacher,
        spec,
        DistillConfig { learning_rate: config.learning_rate, max_episode_len: config.max_episode_len },
    )?;
    let seed = task_seed(config.seed, prepared.mdp_index, method, run_seed);
    let mut train = train_rng(seed);
    let mut eval = eval_rng(seed);
    let mut state = DistillState::new(world.action_count());
    let mut records = Vec::new();
    for target in eval_steps(config.steps, config.eval_every) {
        while state.steps < target {
            distiller.step(&mut state, &mut train)?;
        }
        let (n, len) = (config.eval_episodes, config.max_episode_len);
        let obs = &prepared.student_obs;
        let teacher = &prepared.teacher;
        let xent = |control, rng: &mut _| episodic_cross_entropy(world, obs, &state.policy, teacher, control, n, len, rng);
        records.push(RunRecord {
            mdp_seed: prepared.mdp_seed,
            run_seed,
            method: method.to_string(),
            step: target,
            ret_student: evaluate_return(world, obs, &state.policy, n, len, &mut eval)?,
            ret_teacher_ref: prepared.teacher_return,
            xent_student: xent(Control::Student, &mut eval)?,
            xent_teacher: xent(Control::Teacher, &mut eval)?,
            xent_uniform: xent(Control::Uniform, &mut eval)?,
        });
    }
    Ok(records)
}

pub fn write_csv(path: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(HarnessError::Config(format!("{}: columns {:?} do not match the record schema", path.display(), headers)));
    }
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}
