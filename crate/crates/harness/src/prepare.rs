use rand_chacha::ChaCha8Rng;

use distill_core::distill::evaluate_teacher_return;
use distill_core::mdp::{generate_random_mdp, CorridorWorld, CounterexampleMdp, Environment, ObservationSpace, World};
use distill_core::tabular::{DistributionTable, QTable, ValueTable};
use distill_core::teacher::{
    corrupt_teacher, estimate_value, evaluate_policy, extract_policy, make_adversarial_corridor_teacher,
    make_optimal_corridor_teacher, train_actor_critic, train_q_learning, value_iteration, TeacherBundle,
    TeacherProvenance,
};
use distill_core::verify::counterexample_teacher;

use crate::config::{ExperimentConfig, TeacherMethod, ValueSource, WorldSource};
use crate::seeds::teacher_rng;
use crate::HarnessError;

/// Everything the runs on one world share.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mdp_index: usize,
    pub mdp_seed: u64,
    /// The world students act in, including any no-op actions.
    pub world: World,
    pub student_obs: ObservationSpace,
    pub teacher: TeacherBundle,
    /// Mean teacher return on `world`, the reference line of every run.
    pub teacher_return: f64,
}

/// The world without extra no-op actions.
pub fn base_world(config: &ExperimentConfig, mdp_index: usize) -> Result<World, HarnessError> {
    Ok(match &config.world {
        WorldSource::Random { width, height, params, .. } => {
            World::Grid(generate_random_mdp(config.world.mdp_seed(mdp_index), params, *width, *height)?)
        }
        WorldSource::Corridor { half_length, p_term } => {
            World::Corridor(CorridorWorld::new(*half_length)?.with_p_term(*p_term)?)
        }
        WorldSource::Counterexample => World::Counterexample(CounterexampleMdp::new()),
    })
}

fn with_actions(world: World, config: &ExperimentConfig) -> Result<World, HarnessError> {
    Ok(match (world, &config.world) {
        (World::Grid(g), WorldSource::Random { action_count, .. }) => World::Grid(g.with_action_count(*action_count)?),
        (w, _) => w,
    })
}

fn teacher_values(
    world: &World,
    teacher: &TeacherBundle,
    config: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ValueTable, HarnessError> {
    Ok(match config.teacher.values {
        ValueSource::Exact => {
            let v = evaluate_policy(world, |s| teacher.control_probs(s).into_owned(), config.gamma)?;
            let mut values = ValueTable::new();
            for s in world.decision_states() {
                values.set(teacher.obs(s), v[s]);
            }
            values
        }
        ValueSource::MonteCarlo => estimate_value(world, teacher, config.teacher.value_episodes, config.gamma, rng)?,
    })
}

/// Trains (or constructs) the teacher on the base world with full
/// observations, then applies corruption and attaches its critic if any
/// method needs one.
pub fn build_teacher(
    config: &ExperimentConfig,
    base: &World,
    rng: &mut ChaCha8Rng,
) -> Result<TeacherBundle, HarnessError> {
    let recipe = &config.teacher;
    let observations = ObservationSpace::full(base);
    let from_q = |q: &QTable, method: &str| {
        let mut t =
            TeacherBundle::new(observations.clone(), extract_policy(q, &observations, recipe.temperature), TeacherProvenance::named(method));
        t.provenance.temperature = Some(recipe.temperature);
        t
    };
    let mut teacher = match (recipe.method, base) {
        (TeacherMethod::QLearning, _) => {
            let q = train_q_learning(base, &observations, &recipe.q_learning, rng)?;
            from_q(&q, "q_learning")
        }
        (TeacherMethod::ValueIteration, _) => {
            let vi = value_iteration(base, config.gamma, 1e-10, 1_000_000)?;
            let mut q = QTable::new(base.action_count());
            for s in base.decision_states() {
                for (a, v) in vi.q[s].iter().enumerate() {
                    q.set(observations.obs(s), a, *v);
                }
            }
            from_q(&q, "value_iteration")
        }
        (TeacherMethod::ActorCritic, _) => {
            let (policy, _) = train_actor_critic(base, &observations, &recipe.actor_critic, rng)?;
            let table = DistributionTable::from_policy(&policy, &observations);
            TeacherBundle::new(observations.clone(), table, TeacherProvenance::named("actor_critic"))
        }
        (TeacherMethod::CorridorOptimal, World::Corridor(c)) => make_optimal_corridor_teacher(c, config.gamma),
        (TeacherMethod::CorridorAdversarial, World::Corridor(c)) => make_adversarial_corridor_teacher(c, config.gamma),
        (TeacherMethod::Counterexample, World::Counterexample(_)) => counterexample_teacher()?,
        (m, _) => return Err(HarnessError::Config(format!("teacher {m:?} does not fit this world"))),
    };
    if recipe.corruption > 0.0 {
        teacher = corrupt_teacher(base, &teacher, recipe.corruption, rng)?.teacher;
    }
    let constructed = matches!(
        recipe.method,
        TeacherMethod::CorridorOptimal | TeacherMethod::CorridorAdversarial | TeacherMethod::Counterexample
    );
    if config.needs_teacher_values() && !constructed {
        let values = teacher_values(base, &teacher, config, rng)?;
        teacher = teacher.with_values(values);
    }
    Ok(teacher)
}

/// World, student view, teacher and teacher reference return for one world
/// index. Deterministic in (config, index).
pub fn prepare(config: &ExperimentConfig, mdp_index: usize) -> Result<Prepared, HarnessError> {
    let mut rng = teacher_rng(config.seed, mdp_index);
    let base = base_world(config, mdp_index)?;
    let teacher = build_teacher(config, &base, &mut rng)?;
    let world = with_actions(base, config)?;
    let teacher = teacher.extended(world.action_count());
    let student_obs = world.observation_space(config.observation);
    let teacher_return =
        evaluate_teacher_return(&world, &teacher, config.teacher_eval_episodes, config.max_episode_len, &mut rng)?;
    Ok(Prepared { mdp_index, mdp_seed: config.world.mdp_seed(mdp_index), world, student_obs, teacher, teacher_return })
}
