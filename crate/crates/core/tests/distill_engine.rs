use distill_core::distill::*;
use distill_core::episode::Step;
use distill_core::mdp::{CorridorWorld, Environment, GridWorld, ObsId, ObservationSpace};
use distill_core::tabular::{action_probabilities, DistributionTable, PolicyTable, ValueTable};
use distill_core::teacher::{
    make_optimal_corridor_teacher, TeacherBundle, TeacherProvenance,
};
use distill_core::verify::{
    counterexample_fixture, monte_carlo_update, three_by_three_fixture, Parametrization, VerifyError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn gate_examples() {
    assert_eq!(gated_loss_coefficient(5.0, 3.0), 1.0);
    assert_eq!(gated_loss_coefficient(3.0, 3.0), 0.0);
    assert_eq!(gated_loss_coefficient(-1.0, 0.0), 0.0);
}

#[test]
fn shaping_examples() {
    assert_eq!(shaping_reward(2.0, 2.0, 0.0), 0.0);
    let eps = 0.25;
    assert!(shaping_reward(2.0 - eps, 2.0, 1.0) < 1.0);
    assert_eq!(shaping_reward(2.0 - eps, 2.0, 1.0), -eps + 1.0);
}

#[test]
fn uniform_control_picks_actions_uniformly() {
    let world = GridWorld::open(5, 5);
    let obs = ObservationSpace::full(&world);
    let policy = PolicyTable::new(4);
    let mut r = rng(1);
    let mut counts = [0usize; 4];
    let mut n = 0;
    while n < 10_000 {
        let ep = run_episode(&world, &obs, &policy, None, Control::Uniform, 1000, &mut r).unwrap();
        for s in &ep.trajectory.steps {
            counts[s.action] += 1;
            n += 1;
        }
    }
    let p = 0.25;
    let sem = (p * (1.0 - p) / n as f64).sqrt();
    for c in counts {
        assert!((c as f64 / n as f64 - p).abs() < 3.0 * sem, "{counts:?}");
    }
}

#[test]
fn certain_termination_gives_single_steps() {
    let world = GridWorld::open(3, 3).with_dynamics(0.1, 1.0).unwrap();
    let obs = ObservationSpace::full(&world);
    let mut r = rng(2);
    for _ in 0..100 {
        let ep = run_episode(&world, &obs, &PolicyTable::new(4), None, Control::Student, 1000, &mut r).unwrap();
        assert_eq!(ep.trajectory.len(), 1);
    }
}

#[test]
fn student_control_follows_the_softmax() {
    let world = GridWorld::open(3, 3).with_dynamics(0.1, 1.0).unwrap();
    let obs = ObservationSpace::full(&world);
    let mut policy = PolicyTable::new(4);
    let o = obs.obs(world.initial_state());
    policy.set_logits(o, &[0.5, -1.0, 1.2, 0.0]);
    let probs = action_probabilities(&policy, o);
    let mut r = rng(3);
    let draws = 10_000;
    let mut counts = [0f64; 4];
    for _ in 0..draws {
        let ep = run_episode(&world, &obs, &policy, None, Control::Student, 10, &mut r).unwrap();
        counts[ep.trajectory.steps[0].action] += 1.0;
    }
    let stat: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(c, p)| (c - draws as f64 * p).powi(2) / (draws as f64 * p))
        .sum();
    let p_value = 1.0 - ChiSquared::new(3.0).unwrap().cdf(stat);
    assert!(p_value > 0.01, "chi2 {stat}, p {p_value}");
}

/// Teacher on a fully observed 3×3 grid from fixed random distributions.
fn random_teacher(world: &GridWorld, seed: u64) -> (ObservationSpace, TeacherBundle) {
    let obs = ObservationSpace::full(world);
    let mut r = rng(seed);
    let mut table = DistributionTable::new(4);
    for o in obs.ids() {
        let w: Vec<f64> = (0..4).map(|_| r.gen_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        table.set(o, w.iter().map(|x| x / s).collect());
    }
    let teacher = TeacherBundle::new(obs.clone(), table, TeacherProvenance::named("random"));
    (obs, teacher)
}

#[test]
fn matched_teacher_distillation_has_zero_mean_update() {
    let world = GridWorld::open(3, 3).with_dynamics(0.1, 0.1).unwrap();
    let (obs, teacher) = random_teacher(&world, 4);
    let spec = MethodSpec::preset("teacher_distill").unwrap();
    let d = Distiller::new(&world, &obs, &teacher, spec, DistillConfig::default()).unwrap();
    let mut state = DistillState::new(4);
    for o in obs.ids() {
        let logits: Vec<f64> = teacher.policy.probs(o).iter().map(|p| p.ln()).collect();
        state.policy.set_logits(o, &logits);
    }
    let mut r = rng(5);
    let n = obs.len() * 4;
    let (mut sum, mut sq) = (vec![0.0; n], vec![0.0; n]);
    let episodes = 1000;
    for _ in 0..episodes {
        let ep = d.sample(&state, &mut r).unwrap();
        let u = d.episode_update(&state, &ep);
        for (o, row) in u.logits.logit_entries() {
            for (a, v) in row.iter().enumerate() {
                sum[o.index() * 4 + a] += v;
                sq[o.index() * 4 + a] += v * v;
            }
        }
    }
    let k = episodes as f64;
    for i in 0..n {
        let m = sum[i] / k;
        let sem = (((sq[i] - k * m * m) / (k - 1.0)).max(0.0) / k).sqrt();
        assert!(m.abs() <= 3.0 * sem + 1e-12, "component {i}: {m} vs {sem}");
    }
}

#[test]
fn value_methods_need_a_critic() {
    let world = GridWorld::open(3, 3);
    let (obs, teacher) = random_teacher(&world, 6);
    for name in ["teacher_v_reward", "td_teacher_bootstrap", "gated_distill_r"] {
        let spec = MethodSpec::preset(name).unwrap();
        assert!(matches!(
            Distiller::new(&world, &obs, &teacher, spec, DistillConfig::default()),
            Err(DistillError::MissingTeacherValue(_))
        ));
    }
    let mut state = DistillState::new(4);
    assert!(matches!(
        td_teacher_bootstrap_step(&world, &obs, &mut state, &teacher, 0.1, 0.99, &mut rng(0)),
        Err(DistillError::MissingTeacherValue(_))
    ));
}

#[test]
fn shaped_rewards_telescope_on_sampled_episodes() {
    let world = GridWorld::open(3, 3)
        .with_cell(distill_core::mdp::Coord::new(3, 3), distill_core::mdp::Cell::Free { reward: 5.0, terminal: true })
        .unwrap()
        .with_dynamics(0.1, 0.05)
        .unwrap();
    let (obs, teacher) = random_teacher(&world, 7);
    let mut values = ValueTable::new();
    let mut r = rng(8);
    for o in obs.ids() {
        values.set(o, r.gen_range(-3.0..3.0));
    }
    let teacher = teacher.with_values(values);
    let mut state = DistillState::new(4);
    for _ in 0..200 {
        let ep = run_episode(&world, &obs, &state.policy, None, Control::Student, 1000, &mut r).unwrap();
        let steps: &[Step] = &ep.trajectory.steps;
        let shaped: f64 = steps
            .iter()
            .map(|s| {
                shaping_reward(teacher.value_after(s.next).unwrap(), teacher.value(s.state).unwrap(), s.reward)
            })
            .sum();
        let expected = ep.trajectory.total_reward() - teacher.value(steps[0].state).unwrap();
        assert!((shaped - expected).abs() <= 1e-12 * (1.0 + expected.abs()), "{shaped} vs {expected}");
        state.steps += 1;
    }
}

#[test]
fn bootstrap_with_zero_critic_is_myopic() {
    let world = CorridorWorld::new(3).unwrap();
    let obs = ObservationSpace::full(&world);
    let mut teacher = make_optimal_corridor_teacher(&world, 0.99);
    let mut zero = ValueTable::new();
    for o in obs.ids() {
        zero.set(o, 0.0);
    }
    teacher.values = Some(zero);
    let mut state = DistillState::new(2);
    let mut r = rng(9);
    for _ in 0..5000 {
        td_teacher_bootstrap_step(&world, &obs, &mut state, &teacher, 0.1, 0.99, &mut r).unwrap();
    }
    // Two or more cells from either end every one-step target is 0, so
    // nothing favours Right.
    for s in [2, world.initial_state()] {
        let p = action_probabilities(&state.policy, obs.obs(s));
        assert!(p[1] < 0.75, "{s}: {p:?}");
    }
}

#[test]
fn bootstrap_with_optimal_critic_solves_the_corridor() {
    let world = CorridorWorld::new(3).unwrap();
    let obs = ObservationSpace::full(&world);
    let teacher = make_optimal_corridor_teacher(&world, 0.99);
    let mut state = DistillState::new(2);
    let mut r = rng(10);
    for _ in 0..5000 {
        td_teacher_bootstrap_step(&world, &obs, &mut state, &teacher, 0.1, 0.99, &mut r).unwrap();
    }
    let ret = evaluate_return(&world, &obs, &state.policy, 1000, 1000, &mut r).unwrap();
    assert!(ret >= 0.9, "{ret}");
}

#[test]
fn terminal_successor_target_is_the_reward() {
    let world = CorridorWorld::new(1).unwrap();
    let obs = ObservationSpace::full(&world);
    let teacher = make_optimal_corridor_teacher(&world, 0.99);
    let spec = MethodSpec::preset("td_teacher_bootstrap").unwrap();
    let d = Distiller::new(&world, &obs, &teacher, spec, DistillConfig::default()).unwrap();
    let state = DistillState::new(2);
    let mut r = rng(11);
    loop {
        let ep = d.sample(&state, &mut r).unwrap();
        let u = d.episode_update(&state, &ep);
        let last = ep.trajectory.steps.last().unwrap();
        if last.next.is_none() {
            assert_eq!(u.baseline_targets.last().unwrap().1, last.reward);
            break;
        }
    }
}

#[test]
fn env_reward_variants_agree_without_rewards() {
    let world = GridWorld::open(2, 2).with_dynamics(0.1, 0.3).unwrap();
    let (obs, teacher) = random_teacher(&world, 12);
    let fx = distill_core::verify::Fixture {
        env: world,
        observations: obs.clone(),
        teacher,
        parametrization: Parametrization::full(obs.len(), 4),
    };
    let mut r = rng(13);
    let theta: Vec<f64> = (0..fx.parametrization.dim()).map(|_| r.gen_range(-1.0..1.0)).collect();
    for (base, plus) in [
        ("on_policy_distill", "on_policy_distill_r"),
        ("entropy_reg", "entropy_reg_r"),
        ("n_distill", "n_distill_r"),
        ("exp_entropy_reg", "exp_entropy_reg_r"),
    ] {
        let a = fx.dynamics(MethodSpec::preset(base).unwrap()).unwrap().field(&theta).unwrap();
        let b = fx.dynamics(MethodSpec::preset(plus).unwrap()).unwrap().field(&theta).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12), "{base}");
        let sampled = monte_carlo_update(&fx, MethodSpec::preset(plus).unwrap(), &theta, &ValueTable::new(), 20_000, &mut r)
            .unwrap();
        assert!(sampled.within(&a, 4.0), "{plus}: z = {}", sampled.max_z(&a));
    }
}

#[test]
fn entropy_regularised_update_raises_teacher_actions() {
    let world = GridWorld::open(2, 2).with_dynamics(0.1, 0.2).unwrap();
    let obs = ObservationSpace::full(&world);
    let mut table = DistributionTable::new(4);
    for o in obs.ids() {
        table.set(o, vec![0.0, 0.0, 1.0, 0.0]);
    }
    let teacher = TeacherBundle::new(obs.clone(), table, TeacherProvenance::named("dirac"));
    let fx = distill_core::verify::Fixture {
        env: world,
        observations: obs.clone(),
        teacher,
        parametrization: Parametrization::full(obs.len(), 4),
    };
    let ent = fx.dynamics(MethodSpec::preset("entropy_reg").unwrap()).unwrap();
    let exp = fx.dynamics(MethodSpec::preset("exp_entropy_reg").unwrap()).unwrap();
    let mut r = rng(14);
    let draws = 100;
    let mut positive = 0;
    for _ in 0..draws {
        let theta: Vec<f64> = (0..ent.dim()).map(|_| r.gen_range(-2.0..2.0)).collect();
        let (a, b) = (ent.field(&theta).unwrap(), exp.field(&theta).unwrap());
        if a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() > 0.0 {
            positive += 1;
        }
        let o = ObsId(0);
        assert!(a[o.index() * 4 + 2] >= -1e-12 || b[o.index() * 4 + 2] >= -1e-12);
    }
    assert!(positive as f64 >= 0.95 * draws as f64, "{positive}");
}

fn assert_sampled_matches_exact<E: Environment>(
    fx: &distill_core::verify::Fixture<E>,
    theta: &[f64],
    critic: &ValueTable,
    episodes: usize,
    seed: u64,
) -> Result<(), VerifyError> {
    let mut r = rng(seed);
    let mut squared = 0.0;
    let mut counted = 0;
    for name in MethodSpec::PRESET_NAMES {
        let spec = MethodSpec::preset(name)?;
        let exact = fx.dynamics(spec)?.with_student_values(critic.clone()).field(theta)?;
        let sampled = monte_carlo_update(fx, spec, theta, critic, episodes, &mut r)?;
        let z = sampled.max_z(&exact);
        assert!(z <= 3.0, "{name}: max deviation {z} SEM");
        for ((m, s), e) in sampled.mean.iter().zip(&sampled.sem).zip(&exact) {
            if *s > 0.0 {
                squared += ((m - e) / s).powi(2);
                counted += 1;
            }
        }
    }
    // Deviations in SEM units should look standard normal overall.
    let rms = (squared / counted as f64).sqrt();
    assert!((0.7..1.3).contains(&rms), "rms deviation {rms} SEM over {counted} components");
    Ok(())
}

#[test]
fn sampled_updates_match_exact_on_the_counterexample() {
    let fx = counterexample_fixture().unwrap();
    let mut critic = ValueTable::new();
    critic.set(ObsId(0), -2.0);
    critic.set(ObsId(1), -3.5);
    assert_sampled_matches_exact(&fx, &[0.4, -0.7], &critic, 100_000, 15).unwrap();
}

#[test]
fn sampled_updates_match_exact_on_a_small_room() {
    let fx = three_by_three_fixture().unwrap();
    let mut r = rng(16);
    let theta: Vec<f64> = (0..fx.parametrization.dim()).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut critic = ValueTable::new();
    for o in fx.observations.ids() {
        critic.set(o, r.gen_range(-0.5..0.5));
    }
    assert_sampled_matches_exact(&fx, &theta, &critic, 100_000, 18).unwrap();
}

#[test]
fn diverging_updates_are_refused() {
    let world = GridWorld::open(3, 3).with_dynamics(0.1, 0.1).unwrap();
    let (obs, teacher) = random_teacher(&world, 9);
    let spec = MethodSpec::preset("teacher_distill").unwrap();
    let config = DistillConfig { learning_rate: f64::MAX, ..DistillConfig::default() };
    let d = Distiller::new(&world, &obs, &teacher, spec, config).unwrap();
    let mut state = DistillState::new(4);
    state.policy.set_logits(obs.obs(world.initial_state()), &[f64::MAX, 0.0, 0.0, 0.0]);
    let mut r = rng(10);
    let err = (0..100).find_map(|_| d.step(&mut state, &mut r).err()).expect("some step overflows");
    assert!(matches!(err, DistillError::Diverged { .. }), "{err}");
    assert!(state.policy.touched().all(|o| state.policy.logits(o).unwrap().iter().all(|x| x.is_finite())));
}
