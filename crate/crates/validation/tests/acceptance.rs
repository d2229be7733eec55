//! Acceptance checks. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::collections::BTreeMap;
use std::time::Instant;

use distill_core::distill::{
    run_episode, shaping_reward, Control, DistillConfig, DistillError, DistillState, Distiller, MethodSpec,
};
use distill_core::mdp::{Environment, ObsId, StateId};
use distill_core::tabular::{action_probabilities, PolicyTable, ValueTable};
use distill_core::verify::{counterexample_fixture, monte_carlo_update};
use distill_harness::seeds::{task_seed, train_rng};
use distill_harness::verify_report::{ASYMMETRIC_THRESHOLD, SYMMETRIC_TOLERANCE};
use distill_harness::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome, HarnessError> {
    Ok(Outcome { passed, detail })
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).expect("acceptance config parses")
}

fn sweep(config: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    let parallelism = std::thread::available_parallelism().map_or(1, |n| n.get());
    let out = run_sweep(config, parallelism)?;
    if let Some(f) = out.failures.first() {
        return Err(HarnessError::Config(format!("{} runs failed, first: {}", out.failures.len(), f.error)));
    }
    Ok(out.records)
}

/// Per-run values of `metric` at `step`, keyed by (mdp_seed, run_seed).
fn at_step(records: &[RunRecord], method: &str, step: u64, metric: Metric) -> BTreeMap<(u64, u64), f64> {
    records
        .iter()
        .filter(|r| r.method == method && r.step == step)
        .map(|r| ((r.mdp_seed, r.run_seed), metric.of(r)))
        .collect()
}

/// Per-run time average of `metric` (trapezoidal over the evaluation grid).
fn time_average(records: &[RunRecord], method: &str, metric: Metric) -> BTreeMap<(u64, u64), f64> {
    let mut runs: BTreeMap<(u64, u64), Vec<(u64, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.method == method) {
        runs.entry((r.mdp_seed, r.run_seed)).or_default().push((r.step, metric.of(r)));
    }
    runs.into_iter()
        .map(|(k, mut pts)| {
            pts.sort_by_key(|p| p.0);
            let span = (pts.last().unwrap().0 - pts[0].0) as f64;
            let area: f64 = pts.windows(2).map(|w| (w[1].0 - w[0].0) as f64 * (w[0].1 + w[1].1) / 2.0).sum();
            (k, area / span)
        })
        .collect()
}

fn mean_curve(records: &[RunRecord], method: &str) -> Result<(Vec<u64>, Vec<f64>), HarnessError> {
    let only: Vec<RunRecord> = records.iter().filter(|r| r.method == method).cloned().collect();
    let curve = aggregate(&only, &[GroupKey::Method], Metric::RetStudent)?.remove(0);
    Ok((curve.steps, curve.mean))
}

fn values(map: &BTreeMap<(u64, u64), f64>) -> Vec<f64> {
    map.values().copied().collect()
}

fn shared_report() -> Result<&'static VerifyReport, HarnessError> {
    static REPORT: std::sync::OnceLock<VerifyReport> = std::sync::OnceLock::new();
    if let Some(r) = REPORT.get() {
        return Ok(r);
    }
    let report = verify_report(&VerifyOptions::default())?;
    Ok(REPORT.get_or_init(|| report))
}

fn gradient_classification() -> Result<Outcome, HarnessError> {
    let report = shared_report()?;
    let mut worst_symmetric = 0.0f64;
    let mut least_asymmetric = f64::INFINITY;
    let mut points_ok = true;
    for c in &report.classification {
        points_ok &= c.defects.len() == 10;
        for d in &c.defects {
            if c.expected_gradient {
                worst_symmetric = worst_symmetric.max(*d);
            } else {
                least_asymmetric = least_asymmetric.min(*d);
            }
        }
    }
    let fixtures: std::collections::BTreeSet<&str> = report.classification.iter().map(|c| c.fixture.as_str()).collect();
    let passed = points_ok
        && report.classification.len() == 12
        && fixtures.len() == 2
        && worst_symmetric < SYMMETRIC_TOLERANCE
        && least_asymmetric > ASYMMETRIC_THRESHOLD;
    outcome(
        passed,
        format!("max defect of gradient rows {worst_symmetric:.2e}, min defect of on_policy_distill {least_asymmetric:.2e}"),
    )
}

fn oscillation_vs_convergence() -> Result<Outcome, HarnessError> {
    let report = shared_report()?;
    let osc = &report.oscillation;
    let conv = &report.convergence;
    let passed = osc.steps == 100_000
        && osc.first_integral_drift < 1e-4
        && osc.min_norm > 0.5
        && conv.final_field_norm < 1e-6;
    outcome(
        passed,
        format!(
            "on_policy_distill_r drift {:.2e}, min |θ| {:.3}; n_distill_r field norm {:.2e}",
            osc.first_integral_drift, osc.min_norm, conv.final_field_norm
        ),
    )
}

fn sampled_matches_exact() -> Result<Outcome, HarnessError> {
    let fx = counterexample_fixture()?;
    let theta = [0.4, -0.7];
    let mut critic = ValueTable::new();
    critic.set(ObsId(0), -2.0);
    critic.set(ObsId(1), -3.5);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst = (0.0f64, "");
    for name in MethodSpec::PRESET_NAMES {
        let spec = MethodSpec::preset(name)?;
        let exact = fx.dynamics(spec)?.with_student_values(critic.clone()).field(&theta)?;
        let sampled = monte_carlo_update(&fx, spec, &theta, &critic, 100_000, &mut rng)?;
        let z = sampled.max_z(&exact);
        if z >= worst.0 {
            worst = (z, name);
        }
    }
    outcome(worst.0 <= 3.0, format!("largest deviation {:.2} SEM ({})", worst.0, worst.1))
}

fn control_policy_ordering() -> Result<Outcome, HarnessError> {
    let c = config(
        r#"
seed = 4
methods = ["on_policy_distill", "teacher_distill"]
[world]
kind = "random"
count = 100
"#,
    );
    let records = sweep(&c)?;
    let student = time_average(&records, "on_policy_distill", Metric::XentStudent);
    let teacher = time_average(&records, "teacher_distill", Metric::XentStudent);
    let gaps: Vec<f64> = teacher.iter().map(|(k, t)| t - student[k]).collect();
    let gap = mean_sem(&gaps);
    let (steps, student_curve) = mean_curve(&records, "on_policy_distill")?;
    let (_, teacher_curve) = mean_curve(&records, "teacher_distill")?;
    let ratio = area_speedup(&student_curve, &teacher_curve, &steps)?;
    let passed = gap.mean > 2.0 * gap.sem && (2.0..=5.0).contains(&ratio);
    outcome(
        passed,
        format!(
            "student-sampled xent gap {:.3} (SEM {:.3}); return area ratio {ratio:.3} (needs [2, 5])",
            gap.mean, gap.sem
        ),
    )
}

fn action_space_failure() -> Result<Outcome, HarnessError> {
    let c = config(
        r#"
seed = 5
methods = ["entropy_reg", "exp_entropy_reg", "on_policy_distill"]
eval_every = 30000
[world]
kind = "random"
count = 50
action_count = 400
"#,
    );
    let records = sweep(&c)?;
    let teacher = mean_sem(&values(&at_step(&records, "on_policy_distill", c.steps, Metric::RetTeacherRef)));
    let ret = |m| mean_sem(&values(&at_step(&records, m, c.steps, Metric::RetStudent)));
    let (ent, exp, cloning) = (ret("entropy_reg"), ret("exp_entropy_reg"), ret("on_policy_distill"));
    let passed = ent.mean + 2.0 * ent.sem < 0.5 * teacher.mean
        && exp.mean - 2.0 * exp.sem > 0.8 * teacher.mean
        && cloning.mean - 2.0 * cloning.sem > 0.8 * teacher.mean;
    outcome(
        passed,
        format!(
            "teacher {:.3}; entropy_reg {:.3}±{:.3}, exp_entropy_reg {:.3}±{:.3}, on_policy_distill {:.3}±{:.3}",
            teacher.mean, ent.mean, ent.sem, exp.mean, exp.sem, cloning.mean, cloning.sem
        ),
    )
}

fn corrupted_teacher_hierarchy() -> Result<Outcome, HarnessError> {
    let text = r#"
seed = 6
methods = ["on_policy_distill", "on_policy_distill_r", "gated_distill_r"]
eval_every = 30000
[world]
kind = "random"
count = 100
[teacher]
corruption = 0.25
"#;
    let c = config(text);
    let records = sweep(&c)?;
    let ret = |m| mean_sem(&values(&at_step(&records, m, c.steps, Metric::RetStudent)));
    let (cloning, cloning_r, gated) = (ret("on_policy_distill"), ret("on_policy_distill_r"), ret("gated_distill_r"));
    let mut clean = c.clone();
    clean.teacher.corruption = 0.0;
    let clean_returns = (0..clean.world.count()).map(|i| prepare(&clean, i).map(|p| p.teacher_return)).collect::<Result<Vec<_>, _>>()?;
    let teacher = mean_sem(&clean_returns);
    let passed = cloning.mean < cloning_r.mean
        && cloning_r.mean < gated.mean
        && (gated.mean - teacher.mean).abs() <= 2.0 * gated.sem;
    outcome(
        passed,
        format!(
            "on_policy_distill {:.3}, on_policy_distill_r {:.3}, gated_distill_r {:.3}±{:.3}; uncorrupted teacher {:.3}",
            cloning.mean, cloning_r.mean, gated.mean, gated.sem, teacher.mean
        ),
    )
}

fn first_reach(steps: &[u64], curve: &[f64], level: f64) -> Option<u64> {
    steps.iter().zip(curve).find(|(_, v)| **v >= level).map(|(s, _)| *s)
}

fn corridor_adversarial_teacher() -> Result<Outcome, HarnessError> {
    const CLONING: [&str; 3] = ["teacher_distill", "on_policy_distill", "n_distill"];
    let seeds: Vec<String> = (0..50).map(|s| s.to_string()).collect();
    let text = format!(
        r#"
seed = 7
methods = ["teacher_distill", "on_policy_distill", "n_distill", "actor_critic", "teacher_v_reward"]
steps = 300
eval_every = 1
eval_episodes = 50
run_seeds = [{}]
[world]
kind = "corridor"
half_length = 5
[teacher]
method = "corridor_optimal"
"#,
        seeds.join(", ")
    );
    let optimal = config(&text);
    let mut adversarial = optimal.clone();
    adversarial.teacher.method = TeacherMethod::CorridorAdversarial;

    let records = sweep(&optimal)?;
    let reach = |m| -> Result<Option<u64>, HarnessError> {
        let (steps, curve) = mean_curve(&records, m)?;
        Ok(first_reach(&steps, &curve, 0.9))
    };
    let baseline = reach("actor_critic")?;
    let mut details = vec![format!("optimal teacher: actor_critic reaches 0.9 at {baseline:?}")];
    let mut passed = true;
    for m in CLONING {
        let hit = reach(m)?;
        passed &= match (hit, baseline) {
            (Some(h), Some(b)) => h < b,
            (Some(_), None) => true,
            _ => false,
        };
        details.push(format!("{m} {hit:?}"));
    }

    let records = sweep(&adversarial)?;
    let last = |m| -> Result<f64, HarnessError> { Ok(*mean_curve(&records, m)?.1.last().unwrap()) };
    let baseline_final = last("actor_critic")?;
    details.push(format!("adversarial teacher: actor_critic final {baseline_final:.3}"));
    for m in CLONING {
        let f = last(m)?;
        passed &= f <= baseline_final;
        details.push(format!("{m} {f:.3}"));
    }
    let shaped = last("teacher_v_reward")?;
    passed &= shaped >= 0.9;
    details.push(format!("teacher_v_reward {shaped:.3}"));
    outcome(passed, details.join(", "))
}

fn telescoping_identity() -> Result<Outcome, HarnessError> {
    let c = config(
        r#"
seed = 8
methods = ["teacher_v_reward"]
[world]
kind = "random"
count = 10
"#,
    );
    let mut worst = 0.0f64;
    let mut episodes = 0;
    for i in 0..10 {
        let p = prepare(&c, i)?;
        let policy = DistillState::new(p.world.action_count()).policy;
        let mut rng = train_rng(task_seed(c.seed, i, "telescoping", 0));
        for _ in 0..100 {
            let ep = run_episode(&p.world, &p.student_obs, &policy, None, Control::Student, c.max_episode_len, &mut rng)?;
            let steps = &ep.trajectory.steps;
            let value = |s: StateId| p.teacher.value(s).expect("teacher critic present");
            let shaped: f64 = steps
                .iter()
                .map(|s| shaping_reward(p.teacher.value_after(s.next).expect("teacher critic present"), value(s.state), s.reward))
                .sum();
            let expected = ep.trajectory.total_reward() - value(steps[0].state);
            worst = worst.max((shaped - expected).abs() / (1.0 + expected.abs()));
            episodes += 1;
        }
    }
    outcome(episodes == 1000 && worst <= 1e-12, format!("{episodes} episodes, max relative residual {worst:.2e}"))
}

fn max_reachable_kl<E: Environment>(
    env: &E,
    prepared: &Prepared,
    policy: &PolicyTable,
) -> Result<f64, HarnessError> {
    let mut seen = vec![false; env.state_count()];
    let mut stack = vec![env.initial_state()];
    seen[env.initial_state()] = true;
    let mut worst = 0.0f64;
    while let Some(s) = stack.pop() {
        if let Some(target) = prepared.teacher.target(s) {
            let student = action_probabilities(policy, prepared.student_obs.obs(s));
            let kl: f64 = target.iter().zip(&student).filter(|(p, _)| **p > 0.0).map(|(p, q)| p * (p / q).ln()).sum();
            worst = worst.max(kl);
        }
        for a in 0..env.action_count() {
            for o in env.outcomes(s, a)? {
                if let Some(n) = o.next {
                    if o.prob > 0.0 && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
    }
    Ok(worst)
}

fn student_driven_convergence() -> Result<Outcome, HarnessError> {
    const LIMIT: u64 = 100_000;
    const CHECK_EVERY: u64 = 1000;
    let c = config(
        r#"
seed = 9
methods = ["on_policy_distill", "n_distill"]
observation = "full"
[world]
kind = "random"
count = 50
width = 5
height = 5
[teacher]
temperature = 1.0
"#,
    );
    // Per method: runs that reached the threshold, slowest step count, worst
    // final KL, diverged runs.
    let mut tally: BTreeMap<&str, (usize, u64, f64, usize)> = BTreeMap::new();
    for i in 0..c.world.count() {
        let p = prepare(&c, i)?;
        for method in &c.methods {
            let spec = MethodSpec::preset(method)?.with_gamma(c.gamma);
            let config = DistillConfig { learning_rate: c.learning_rate, max_episode_len: c.max_episode_len };
            let distiller = Distiller::new(&p.world, &p.student_obs, &p.teacher, spec, config)?;
            let mut state = DistillState::new(p.world.action_count());
            let mut rng = train_rng(task_seed(c.seed, i, method, 0));
            let mut kl = max_reachable_kl(&p.world, &p, &state.policy)?;
            let mut diverged = false;
            'train: while state.steps < LIMIT && kl >= 1e-3 {
                for _ in 0..CHECK_EVERY {
                    match distiller.step(&mut state, &mut rng) {
                        Ok(_) => {}
                        Err(DistillError::Diverged { .. }) => {
                            diverged = true;
                            break 'train;
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                kl = max_reachable_kl(&p.world, &p, &state.policy)?;
            }
            let t = tally.entry(method).or_insert((0, 0, 0.0, 0));
            if diverged {
                t.3 += 1;
            } else if kl < 1e-3 {
                t.0 += 1;
                t.1 = t.1.max(state.steps);
            } else {
                t.2 = t.2.max(kl);
            }
        }
    }
    let runs = c.world.count();
    let passed = tally.values().all(|t| t.0 == runs);
    let detail = tally
        .iter()
        .map(|(m, (ok, slowest, worst, diverged))| {
            format!(
                "{m} {ok}/{runs} below 1e-3 (slowest {slowest} steps, {diverged} diverged, worst unconverged KL {worst:.2e})"
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    outcome(passed, detail)
}

fn cross_entropy_minima() -> Result<Outcome, HarnessError> {
    let m = &shared_report()?.minima;
    outcome(
        m.distributions == 100 && m.forward_max_tv < 1e-3 && m.reverse_max_tv < 1e-3,
        format!("forward max TV {:.2e}, reverse max TV {:.2e}", m.forward_max_tv, m.reverse_max_tv),
    )
}

type Check = fn() -> Result<Outcome, HarnessError>;

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("gradient field classification", gradient_classification),
        ("oscillation vs convergence", oscillation_vs_convergence),
        ("sampled updates match exact updates", sampled_matches_exact),
        ("control policy ordering", control_policy_ordering),
        ("action space failure mode", action_space_failure),
        ("corrupted teacher hierarchy", corrupted_teacher_hierarchy),
        ("corridor adversarial teacher", corridor_adversarial_teacher),
        ("shaping reward telescopes", telescoping_identity),
        ("student-driven cloning converges", student_driven_convergence),
        ("cross-entropy minima", cross_entropy_minima),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match check() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        println!(
            "{} criterion {n:>2} {name}: {detail} [{:.1}s]",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
