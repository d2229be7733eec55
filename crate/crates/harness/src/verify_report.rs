use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use distill_core::distill::MethodSpec;
use distill_core::mdp::Environment;
use distill_core::tabular::XentDirection;
use distill_core::verify::{
    counterexample_fixture, cross_entropy_minimizer, finite_difference_gradient, first_integral,
    first_integral_gradient, gradient_match, integrate, integrate_until, jacobian, jacobian_symmetry_defect,
    three_state_fixture, ExactDynamics, Fixture, Integrator, VerifyError, FD_STEP,
};

use crate::HarnessError;

/// Presets with their expected answer to "is the expected update a
/// gradient field?".
pub const GRADIENT_CLASSES: [(&str, bool); 6] = [
    ("teacher_distill", true),
    ("on_policy_distill", false),
    ("entropy_reg", true),
    ("n_distill", true),
    ("exp_entropy_reg", true),
    ("teacher_v_reward", true),
];

pub const SYMMETRIC_TOLERANCE: f64 = 1e-6;
pub const ASYMMETRIC_THRESHOLD: f64 = 1e-3;
pub const GRADIENT_MATCH_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random parameter points per preset and fixture.
    pub points: usize,
    /// Parameters are drawn uniformly from [-range, range].
    pub range: f64,
    pub rk4_step: f64,
    pub rk4_steps: usize,
    /// Every n-th point of the oscillating path is kept in the report.
    pub path_stride: usize,
    pub convergence_tolerance: f64,
    pub convergence_max_steps: usize,
    pub minima_distributions: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            points: 10,
            range: 2.0,
            rk4_step: 1e-3,
            rk4_steps: 100_000,
            path_stride: 100,
            convergence_tolerance: 1e-6,
            convergence_max_steps: 1_000_000,
            minima_distributions: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Classification {
    pub preset: String,
    pub fixture: String,
    pub expected_gradient: bool,
    pub defects: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientMatch {
    pub preset: String,
    pub fixture: String,
    /// Scalar the field is compared against.
    pub loss: String,
    pub expected_match: bool,
    pub deviations: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Oscillation {
    pub preset: String,
    pub theta0: Vec<f64>,
    pub step: f64,
    pub steps: usize,
    pub first_integral_drift: f64,
    pub min_norm: f64,
    pub final_theta: Vec<f64>,
    /// Subsampled (time, θ) path for phase portraits.
    pub times: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Convergence {
    pub preset: String,
    pub theta0: Vec<f64>,
    pub accepted_steps: usize,
    pub final_time: f64,
    pub final_theta: Vec<f64>,
    pub final_field_norm: f64,
    /// Largest increase of the objective between accepted steps.
    pub max_objective_increase: f64,
    pub times: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstIntegralCheck {
    pub points: usize,
    /// max |∇H · field| over random points.
    pub max_directional_derivative: f64,
    pub fixed_point_stays: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimaCheck {
    pub distributions: usize,
    /// Worst total variation to p when minimising H(p‖q) over q.
    pub forward_max_tv: f64,
    /// Worst total variation to the argmax dirac when minimising H(q‖p).
    pub reverse_max_tv: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub options: VerifyOptions,
    pub classification: Vec<Classification>,
    pub gradient_match: Vec<GradientMatch>,
    pub oscillation: Oscillation,
    pub convergence: Convergence,
    pub first_integral: FirstIntegralCheck,
    pub minima: MinimaCheck,
    pub passed: bool,
}

fn random_theta(rng: &mut ChaCha8Rng, dim: usize, range: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-range..range)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn classify<E: Environment>(
    fixture: &Fixture<E>,
    name: &str,
    preset: &str,
    expected: bool,
    options: &VerifyOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Classification, VerifyError> {
    let d = fixture.dynamics(MethodSpec::preset(preset)?)?;
    let defects = (0..options.points)
        .map(|_| {
            let t = random_theta(rng, d.dim(), options.range);
            Ok(jacobian_symmetry_defect(&jacobian(|x: &[f64]| d.field(x), &t, FD_STEP)?))
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let passed = if expected {
        defects.iter().all(|x| *x < SYMMETRIC_TOLERANCE)
    } else {
        defects.iter().all(|x| *x > ASYMMETRIC_THRESHOLD)
    };
    Ok(Classification { preset: preset.into(), fixture: name.into(), expected_gradient: expected, defects, passed })
}

/// Field against the finite-difference gradient of the method's scalar.
/// On-policy cloning has none, so it is compared with its expected cloning
/// loss and is expected to miss at nine points in ten or more.
fn match_gradient<E: Environment>(
    fixture: &Fixture<E>,
    name: &str,
    preset: &str,
    options: &VerifyOptions,
    rng: &mut ChaCha8Rng,
) -> Result<GradientMatch, VerifyError> {
    let d = fixture.dynamics(MethodSpec::preset(preset)?)?;
    let has_objective = d.objective(&vec![0.0; d.dim()])?.is_some();
    let loss_of = |d: &ExactDynamics<'_, E>, x: &[f64]| -> Result<f64, VerifyError> {
        match d.objective(x)? {
            Some(v) => Ok(v),
            None => d.expected_forward_loss(x),
        }
    };
    let deviations = (0..options.points)
        .map(|_| {
            let t = random_theta(rng, d.dim(), options.range);
            let g = finite_difference_gradient(|x: &[f64]| loss_of(&d, x), &t, FD_STEP)?;
            Ok(gradient_match(&d.field(&t)?, &g))
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let passed = if has_objective {
        deviations.iter().all(|x| *x < GRADIENT_MATCH_TOLERANCE)
    } else {
        deviations.iter().filter(|x| **x > ASYMMETRIC_THRESHOLD).count() * 10 >= 9 * deviations.len()
    };
    let loss = match (preset, has_objective) {
        (_, false) => "expected cloning loss",
        ("entropy_reg" | "exp_entropy_reg", _) => "expected teacher penalty",
        ("teacher_v_reward", _) => "negative expected return",
        _ => "expected cloning loss",
    };
    Ok(GradientMatch {
        preset: preset.into(),
        fixture: name.into(),
        loss: loss.into(),
        expected_match: has_objective,
        deviations,
        passed,
    })
}

fn subsample(times: &[f64], thetas: &[Vec<f64>], stride: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let stride = stride.max(1);
    let mut idx: Vec<usize> = (0..times.len()).step_by(stride).collect();
    if idx.last() != Some(&(times.len() - 1)) {
        idx.push(times.len() - 1);
    }
    (idx.iter().map(|&i| times[i]).collect(), idx.iter().map(|&i| thetas[i].clone()).collect())
}

/// On-policy cloning with the environment reward on the two-step game,
/// integrated with fixed-step RK4: the first integral must be conserved
/// and the path must stay away from the centre.
pub fn oscillation(options: &VerifyOptions, theta0: [f64; 2]) -> Result<Oscillation, VerifyError> {
    let fx = counterexample_fixture()?;
    let d = fx.dynamics(MethodSpec::preset("on_policy_distill_r")?)?;
    let path = integrate(|x: &[f64]| d.field(x), &theta0, options.rk4_step, options.rk4_steps, Integrator::Rk4)?;
    let h0 = first_integral(theta0);
    let drift = path.first_integrals().iter().map(|h| (h - h0).abs()).fold(0.0, f64::max);
    let min_norm = path.thetas.iter().map(|t| norm(t)).fold(f64::INFINITY, f64::min);
    let (times, thetas) = subsample(&path.times, &path.thetas, options.path_stride);
    let passed = if theta0 == [0.0, 0.0] {
        path.thetas.iter().all(|t| t == &[0.0, 0.0])
    } else {
        drift < 1e-4 && min_norm > 0.5
    };
    Ok(Oscillation {
        preset: "on_policy_distill_r".into(),
        theta0: theta0.to_vec(),
        step: options.rk4_step,
        steps: options.rk4_steps,
        first_integral_drift: drift,
        min_norm,
        final_theta: path.last().to_vec(),
        times,
        thetas,
        passed,
    })
}

/// Cloning with the extra cloning reward and the environment reward,
/// integrated with adaptive RK4 until the field norm falls below the
/// tolerance.
pub fn convergence(options: &VerifyOptions, theta0: [f64; 2]) -> Result<Convergence, VerifyError> {
    let fx = counterexample_fixture()?;
    let d = fx.dynamics(MethodSpec::preset("n_distill_r")?)?;
    let path = integrate_until(
        |x: &[f64]| d.field(x),
        &theta0,
        options.rk4_step,
        1e-10,
        options.convergence_tolerance,
        options.convergence_max_steps,
    )?;
    let objectives = path
        .thetas
        .iter()
        .map(|t| d.objective(t).map(|o| o.expect("cloning with reward has an objective")))
        .collect::<Result<Vec<_>, _>>()?;
    let max_increase = objectives.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let final_field_norm = norm(&d.field(path.last())?);
    let (times, thetas) = subsample(&path.times, &path.thetas, options.path_stride.max(path.times.len() / 1000));
    Ok(Convergence {
        preset: "n_distill_r".into(),
        theta0: theta0.to_vec(),
        accepted_steps: path.times.len() - 1,
        final_time: *path.times.last().unwrap(),
        final_theta: path.last().to_vec(),
        final_field_norm,
        max_objective_increase: max_increase.max(0.0),
        times,
        thetas,
        passed: final_field_norm < options.convergence_tolerance && max_increase <= 1e-12,
    })
}

/// ∇H · field at random points, and the centre as a fixed point.
pub fn first_integral_check(options: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<FirstIntegralCheck, VerifyError> {
    let fx = counterexample_fixture()?;
    let d = fx.dynamics(MethodSpec::preset("on_policy_distill_r")?)?;
    let points = 100;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let t = random_theta(rng, 2, options.range);
        let v = d.field(&t)?;
        let g = first_integral_gradient([t[0], t[1]]);
        worst = worst.max((v[0] * g[0] + v[1] * g[1]).abs());
    }
    let still = integrate(|x: &[f64]| d.field(x), &[0.0, 0.0], options.rk4_step, 1000, Integrator::Rk4)?;
    let fixed_point_stays = still.thetas.iter().all(|t| t == &[0.0, 0.0]);
    Ok(FirstIntegralCheck {
        points,
        max_directional_derivative: worst,
        fixed_point_stays,
        passed: worst < 1e-10 && fixed_point_stays,
    })
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
}

/// Minimisers of both cross-entropy directions on random 4-action
/// distributions.
pub fn minima_check(distributions: usize, rng: &mut ChaCha8Rng) -> MinimaCheck {
    let (mut forward, mut reverse): (f64, f64) = (0.0, 0.0);
    for _ in 0..distributions {
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|x| x / s).collect();
        let q = cross_entropy_minimizer(&p, XentDirection::TeacherGivenStudent, 20_000);
        forward = forward.max(total_variation(&q, &p));
        let best = (0..4).fold(0, |b, a| if p[a] > p[b] { a } else { b });
        let mut dirac = vec![0.0; 4];
        dirac[best] = 1.0;
        let q = cross_entropy_minimizer(&p, XentDirection::StudentGivenTeacher, 200_000);
        reverse = reverse.max(total_variation(&q, &dirac));
    }
    MinimaCheck {
        distributions,
        forward_max_tv: forward,
        reverse_max_tv: reverse,
        passed: forward < 1e-3 && reverse < 1e-3,
    }
}

/// Gradient-field classification, loss matching, the oscillation game and
/// the cross-entropy minima, with an overall pass flag.
pub fn verify_report(options: &VerifyOptions) -> Result<VerifyReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let ce = counterexample_fixture()?;
    let grid = three_state_fixture()?;
    let mut classification = Vec::new();
    let mut matches = Vec::new();
    for (preset, expected) in GRADIENT_CLASSES {
        classification.push(classify(&ce, "counterexample", preset, expected, options, &mut rng)?);
        classification.push(classify(&grid, "three_state", preset, expected, options, &mut rng)?);
        matches.push(match_gradient(&ce, "counterexample", preset, options, &mut rng)?);
        matches.push(match_gradient(&grid, "three_state", preset, options, &mut rng)?);
    }
    let oscillation = oscillation(options, [1.0, 1.0])?;
    let convergence = convergence(options, [1.0, 1.0])?;
    let first_integral = first_integral_check(options, &mut rng)?;
    let minima = minima_check(options.minima_distributions, &mut rng);
    let passed = classification.iter().all(|c| c.passed)
        && matches.iter().all(|m| m.passed)
        && oscillation.passed
        && convergence.passed
        && first_integral.passed
        && minima.passed;
    Ok(VerifyReport {
        options: options.clone(),
        classification,
        gradient_match: matches,
        oscillation,
        convergence,
        first_integral,
        minima,
        passed,
    })
}
