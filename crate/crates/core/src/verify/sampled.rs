use rand::Rng;

use super::{Fixture, VerifyError};
use crate::distill::{DistillConfig, DistillState, Distiller, MethodSpec};
use crate::mdp::Environment;
use crate::tabular::ValueTable;

/// Componentwise mean and standard error of sampled per-episode updates.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateEstimate {
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    pub episodes: usize,
}

impl UpdateEstimate {
    /// Largest |mean - exact| in units of SEM. Components without spread
    /// count as 0 when equal to within 1e-12, infinite otherwise.
    pub fn max_z(&self, exact: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.sem)
            .zip(exact)
            .map(|((m, s), e)| {
                let gap = (m - e).abs();
                if gap <= 1e-12 {
                    0.0
                } else if *s == 0.0 {
                    f64::INFINITY
                } else {
                    gap / s
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn within(&self, exact: &[f64], sems: f64) -> bool {
        self.max_z(exact) <= sems
    }
}

/// Samples `episodes` engine updates at fixed parameters θ (no update is
/// applied) and summarises them in parameter space, in theory mode (γ = 1)
/// like [`Fixture::dynamics`]. `baseline` is the student critic the engine
/// subtracts.
pub fn monte_carlo_update<E, R>(
    fixture: &Fixture<E>,
    spec: MethodSpec,
    theta: &[f64],
    baseline: &ValueTable,
    episodes: usize,
    rng: &mut R,
) -> Result<UpdateEstimate, VerifyError>
where
    E: Environment,
    R: Rng + ?Sized,
{
    let actions = fixture.env.action_count();
    let distiller = Distiller::new(
        &fixture.env,
        &fixture.observations,
        &fixture.teacher,
        spec.with_gamma(1.0),
        DistillConfig { max_episode_len: usize::MAX, ..DistillConfig::default() },
    )?;
    let param = &fixture.parametrization;
    let mut state = DistillState::new(actions);
    state.policy = param.policy(theta)?;
    state.baseline = baseline.clone();
    let n = param.dim();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut dense = vec![0.0; fixture.observations.len() * actions];
    for _ in 0..episodes {
        let episode = distiller.sample(&state, rng)?;
        let update = distiller.episode_update(&state, &episode);
        dense.iter_mut().for_each(|x| *x = 0.0);
        for (o, row) in update.logits.logit_entries() {
            dense[o.index() * actions..(o.index() + 1) * actions].copy_from_slice(row);
        }
        for (i, v) in param.project(&dense).into_iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let k = episodes as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / k).collect();
    let sem = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| {
            let var = ((sq - k * m * m) / (k - 1.0)).max(0.0);
            (var / k).sqrt()
        })
        .collect();
    Ok(UpdateEstimate { mean, sem, episodes })
}
