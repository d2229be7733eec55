use serde::{Deserialize, Serialize};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Expected on-policy cloning update of the oscillation game with the
/// environment reward, in closed form. θ = (root R logit, second-step L logit).
pub fn closed_form_field(theta: [f64; 2]) -> [f64; 2] {
    // e^x (e^y - 1) / ((1 + e^x)² (1 + e^y)) = σx (1 - σx)(σy - (1 - σy)), likewise for y.
    let (px, py) = (sigmoid(theta[0]), sigmoid(theta[1]));
    let (qx, qy) = (1.0 - px, 1.0 - py);
    [px * qx * (py - qy), py * qy * (qx - px)]
}

/// H(θ) = e^x + e^-x + e^y + e^-y, conserved by [`closed_form_field`].
pub fn first_integral(theta: [f64; 2]) -> f64 {
    theta[0].exp() + (-theta[0]).exp() + theta[1].exp() + (-theta[1]).exp()
}

pub fn first_integral_gradient(theta: [f64; 2]) -> [f64; 2] {
    [2.0 * theta[0].sinh(), 2.0 * theta[1].sinh()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

/// Parameters at increasing times along an integrated path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OdePath {
    pub times: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
}

impl OdePath {
    fn push(&mut self, t: f64, theta: &[f64]) {
        self.times.push(t);
        self.thetas.push(theta.to_vec());
    }

    pub fn last(&self) -> &[f64] {
        self.thetas.last().expect("paths hold the start point")
    }

    /// H along a two-parameter path.
    pub fn first_integrals(&self) -> Vec<f64> {
        self.thetas.iter().map(|t| first_integral([t[0], t[1]])).collect()
    }
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(y, x)| y + a * x).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rk4_step<F, Err>(field: &F, theta: &[f64], h: f64) -> Result<Vec<f64>, Err>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, Err>,
{
    let k1 = field(theta)?;
    let k2 = field(&axpy(h / 2.0, &k1, theta))?;
    let k3 = field(&axpy(h / 2.0, &k2, theta))?;
    let k4 = field(&axpy(h, &k3, theta))?;
    Ok(theta
        .iter()
        .enumerate()
        .map(|(i, t)| t + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Fixed-step integration of θ̇ = field(θ); the path holds all n + 1 points.
pub fn integrate<F, Err>(
    field: F,
    theta0: &[f64],
    step: f64,
    steps: usize,
    integrator: Integrator,
) -> Result<OdePath, Err>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, Err>,
{
    let mut path = OdePath::default();
    let mut theta = theta0.to_vec();
    path.push(0.0, &theta);
    for n in 1..=steps {
        theta = match integrator {
            Integrator::Euler => axpy(step, &field(&theta)?, &theta),
            Integrator::Rk4 => rk4_step(&field, &theta, step)?,
        };
        path.push(n as f64 * step, &theta);
    }
    Ok(path)
}

/// RK4 with step doubling: each step is compared against two half steps and
/// the step size adapts to keep the difference below `local_tolerance`.
/// Stops once the field norm falls below `stop_norm` or after `max_steps`
/// accepted steps.
pub fn integrate_until<F, Err>(
    field: F,
    theta0: &[f64],
    initial_step: f64,
    local_tolerance: f64,
    stop_norm: f64,
    max_steps: usize,
) -> Result<OdePath, Err>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, Err>,
{
    let mut path = OdePath::default();
    let mut theta = theta0.to_vec();
    let mut t = 0.0;
    let mut h = initial_step;
    path.push(t, &theta);
    let mut accepted = 0;
    while accepted < max_steps && norm(&field(&theta)?) >= stop_norm {
        let full = rk4_step(&field, &theta, h)?;
        let half = rk4_step(&field, &theta, h / 2.0)?;
        let fine = rk4_step(&field, &half, h / 2.0)?;
        let err = full.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err <= local_tolerance {
            theta = fine;
            t += h;
            accepted += 1;
            path.push(t, &theta);
            if err < local_tolerance / 32.0 {
                h *= 2.0;
            }
        } else {
            h /= 2.0;
        }
    }
    Ok(path)
}
