/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Central-difference Jacobian J[i][j] = ∂v_i/∂θ_j.
pub fn jacobian<F, Err>(field: F, theta: &[f64], step: f64) -> Result<Vec<Vec<f64>>, Err>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, Err>,
{
    let n = theta.len();
    let mut jac = vec![vec![0.0; n]; n];
    let mut probe = theta.to_vec();
    for j in 0..n {
        probe[j] = theta[j] + step;
        let plus = field(&probe)?;
        probe[j] = theta[j] - step;
        let minus = field(&probe)?;
        probe[j] = theta[j];
        for i in 0..n {
            jac[i][j] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// max_{i,j} |J_ij - J_ji|.
pub fn jacobian_symmetry_defect(jac: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..jac.len() {
        for j in i + 1..jac.len() {
            worst = worst.max((jac[i][j] - jac[j][i]).abs());
        }
    }
    worst
}

/// Central-difference gradient of a scalar function.
pub fn finite_difference_gradient<F, Err>(f: F, theta: &[f64], step: f64) -> Result<Vec<f64>, Err>
where
    F: Fn(&[f64]) -> Result<f64, Err>,
{
    let mut probe = theta.to_vec();
    let mut grad = vec![0.0; theta.len()];
    for j in 0..theta.len() {
        probe[j] = theta[j] + step;
        let plus = f(&probe)?;
        probe[j] = theta[j] - step;
        let minus = f(&probe)?;
        probe[j] = theta[j];
        grad[j] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// max_i |v_i + ∂L/∂θ_i|: how far a velocity is from descending `loss`.
pub fn gradient_match(velocity: &[f64], loss_gradient: &[f64]) -> f64 {
    velocity.iter().zip(loss_gradient).map(|(v, g)| (v + g).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn gradient_field_has_symmetric_jacobian() {
        // v = -∇(x²y + y³)
        let field = |t: &[f64]| -> Result<Vec<f64>, Infallible> {
            Ok(vec![-2.0 * t[0] * t[1], -(t[0] * t[0] + 3.0 * t[1] * t[1])])
        };
        let jac = jacobian(field, &[0.3, -0.7], FD_STEP).unwrap();
        assert!(jacobian_symmetry_defect(&jac) < 1e-8);
    }

    #[test]
    fn rotation_is_not_symmetric() {
        let field = |t: &[f64]| -> Result<Vec<f64>, Infallible> { Ok(vec![-t[1], t[0]]) };
        let jac = jacobian(field, &[0.0, 0.0], FD_STEP).unwrap();
        assert!((jacobian_symmetry_defect(&jac) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn descending_velocity_matches() {
        let loss = |t: &[f64]| -> Result<f64, Infallible> { Ok(t[0].powi(2) + t[0] * t[1]) };
        let theta = [0.4, 1.1];
        let g = finite_difference_gradient(loss, &theta, FD_STEP).unwrap();
        let v = [-(2.0 * 0.4 + 1.1), -0.4];
        assert!(gradient_match(&v, &g) < 1e-9);
    }
}
