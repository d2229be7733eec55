use nalgebra::{DMatrix, DVector};

use super::TeacherError;
use crate::mdp::{Environment, StateId};

/// Optimal values and action values, indexed by state. Rows of
/// non-decision states are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl ValueIteration {
    /// Greedy action set at `state`.
    pub fn greedy_actions(&self, state: StateId, tolerance: f64) -> Vec<usize> {
        let row = &self.q[state];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..row.len()).filter(|&a| row[a] >= max - tolerance).collect()
    }
}

pub fn value_iteration<E: Environment + ?Sized>(
    env: &E,
    gamma: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ValueIteration, TeacherError> {
    let n = env.state_count();
    let actions = env.action_count();
    let states = env.decision_states();
    let mut outcomes = vec![Vec::new(); n];
    for &s in &states {
        outcomes[s] = (0..actions).map(|a| env.outcomes(s, a)).collect::<Result<Vec<_>, _>>()?;
    }
    let mut values = vec![0.0; n];
    let mut q = vec![vec![0.0; actions]; n];
    for it in 1..=max_iterations {
        let mut delta: f64 = 0.0;
        for &s in &states {
            for a in 0..actions {
                q[s][a] = outcomes[s][a]
                    .iter()
                    .map(|o| o.prob * (o.reward + gamma * o.next.map_or(0.0, |n| values[n])))
                    .sum();
            }
            let best = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - values[s]).abs());
            values[s] = best;
        }
        if delta < tolerance {
            return Ok(ValueIteration { values, q, iterations: it });
        }
    }
    Err(TeacherError::NonTerminating)
}

/// Exact value of a stationary state-conditional policy, by a linear solve.
/// Non-decision states are worth 0.
pub fn evaluate_policy<E, F>(env: &E, policy: F, gamma: f64) -> Result<Vec<f64>, TeacherError>
where
    E: Environment + ?Sized,
    F: Fn(StateId) -> Vec<f64>,
{
    let n = env.state_count();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let mut predecessors = vec![Vec::new(); n];
    let mut ends = Vec::new();
    for s in env.decision_states() {
        let probs = policy(s);
        for (act, p) in probs.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            for o in env.outcomes(s, act)? {
                b[s] += p * o.prob * o.reward;
                match o.next {
                    Some(next) => {
                        a[(s, next)] -= gamma * p * o.prob;
                        predecessors[next].push(s);
                    }
                    None => ends.push(s),
                }
            }
        }
    }
    if gamma >= 1.0 && !ends_reachable(env, &predecessors, ends) {
        return Err(TeacherError::NonTerminating);
    }
    let v = a.lu().solve(&b).ok_or(TeacherError::NonTerminating)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(TeacherError::NonTerminating);
    }
    Ok(v.iter().copied().collect())
}

/// Whether every decision state can reach the end of the episode.
fn ends_reachable<E: Environment + ?Sized>(env: &E, predecessors: &[Vec<StateId>], ends: Vec<StateId>) -> bool {
    let mut seen = vec![false; predecessors.len()];
    let mut stack = ends;
    while let Some(s) = stack.pop() {
        if std::mem::replace(&mut seen[s], true) {
            continue;
        }
        stack.extend(predecessors[s].iter().copied().filter(|p| !seen[*p]));
    }
    env.decision_states().into_iter().all(|s| seen[s])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{CorridorWorld, GridWorld, RIGHT};
    use approx::assert_abs_diff_eq;

    #[test]
    fn corridor_optimum_is_always_right() {
        let c = CorridorWorld::new(3).unwrap();
        let vi = value_iteration(&c, 0.9, 1e-14, 1000).unwrap();
        for s in c.decision_states() {
            assert_abs_diff_eq!(vi.values[s], c.always_right_value(s, 0.9), epsilon = 1e-12);
            assert_eq!(vi.greedy_actions(s, 1e-12), vec![RIGHT]);
        }
    }

    #[test]
    fn policy_evaluation_matches_closed_form() {
        let c = CorridorWorld::new(2).unwrap();
        let right = evaluate_policy(&c, |_| vec![0.0, 1.0], 0.9).unwrap();
        let left = evaluate_policy(&c, |_| vec![1.0, 0.0], 0.9).unwrap();
        assert_abs_diff_eq!(right[2], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(left[2], -0.9, epsilon = 1e-12);
        // Symmetric random walk: the middle is worth 0 by symmetry.
        let uniform = evaluate_policy(&c, |_| vec![0.5, 0.5], 1.0).unwrap();
        assert_abs_diff_eq!(uniform[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(uniform[3], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn non_terminating_policy_is_rejected() {
        // A grid without terminals or random termination never ends.
        let g = GridWorld::open(2, 2).with_dynamics(0.0, 0.0).unwrap();
        assert_eq!(
            evaluate_policy(&g, |_| vec![0.25; 4], 1.0),
            Err(TeacherError::NonTerminating)
        );
    }
}
