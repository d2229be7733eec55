use crate::tabular::{softmax, XentDirection, TEACHER_PROB_FLOOR};

/// Minimises a cross entropy against `p` over q = softmax(z) by gradient
/// descent on z from the uniform distribution.
///
/// `TeacherGivenStudent` minimises H×(p‖q); `StudentGivenTeacher`
/// minimises H×(q‖p).
pub fn cross_entropy_minimizer(p: &[f64], direction: XentDirection, iterations: usize) -> Vec<f64> {
    const STEP: f64 = 1.0;
    let cost: Vec<f64> = p.iter().map(|x| -x.max(TEACHER_PROB_FLOOR).ln()).collect();
    let mut logits = vec![0.0; p.len()];
    let mut grad = vec![0.0; p.len()];
    for _ in 0..iterations {
        let q = softmax(&logits);
        match direction {
            XentDirection::TeacherGivenStudent => {
                for ((g, q), p) in grad.iter_mut().zip(&q).zip(p) {
                    *g = q - p;
                }
            }
            XentDirection::StudentGivenTeacher => {
                let mean: f64 = q.iter().zip(&cost).map(|(q, c)| q * c).sum();
                for ((g, q), c) in grad.iter_mut().zip(&q).zip(&cost) {
                    *g = q * (c - mean);
                }
            }
        }
        if grad.iter().all(|g| g.abs() < 1e-15) {
            break;
        }
        for (z, g) in logits.iter_mut().zip(&grad) {
            *z -= STEP * g;
        }
    }
    softmax(&logits)
}
