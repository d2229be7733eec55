use distill_core::mdp::ObsId;
use distill_core::tabular::*;
use proptest::prelude::*;

const H: f64 = 1e-5;

fn fd<F: Fn(&[f64]) -> f64>(f: F, z: &[f64]) -> Vec<f64> {
    let mut probe = z.to_vec();
    (0..z.len())
        .map(|i| {
            probe[i] = z[i] + H;
            let plus = f(&probe);
            probe[i] = z[i] - H;
            let minus = f(&probe);
            probe[i] = z[i];
            (plus - minus) / (2.0 * H)
        })
        .collect()
}

fn close(analytic: &[f64], numeric: &[f64]) -> bool {
    analytic.iter().zip(numeric).all(|(a, n)| (a - n).abs() <= 1e-6 * a.abs().max(1.0))
}

fn logits(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n)
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..1.0f64, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

fn policy_with(z: &[f64]) -> PolicyTable {
    let mut p = PolicyTable::new(z.len());
    p.set_logits(ObsId(0), z);
    p
}

proptest! {
    #[test]
    fn logprob_gradient_matches_finite_differences(z in logits(5), a in 0usize..5, coef in -2.0..2.0f64) {
        let mut acc = UpdateAccumulator::new();
        accumulate_logprob_gradient(&mut acc, &policy_with(&z), ObsId(0), a, coef);
        let numeric: Vec<f64> = fd(|x| coef * log_softmax(x)[a], &z);
        prop_assert!(close(acc.pending_logits(ObsId(0)).unwrap(), &numeric));
    }

    #[test]
    fn teacher_given_student_gradient_matches(z in logits(4), p in distribution(4)) {
        let mut acc = UpdateAccumulator::new();
        accumulate_cross_entropy_gradient(&mut acc, &p, &policy_with(&z), ObsId(0), XentDirection::TeacherGivenStudent, 1.0).unwrap();
        let numeric = fd(|x| cross_entropy(&p, &log_softmax(x)), &z);
        prop_assert!(close(acc.pending_logits(ObsId(0)).unwrap(), &numeric));
    }

    #[test]
    fn student_given_teacher_gradient_matches(z in logits(4), p in distribution(4)) {
        let mut acc = UpdateAccumulator::new();
        accumulate_cross_entropy_gradient(&mut acc, &p, &policy_with(&z), ObsId(0), XentDirection::StudentGivenTeacher, 1.0).unwrap();
        let log_p: Vec<f64> = p.iter().map(|x| x.ln()).collect();
        let numeric = fd(|x| cross_entropy(&softmax(x), &log_p), &z);
        prop_assert!(close(acc.pending_logits(ObsId(0)).unwrap(), &numeric));
    }

    #[test]
    fn matching_gradients_match_their_losses(z in logits(4), p in distribution(4), scale in 0.5..5.0f64) {
        for m in [Matching::CrossEntropy, Matching::InformationPotential { scale }] {
            for dir in [XentDirection::TeacherGivenStudent, XentDirection::StudentGivenTeacher] {
                let q = softmax(&z);
                let mut g = vec![0.0; 4];
                m.add_gradient(dir, &p, &q, 1.0, &mut g);
                let numeric = fd(|x| m.loss(dir, &p, &softmax(x), &log_softmax(x)), &z);
                prop_assert!(close(&g, &numeric), "{m:?} {dir:?}");
            }
        }
    }

    #[test]
    fn softmax_is_shift_invariant_and_positive(z in logits(6), c in -50.0..50.0f64) {
        let a = softmax(&z);
        let b = softmax(&z.iter().map(|x| x + c).collect::<Vec<_>>());
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(a.iter().all(|p| *p > 0.0));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn accumulation_order_does_not_matter(z in logits(3), moves in prop::collection::vec((0usize..3, -1.0..1.0f64), 1..8)) {
        let policy = policy_with(&z);
        let mut forward = UpdateAccumulator::new();
        let mut backward = UpdateAccumulator::new();
        for (a, c) in &moves {
            accumulate_logprob_gradient(&mut forward, &policy, ObsId(0), *a, *c);
        }
        for (a, c) in moves.iter().rev() {
            accumulate_logprob_gradient(&mut backward, &policy, ObsId(0), *a, *c);
        }
        let (f, b) = (forward.pending_logits(ObsId(0)).unwrap(), backward.pending_logits(ObsId(0)).unwrap());
        for (x, y) in f.iter().zip(b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_logprob_example() {
    let mut acc = UpdateAccumulator::new();
    accumulate_logprob_gradient(&mut acc, &PolicyTable::new(4), ObsId(0), 2, 1.0);
    assert_eq!(acc.pending_logits(ObsId(0)).unwrap(), &[-0.25, -0.25, 0.75, -0.25]);
}

#[test]
fn matched_cloning_has_zero_gradient() {
    let z = [0.3, -1.0, 2.0];
    let mut acc = UpdateAccumulator::new();
    accumulate_cross_entropy_gradient(&mut acc, &softmax(&z), &policy_with(&z), ObsId(0), XentDirection::TeacherGivenStudent, 1.0)
        .unwrap();
    assert!(acc.pending_logits(ObsId(0)).unwrap().iter().all(|g| g.abs() < 1e-15));
}

#[test]
fn clamped_dirac_teacher_pulls_toward_its_action() {
    let teacher = clamp_teacher(&[0.0, 1.0, 0.0]);
    let mut acc = UpdateAccumulator::new();
    let policy = PolicyTable::new(3);
    accumulate_cross_entropy_gradient(&mut acc, &teacher, &policy, ObsId(0), XentDirection::StudentGivenTeacher, -1.0).unwrap();
    let step = acc.pending_logits(ObsId(0)).unwrap();
    assert!(step[1] > 0.0 && step[0] < 0.0 && step[2] < 0.0);
    let raw = [0.0, 1.0, 0.0];
    let err = accumulate_cross_entropy_gradient(&mut acc, &raw, &policy, ObsId(0), XentDirection::StudentGivenTeacher, 1.0);
    assert_eq!(err, Err(TabularError::DegenerateTeacher { action: 0 }));
}
