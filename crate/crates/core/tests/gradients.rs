mod common;

use common::{gradient_errors, objective, tiny_setup};
use wkd::distill::KdConfig;

fn assert_small(errors: &[(String, f64)]) {
    for (name, err) in errors {
        assert!(*err < 1e-3, "{name}: relative error {err:e}");
    }
}

#[test]
fn vae_loss_gradients_for_teacher_and_student() {
    let s = tiny_setup(3, true);
    assert_small(&gradient_errors(s.teacher.model(), &s, None));
    assert_small(&gradient_errors(&s.student, &s, None));
    let bare = tiny_setup(4, false);
    assert_small(&gradient_errors(&bare.student, &bare, None));
}

#[test]
fn distillation_gradients_every_variant() {
    let s = tiny_setup(5, true);
    let base = KdConfig {
        alpha: 0.6,
        temperature: 2.5,
        ..KdConfig::default()
    };
    for kd in [
        base,
        KdConfig { use_ce: false, ..base },
        KdConfig { use_2w: false, ..base },
        KdConfig { alpha: 1.0, ..base },
    ] {
        let errors = gradient_errors(&s.student, &s, Some(&kd));
        for (name, err) in &errors {
            assert!(*err < 1e-3, "{kd:?} {name}: relative error {err:e}");
        }
    }
}

// `TeacherTheta::Student` feeds the detached student sample to the teacher
// decoder, so its soft targets move with the student parameters while the
// analytic gradient holds them fixed; finite differences do not apply.

#[test]
fn teacher_receives_no_gradient() {
    let s = tiny_setup(6, true);
    let before = s.teacher.checksum();
    let kd = KdConfig::default();
    let mut rng = wkd::rng::stream(1, "dropout", 0);
    let step = wkd::training::build_step(
        &s.student,
        &s.student_batch,
        &s.prior,
        &s.noise,
        wkd::nn::Mode::Train,
        &mut rng,
        Some((&s.teacher, &s.teacher_batch, &kd)),
    )
    .unwrap();
    let grads = step.tape.backward(step.objective).unwrap();
    let teacher_vars = &step.kd.as_ref().unwrap().teacher_params;
    assert!(!teacher_vars.is_empty());
    for &v in teacher_vars {
        if let Some(g) = grads.get(v) {
            assert!(g.iter().all(|&x| x == 0.0));
        }
    }
    let _ = objective(&s.student, &s, Some(&kd), true);
    assert_eq!(s.teacher.checksum(), before);
}
