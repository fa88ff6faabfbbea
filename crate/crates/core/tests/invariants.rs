mod common;

use ccgan_core::ccgan::{
    curriculum_weights, generator_objective, AdaptationModel, CurriculumMode, LossWeights, TrainConfig,
};
use ccgan_core::eval::{train_on_split, Arm, ExperimentConfig};
use ccgan_core::synth::{make_multisource_task, TaskSpec};
use common::{randn, small_model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup(mode: CurriculumMode) -> (AdaptationModel, ndarray::Array2<f64>, Vec<usize>, ndarray::Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = small_model(&mut rng, 3, 2, mode, false);
    let src = randn(&mut rng, 6, 3);
    let tgt = randn(&mut rng, 6, 3);
    (m, src, (0..6).map(|i| i % 2).collect(), tgt)
}

#[test]
fn weights_move_with_the_discriminator_but_carry_no_gradient() {
    let (m, src, labels, tgt) = setup(CurriculumMode::ModelFree);
    let lw = LossWeights::default();
    let w = curriculum_weights(&m, &src, &tgt, CurriculumMode::ModelFree).unwrap();
    let mut moved = m.clone();
    moved.d_t.layers[0].weight[[0, 0]] += 0.5;
    let w2 = curriculum_weights(&moved, &src, &tgt, CurriculumMode::ModelFree).unwrap();
    assert_ne!(w.forward, w2.forward);
    // d_t is not trained by the generator phase, and g_st's gradient with
    // frozen weights matches differences taken with the same frozen weights
    let (_, grads) = generator_objective(&m, &src, &labels, &tgt, &w, CurriculumMode::ModelFree, lw, true).unwrap();
    assert!(!grads.contains_key("d_t"));
    let worst = common::check_model(&m, &grads, &|mm| {
        generator_objective(mm, &src, &labels, &tgt, &w, CurriculumMode::ModelFree, lw, true)
            .unwrap()
            .0
            .total
    });
    assert!(worst < common::FD_TOL, "{worst}");
}

#[test]
fn task_gradient_reaches_the_generator() {
    let (m, src, labels, tgt) = setup(CurriculumMode::None);
    let w = curriculum_weights(&m, &src, &tgt, CurriculumMode::None).unwrap();
    let only_task = LossWeights { cgan: 0.0, cyc: 0.0, uni: 0.0, task: 1.0 };
    let nothing = LossWeights { task: 0.0, ..only_task };
    let norm = |lw| {
        let (_, g) = generator_objective(&m, &src, &labels, &tgt, &w, CurriculumMode::None, lw, true).unwrap();
        g["g_st"].iter().map(|l| l.weight.iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>()
    };
    assert!(norm(only_task) > 0.0);
    assert_eq!(norm(nothing), 0.0);
}

#[test]
fn training_view_has_no_target_labels() {
    let task = make_multisource_task(&TaskSpec { n_per_class: 20, ..TaskSpec::default() }).unwrap();
    let view = task.training_view().unwrap();
    assert!(view.target.labels.iter().all(Option::is_none));
    assert!(view.source.labels.iter().all(Option::is_some));
}

#[test]
fn perturbed_target_labels_change_no_training_output() {
    let spec = TaskSpec { shifts: vec![0.5, 3.0], dim: 4, n_per_class: 40, seed: 2, ..TaskSpec::default() };
    let task = make_multisource_task(&spec).unwrap();
    let view = task.training_view().unwrap();
    let poisoned = task.target_labels.perturbed(11, 2);
    let train = TrainConfig { batch_size: 16, total_steps: 15, eval_every: 5, ..TrainConfig::default() };
    for arm in Arm::ALL {
        let cfg = ExperimentConfig::synthetic(spec.clone(), arm, train.clone());
        let a = train_on_split(&cfg, &view, &task.target_labels).unwrap();
        let b = train_on_split(&cfg, &view, &poisoned).unwrap();
        assert_eq!(a.model, b.model, "{arm}");
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!((x.total, x.disc_t, &x.source_weights), (y.total, y.disc_t, &y.source_weights));
        }
        // with two classes every label flips, so only the score changes
        for (x, y) in a.records.iter().zip(&b.records) {
            assert!((x.target_accuracy + y.target_accuracy - 1.0).abs() < 1e-12);
        }
    }
}
