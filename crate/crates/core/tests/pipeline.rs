use vta_core::aligner::align_pair;
use vta_core::metrics::{alignment_accuracy, kendalls_tau, LabeledSequence};
use vta_core::synthgen::{generate_pair, scenario};
use vta_core::trainer::{train, TrainConfig};
use vta_core::vavaloss::total_loss;
use vta_core::{EmbeddingSequenceF32, Hyperparams};

#[test]
fn generated_pair_aligns_to_its_ground_truth() {
    let (x, y, truth) = generate_pair(&scenario("background", 21).unwrap()).unwrap();
    let (alignment, plan) = align_pair(&x, &y, &Hyperparams::default()).unwrap();
    assert!(plan.converged());
    let report = alignment_accuracy(&alignment, &truth).unwrap();
    assert!(report.accuracy > 0.9, "{report:?}");
    assert!(report.virtual_recall > 0.8, "{report:?}");
}

#[test]
fn single_and_double_precision_agree_on_the_alignment() {
    let (x, y, _) = generate_pair(&scenario("offset", 5).unwrap()).unwrap();
    let hp = Hyperparams::default();
    let (a64, _) = align_pair(&x, &y, &hp).unwrap();
    let (x32, y32): (EmbeddingSequenceF32, EmbeddingSequenceF32) = (x.cast(), y.cast());
    let (a32, _) = align_pair(&x32, &y32, &hp).unwrap();
    let agree = a64.x_to_y.iter().zip(&a32.x_to_y).filter(|(a, b)| a == b).count();
    assert!(agree as f64 >= 0.95 * a64.x_to_y.len() as f64);
}

#[test]
fn short_training_lowers_the_loss_and_keeps_shapes() {
    let base = vta_core::synthgen::SynthConfig {
        num_actions: 3,
        frames_per_action: vta_core::synthgen::FrameRange { min: 4, max: 5 },
        embed_dim: 3,
        nuisance_dims: 2,
        nuisance_std: 1.0,
        ..Default::default()
    };
    let pairs: Vec<_> = (0..3)
        .map(|s| {
            let (x, y, _) = generate_pair(&base.with_seed(s)).unwrap();
            (x, y)
        })
        .collect();
    let cfg = TrainConfig {
        steps: 30,
        embed_dim: 2,
        adaptive_step: true,
        ..TrainConfig::default()
    };
    let out = train(&pairs, &cfg).unwrap();
    assert_eq!(out.curve.len(), 30);
    assert!(out.curve.last().unwrap().total < out.curve[0].total);
    let (x, y) = &pairs[0];
    let (ex, ey) = (out.encoder.forward(x).unwrap(), out.encoder.forward(y).unwrap());
    assert_eq!((ex.len(), ex.dim()), (x.len(), 2));
    assert!(kendalls_tau(&ex, &ey).unwrap().is_finite());
    assert!(total_loss(&ex, &ey, &cfg.hp, 0).unwrap().total.is_finite());
}

#[test]
fn labeled_sequences_come_from_ground_truth() {
    let (x, y, truth) = generate_pair(&scenario("redundant", 2).unwrap()).unwrap();
    let (lx, ly) = LabeledSequence::pair_from_truth(x, y, &truth).unwrap();
    assert_eq!(lx.phase, truth.x_action);
    assert_eq!(ly.progress.as_deref(), Some(truth.y_progress.as_slice()));
}
