//! Alignment and representation quality metrics.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aligner::AlignmentResult;
use crate::error::{Error, Result};
use crate::seqcore::{frame_distance, EmbeddingSequence};
use crate::synthgen::GroundTruthAlignment;

/// Ridge added to the normal equations of the linear probes.
const RIDGE: f64 = 1e-8;

/// Embeddings with per-frame phase ids (`-1` is background) and optional
/// within-phase progress.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub embedding: EmbeddingSequence<f64>,
    pub phase: Vec<i64>,
    pub progress: Option<Vec<f64>>,
}

impl LabeledSequence {
    pub fn new(embedding: EmbeddingSequence<f64>, phase: Vec<i64>, progress: Option<Vec<f64>>) -> Result<Self> {
        let n = embedding.len();
        if phase.len() != n {
            return Err(Error::dim(format!("{} phase labels for {n} frames", phase.len())));
        }
        if let Some(p) = &progress {
            if p.len() != n {
                return Err(Error::dim(format!("{} progress values for {n} frames", p.len())));
            }
            if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::param(format!("progress {v} outside [0, 1]")));
            }
        }
        Ok(Self {
            embedding,
            phase,
            progress,
        })
    }

    /// Labels for both sequences of a generated pair.
    pub fn pair_from_truth(
        x: EmbeddingSequence<f64>,
        y: EmbeddingSequence<f64>,
        truth: &GroundTruthAlignment,
    ) -> Result<(Self, Self)> {
        Ok((
            Self::new(x, truth.x_action.clone(), Some(truth.x_progress.clone()))?,
            Self::new(y, truth.y_action.clone(), Some(truth.y_progress.clone()))?,
        ))
    }
}

/// Index of the nearest frame of `y` for every frame of `x` (ties to the lowest index).
pub fn nearest_neighbors(x: &EmbeddingSequence<f64>, y: &EmbeddingSequence<f64>) -> Vec<usize> {
    (0..x.len())
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for j in 0..y.len() {
                let d = frame_distance(x.frame(i), y.frame(j));
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// `(concordant - discordant) / (n (n - 1) / 2)` over a retrieved index list;
/// equal indices count as discordant.
pub fn kendalls_tau_indices(retrieved: &[usize]) -> Result<f64> {
    let n = retrieved.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("Kendall's tau needs at least 2 frames, got {n}")));
    }
    let mut score: i64 = 0;
    for a in 0..n {
        for b in a + 1..n {
            score += if retrieved[b] > retrieved[a] { 1 } else { -1 };
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// Kendall's tau of nearest-neighbour retrieval from `x` into `y`.
pub fn kendalls_tau(x: &EmbeddingSequence<f64>, y: &EmbeddingSequence<f64>) -> Result<f64> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::Degenerate(format!(
            "Kendall's tau needs at least 2 frames per sequence, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.dim() != y.dim() {
        return Err(Error::dim(format!("dimensions {} and {} differ", x.dim(), y.dim())));
    }
    kendalls_tau_indices(&nearest_neighbors(x, y))
}

fn design(rows: &[&[f64]]) -> DMatrix<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), d + 1, |i, k| if k < d { rows[i][k] } else { 1.0 })
}

/// Least-squares weights with a small ridge (bias unpenalized).
fn fit_linear(x: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut gram = x.transpose() * x;
    let d = gram.nrows();
    let scale = (0..d).map(|k| gram[(k, k)]).sum::<f64>() / d as f64;
    for k in 0..d - 1 {
        gram[(k, k)] += RIDGE * scale.max(1.0);
    }
    let rhs = x.transpose() * targets;
    gram.clone().cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| Error::Degenerate("singular normal equations".into()))
}

fn frame_rows(seqs: &[LabeledSequence]) -> (Vec<Vec<f64>>, Vec<i64>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for s in seqs {
        for (i, &p) in s.phase.iter().enumerate() {
            rows.push(s.embedding.frame(i).to_vec());
            labels.push(p);
        }
    }
    (rows, labels)
}

/// Per-frame accuracy of a one-vs-rest least-squares probe trained on a
/// uniformly sampled `fraction` of the training frames.
pub fn phase_classification(
    train: &[LabeledSequence],
    test: &[LabeledSequence],
    fraction: f64,
    seed: u64,
) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let (rows, labels) = frame_rows(train);
    let (test_rows, test_labels) = frame_rows(test);
    if rows.is_empty() || test_rows.is_empty() {
        return Err(Error::Degenerate("phase classification needs training and test frames".into()));
    }
    let total = rows.len();
    let take = ((fraction * total as f64).ceil() as usize).clamp(1, total);
    let mut picked: Vec<usize> = if take == total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, total, take).into_vec()
    };
    picked.sort_unstable();

    let classes: Vec<i64> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let seen: BTreeSet<i64> = picked.iter().map(|&i| labels[i]).collect();
    if let Some(missing) = classes.iter().find(|c| !seen.contains(c)) {
        return Err(Error::Sampling(format!(
            "phase {missing} is absent from the sampled training frames"
        )));
    }
    let sample: Vec<&[f64]> = picked.iter().map(|&i| rows[i].as_slice()).collect();
    let x = design(&sample);
    let y = DMatrix::from_fn(picked.len(), classes.len(), |r, c| {
        if labels[picked[r]] == classes[c] { 1.0 } else { 0.0 }
    });
    let w = fit_linear(&x, &y)?;

    let test_refs: Vec<&[f64]> = test_rows.iter().map(|r| r.as_slice()).collect();
    let scores = design(&test_refs) * w;
    let correct = (0..test_rows.len())
        .filter(|&r| {
            let mut best = 0;
            for c in 1..classes.len() {
                if scores[(r, c)] > scores[(r, best)] {
                    best = c;
                }
            }
            classes[best] == test_labels[r]
        })
        .count();
    Ok(correct as f64 / test_rows.len() as f64)
}

/// Mean held-out R^2 of a linear progress regressor. Even-indexed sequences
/// train the regressor, odd-indexed ones are scored; background frames
/// (phase < 0) are ignored and sequences with constant progress are skipped.
pub fn phase_progression(seqs: &[LabeledSequence]) -> Result<f64> {
    let progress: Vec<&Vec<f64>> = seqs
        .iter()
        .map(|s| s.progress.as_ref().ok_or_else(|| Error::Config("progress values are missing".into())))
        .collect::<Result<_>>()?;
    if seqs.len() < 2 {
        return Err(Error::Degenerate("phase progression needs at least two sequences".into()));
    }
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut target = Vec::new();
    let frames: Vec<Vec<Vec<f64>>> = seqs
        .iter()
        .map(|s| s.embedding.frames().rows().into_iter().map(|r| r.to_vec()).collect())
        .collect();
    for k in (0..seqs.len()).step_by(2) {
        for (i, row) in frames[k].iter().enumerate() {
            if seqs[k].phase[i] >= 0 {
                rows.push(row);
                target.push(progress[k][i]);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Degenerate("no labeled training frames".into()));
    }
    let w = fit_linear(&design(&rows), &DMatrix::from_column_slice(target.len(), 1, &target))?;
    let w = DVector::from_column_slice(w.as_slice());

    let mut scores = Vec::new();
    for k in (1..seqs.len()).step_by(2) {
        let keep: Vec<usize> = (0..frames[k].len()).filter(|&i| seqs[k].phase[i] >= 0).collect();
        let truth: Vec<f64> = keep.iter().map(|&i| progress[k][i]).collect();
        let mean = truth.iter().sum::<f64>() / truth.len().max(1) as f64;
        let ss_tot: f64 = truth.iter().map(|v| (v - mean).powi(2)).sum();
        if ss_tot <= f64::EPSILON {
            continue;
        }
        let refs: Vec<&[f64]> = keep.iter().map(|&i| frames[k][i].as_slice()).collect();
        let pred = design(&refs) * &w;
        let ss_res: f64 = truth.iter().zip(pred.iter()).map(|(t, p)| (t - p).powi(2)).sum();
        scores.push(1.0 - ss_res / ss_tot);
    }
    if scores.is_empty() {
        return Err(Error::Degenerate("every held-out sequence has constant progress".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Frame-match accuracy and virtual-frame detection quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub virtual_precision: f64,
    pub virtual_recall: f64,
    pub frames: usize,
    pub true_virtual: usize,
    pub predicted_virtual: usize,
    pub detected_virtual: usize,
}

impl AccuracyReport {
    /// Pools several reports by summing their counts.
    pub fn pooled(reports: &[AccuracyReport]) -> AccuracyReport {
        let mut correct = 0.0;
        let mut out = AccuracyReport {
            accuracy: 0.0,
            virtual_precision: 0.0,
            virtual_recall: 0.0,
            frames: 0,
            true_virtual: 0,
            predicted_virtual: 0,
            detected_virtual: 0,
        };
        for r in reports {
            correct += r.accuracy * r.frames as f64;
            out.frames += r.frames;
            out.true_virtual += r.true_virtual;
            out.predicted_virtual += r.predicted_virtual;
            out.detected_virtual += r.detected_virtual;
        }
        out.accuracy = if out.frames > 0 { correct / out.frames as f64 } else { 0.0 };
        out.virtual_precision = ratio(out.detected_virtual, out.predicted_virtual);
        out.virtual_recall = ratio(out.detected_virtual, out.true_virtual);
        out
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 { 0.0 } else { a as f64 / b as f64 }
}

/// Scores predicted partners of both sequences against the truth. A frame
/// counts as correct when its predicted partner carries the same action as
/// its true partner, or when both are virtual.
pub fn alignment_accuracy(pred: &AlignmentResult, truth: &GroundTruthAlignment) -> Result<AccuracyReport> {
    if pred.x_to_y.len() != truth.x_partner.len() || pred.y_to_x.len() != truth.y_partner.len() {
        return Err(Error::dim(format!(
            "prediction covers {}x{} frames, truth {}x{}",
            pred.x_to_y.len(),
            pred.y_to_x.len(),
            truth.x_partner.len(),
            truth.y_partner.len()
        )));
    }
    let mut correct = 0usize;
    let mut true_virtual = 0usize;
    let mut predicted_virtual = 0usize;
    let mut detected = 0usize;
    let sides = [
        (&pred.x_to_y, &truth.x_partner, &truth.y_action),
        (&pred.y_to_x, &truth.y_partner, &truth.x_action),
    ];
    for (p, t, partner_action) in sides {
        for (&pp, &tp) in p.iter().zip(t.iter()) {
            let ok = match (pp, tp) {
                (None, None) => true,
                (Some(a), Some(b)) => {
                    let n = partner_action.len();
                    if a >= n {
                        return Err(Error::dim(format!("partner {a} out of range")));
                    }
                    partner_action[a] == partner_action[b]
                }
                _ => false,
            };
            correct += ok as usize;
            true_virtual += tp.is_none() as usize;
            predicted_virtual += pp.is_none() as usize;
            detected += (pp.is_none() && tp.is_none()) as usize;
        }
    }
    let frames = pred.x_to_y.len() + pred.y_to_x.len();
    Ok(AccuracyReport {
        accuracy: ratio(correct, frames),
        virtual_precision: ratio(detected, predicted_virtual),
        virtual_recall: ratio(detected, true_virtual),
        frames,
        true_virtual,
        predicted_virtual,
        detected_virtual: detected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn seq(rows: Vec<Vec<f64>>) -> EmbeddingSequence<f64> {
        EmbeddingSequence::from_rows(&rows, "s").unwrap()
    }

    #[test]
    fn tau_examples() {
        assert_eq!(kendalls_tau_indices(&[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(kendalls_tau_indices(&[3, 2, 1, 0]).unwrap(), -1.0);
        let t = kendalls_tau_indices(&[0, 2, 1, 3]).unwrap();
        assert!((t - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(kendalls_tau_indices(&[1, 1]).unwrap(), -1.0);
        assert!(matches!(kendalls_tau_indices(&[0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn tau_of_distinct_sequence_with_itself_is_one() {
        let x = seq((0..7).map(|i| vec![i as f64, (i as f64).cos()]).collect());
        assert_eq!(kendalls_tau(&x, &x).unwrap(), 1.0);
        let short = seq(vec![vec![0.0, 0.0]]);
        assert!(matches!(kendalls_tau(&short, &x), Err(Error::Degenerate(_))));
    }

    fn two_phase(n: usize, offset: f64) -> LabeledSequence {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c = if i < n / 2 { -1.0 } else { 1.0 };
                vec![c + offset * i as f64 * 0.01, 0.3 * (i as f64).sin()]
            })
            .collect();
        let phase = (0..n).map(|i| (i >= n / 2) as i64).collect();
        LabeledSequence::new(seq(rows), phase, None).unwrap()
    }

    #[test]
    fn separable_phases_classify_perfectly() {
        let train = vec![two_phase(20, 1.0), two_phase(16, -1.0)];
        let test = vec![two_phase(12, 0.5)];
        for f in [0.5, 1.0] {
            assert_eq!(phase_classification(&train, &test, f, 3).unwrap(), 1.0);
        }
    }

    #[test]
    fn missing_phase_in_sample_is_a_sampling_error() {
        let mut s = two_phase(40, 0.0);
        s.phase = (0..40).map(|i| if i == 7 { 2 } else { (i >= 20) as i64 }).collect();
        let err = (0..20).find_map(|seed| phase_classification(&[s.clone()], &[s.clone()], 0.1, seed).err());
        assert!(matches!(err, Some(Error::Sampling(_))));
    }

    #[test]
    fn shuffled_labels_are_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut total = 0.0;
        for seed in 0..20 {
            let mk = |rng: &mut ChaCha8Rng, n: usize| {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                    .collect();
                let phase = (0..n).map(|i| (i % 2) as i64).collect();
                LabeledSequence::new(seq(rows), phase, None).unwrap()
            };
            let train = vec![mk(&mut rng, 400)];
            let test = vec![mk(&mut rng, 400)];
            total += phase_classification(&train, &test, 1.0, seed).unwrap();
        }
        let mean = total / 20.0;
        assert!((mean - 0.5).abs() <= 0.05, "mean accuracy {mean}");
    }

    #[test]
    fn classification_is_rotation_invariant() {
        let train = vec![two_phase(30, 1.0)];
        let mut test = two_phase(30, -2.0);
        // make the test set imperfect so the comparison is not trivially 1.0
        test.phase[3] = 1;
        test.phase[20] = 0;
        let base = phase_classification(&train, &[test.clone()], 1.0, 0).unwrap();
        let (c, s) = (0.6f64, 0.8f64);
        let rotate = |ls: &LabeledSequence| {
            let rows: Vec<Vec<f64>> = ls
                .embedding
                .frames()
                .rows()
                .into_iter()
                .map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1]])
                .collect();
            LabeledSequence::new(seq(rows), ls.phase.clone(), None).unwrap()
        };
        let rotated = phase_classification(&[rotate(&train[0])], &[rotate(&test)], 1.0, 0).unwrap();
        assert_eq!(base, rotated);
    }

    fn progress_seq(n: usize, f: impl Fn(f64) -> Vec<f64>) -> LabeledSequence {
        let p: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let rows = p.iter().map(|&v| f(v)).collect();
        LabeledSequence::new(seq(rows), vec![0; n], Some(p)).unwrap()
    }

    #[test]
    fn progression_examples() {
        let exact = vec![progress_seq(10, |p| vec![p, p, p]), progress_seq(7, |p| vec![p, p, p])];
        assert!((phase_progression(&exact).unwrap() - 1.0).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut random = Vec::new();
        for _ in 0..40 {
            let rows: Vec<Vec<f64>> = (0..50)
                .map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let p: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
            random.push(LabeledSequence::new(seq(rows), vec![0; 50], Some(p)).unwrap());
        }
        assert!(phase_progression(&random).unwrap() <= 0.05);

        let flat: Vec<LabeledSequence> = (0..2)
            .map(|_| {
                let s = progress_seq(5, |p| vec![p]);
                LabeledSequence { progress: Some(vec![0.5; 5]), ..s }
            })
            .collect();
        assert!(matches!(phase_progression(&flat), Err(Error::Degenerate(_))));

        let with_background: Vec<LabeledSequence> = exact
            .iter()
            .map(|s| {
                let mut rows: Vec<Vec<f64>> = s.embedding.frames().rows().into_iter().map(|r| r.to_vec()).collect();
                rows.push(vec![40.0, -3.0, 7.0]);
                let mut phase = s.phase.clone();
                phase.push(-1);
                let mut progress = s.progress.clone().unwrap();
                progress.push(0.0);
                LabeledSequence::new(seq(rows), phase, Some(progress)).unwrap()
            })
            .collect();
        assert!((phase_progression(&with_background).unwrap() - 1.0).abs() < 1e-9);

        let unlabeled = vec![LabeledSequence { progress: None, ..exact[0].clone() }; 2];
        assert!(matches!(phase_progression(&unlabeled), Err(Error::Config(_))));
    }

    fn truth(x_partner: Vec<Option<usize>>, y_partner: Vec<Option<usize>>, x_action: Vec<i64>, y_action: Vec<i64>) -> GroundTruthAlignment {
        let (n, m) = (x_partner.len(), y_partner.len());
        GroundTruthAlignment {
            x_partner,
            y_partner,
            x_action,
            y_action,
            x_progress: vec![0.0; n],
            y_progress: vec![0.0; m],
            swaps: vec![],
        }
    }

    fn pred(x_to_y: Vec<Option<usize>>, y_to_x: Vec<Option<usize>>) -> AlignmentResult {
        let (n, m) = (x_to_y.len(), y_to_x.len());
        AlignmentResult {
            x_to_y,
            y_to_x,
            x_confidence: vec![1.0; n],
            y_confidence: vec![1.0; m],
        }
    }

    #[test]
    fn accuracy_examples() {
        let t = truth(
            vec![Some(0), Some(1), Some(2)],
            vec![Some(0), Some(1), Some(2)],
            vec![0, 0, 1],
            vec![0, 0, 1],
        );
        let exact = alignment_accuracy(&pred(t.x_partner.clone(), t.y_partner.clone()), &t).unwrap();
        assert_eq!(exact.accuracy, 1.0);
        // same-action partners count as correct
        let loose = alignment_accuracy(&pred(vec![Some(1), Some(0), Some(2)], t.y_partner.clone()), &t).unwrap();
        assert_eq!(loose.accuracy, 1.0);

        let all_virtual = alignment_accuracy(&pred(vec![None; 3], vec![None; 3]), &t).unwrap();
        assert_eq!((all_virtual.virtual_precision, all_virtual.virtual_recall), (0.0, 0.0));
        assert_eq!(all_virtual.accuracy, 0.0);

        // y has 10 frames, two of them background; one detected
        let y_action = vec![0, 0, -1, 0, 1, 1, -1, 1, 1, 1];
        let y_partner: Vec<Option<usize>> =
            y_action.iter().enumerate().map(|(j, &a)| (a >= 0).then_some(j.min(4))).collect();
        let t = truth(vec![Some(0); 5], y_partner.clone(), vec![0, 0, 0, 1, 1], y_action);
        let mut guess = y_partner;
        guess[6] = Some(4);
        let r = alignment_accuracy(&pred(vec![Some(0); 5], guess), &t).unwrap();
        assert_eq!(r.virtual_recall, 0.5);
        assert_eq!(r.virtual_precision, 1.0);
        assert_eq!((r.true_virtual, r.detected_virtual), (2, 1));

        let short = pred(vec![Some(0)], vec![Some(0)]);
        assert!(matches!(alignment_accuracy(&short, &t), Err(Error::Dimension(_))));
    }

    proptest! {
        #[test]
        fn tau_invariant_under_monotone_distance_rescaling(
            pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..10),
            qts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..10),
            s in 0.1..10.0f64,
        ) {
            // scaling every coordinate scales every distance by s
            let x = seq(pts.iter().map(|&(a, b)| vec![a, b]).collect());
            let y = seq(qts.iter().map(|&(a, b)| vec![a, b]).collect());
            let xs = seq(pts.iter().map(|&(a, b)| vec![a * s, b * s]).collect());
            let ys = seq(qts.iter().map(|&(a, b)| vec![a * s, b * s]).collect());
            prop_assert_eq!(nearest_neighbors(&x, &y), nearest_neighbors(&xs, &ys));
            prop_assert_eq!(kendalls_tau(&x, &y).unwrap(), kendalls_tau(&xs, &ys).unwrap());
        }

        #[test]
        fn accuracy_depends_only_on_label_agreement(
            labels in prop::collection::vec(0i64..3, 2..12),
            flips in prop::collection::vec(any::<bool>(), 12),
        ) {
            let n = labels.len();
            let t = truth((0..n).map(Some).collect(), (0..n).map(Some).collect(), labels.clone(), labels.clone());
            let guess: Vec<Option<usize>> = (0..n).map(|i| if flips[i] { None } else { Some(i) }).collect();
            let r = alignment_accuracy(&pred(guess.clone(), (0..n).map(Some).collect()), &t).unwrap();
            let expected = (2 * n - guess.iter().filter(|g| g.is_none()).count()) as f64 / (2 * n) as f64;
            prop_assert!((r.accuracy - expected).abs() < 1e-12);
        }
    }
}
