//! Decoding transport plans into per-frame assignments.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::psi_at;
use crate::scalar::Scalar;
use crate::seqcore::{CostMatrix, EmbeddingSequence, Hyperparams};
use crate::sinkhorn::TransportPlan;
use crate::vavaloss::{augmented_prior, idm_consistency_weights, idm_optimality_weights, AugmentedProblem};

/// Number of prior refinement rounds in [`align_pair`].
pub const GUIDE_ROUNDS: usize = 3;

/// Per-frame partners (0-based, `None` for the virtual frame) and the
/// normalized mass of the best real partner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "AlignmentJson", try_from = "AlignmentJson")]
pub struct AlignmentResult {
    pub x_to_y: Vec<Option<usize>>,
    pub y_to_x: Vec<Option<usize>>,
    pub x_confidence: Vec<f64>,
    pub y_confidence: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Confidences {
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AlignmentJson {
    x_to_y: Vec<i64>,
    y_to_x: Vec<i64>,
    confidences: Confidences,
}

fn encode(v: &[Option<usize>]) -> Vec<i64> {
    v.iter().map(|p| p.map_or(-1, |j| j as i64)).collect()
}

fn decode(v: &[i64]) -> std::result::Result<Vec<Option<usize>>, String> {
    v.iter()
        .map(|&p| match p {
            -1 => Ok(None),
            p if p >= 0 => Ok(Some(p as usize)),
            p => Err(format!("invalid partner index {p}")),
        })
        .collect()
}

impl From<AlignmentResult> for AlignmentJson {
    fn from(a: AlignmentResult) -> Self {
        AlignmentJson {
            x_to_y: encode(&a.x_to_y),
            y_to_x: encode(&a.y_to_x),
            confidences: Confidences {
                x: a.x_confidence,
                y: a.y_confidence,
            },
        }
    }
}

impl TryFrom<AlignmentJson> for AlignmentResult {
    type Error = String;

    fn try_from(j: AlignmentJson) -> std::result::Result<Self, String> {
        let out = AlignmentResult {
            x_to_y: decode(&j.x_to_y)?,
            y_to_x: decode(&j.y_to_x)?,
            x_confidence: j.confidences.x,
            y_confidence: j.confidences.y,
        };
        out.check().map_err(|e| e.to_string())?;
        Ok(out)
    }
}

impl AlignmentResult {
    /// Checks lengths and partner ranges.
    pub fn check(&self) -> Result<()> {
        let (n, m) = (self.x_to_y.len(), self.y_to_x.len());
        if self.x_confidence.len() != n || self.y_confidence.len() != m {
            return Err(Error::dim("confidence lists must match the assignment lists"));
        }
        let in_range = |v: &[Option<usize>], bound| v.iter().flatten().all(|&p| p < bound);
        if !in_range(&self.x_to_y, m) || !in_range(&self.y_to_x, n) {
            return Err(Error::dim("partner index out of range"));
        }
        Ok(())
    }

    pub fn virtual_count(&self) -> (usize, usize) {
        let count = |v: &[Option<usize>]| v.iter().filter(|p| p.is_none()).count();
        (count(&self.x_to_y), count(&self.y_to_x))
    }
}

fn decode_line<T: Scalar>(line: ArrayView1<'_, T>, zeta: f64) -> (Option<usize>, f64) {
    let real = line.len() - 1;
    let total: f64 = line.iter().map(|v| v.as_f64()).sum();
    let mut best = 0;
    for j in 1..real {
        if line[j] > line[best] {
            best = j;
        }
    }
    let prob = if total > 0.0 { line[best].as_f64() / total } else { 0.0 };
    if prob < zeta {
        (None, prob)
    } else {
        (Some(best), prob)
    }
}

/// Assigns each real frame its most likely real partner, or the virtual frame
/// when that partner's share of the frame's mass is below `zeta`.
pub fn decode_alignment<T: Scalar>(plan: &TransportPlan<T>, zeta: f64) -> Result<AlignmentResult> {
    if !plan.is_augmented() {
        return Err(Error::State("decoding requires a plan with a virtual frame".into()));
    }
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::param(format!("zeta must lie in (0, 1), got {zeta}")));
    }
    let (n, m) = plan.real_shape();
    let e = plan.entries();
    let (x_to_y, x_confidence) = (0..n).map(|i| decode_line(e.row(i), zeta)).unzip();
    let (y_to_x, y_confidence) = (0..m).map(|j| decode_line(e.column(j), zeta)).unzip();
    Ok(AlignmentResult {
        x_to_y,
        y_to_x,
        x_confidence,
        y_confidence,
    })
}

/// Entropic plan whose Gibbs kernel is reweighted by the temporal priors.
///
/// Each round rebuilds the prior `P` and the inverse-difference-moment weights
/// `W` from the previous plan and solves with kernel
/// `P^lambda2 * exp(-(C - lambda1 W) / upsilon)`, i.e. with cost
/// `C - lambda1 W - upsilon lambda2 log P` at temperature `upsilon`.
pub fn prior_guided_plan<T: Scalar>(
    problem: &AugmentedProblem<T>,
    hp: &Hyperparams,
    psi: f64,
    rounds: usize,
) -> Result<TransportPlan<T>> {
    let mut plan = problem.solve(hp)?;
    if hp.lambda1 == 0.0 && hp.lambda2 == 0.0 {
        return Ok(plan);
    }
    let (rows, cols) = problem.augmented_cost.shape();
    let l1 = T::lit(hp.lambda1);
    let upsilon = T::lit(hp.upsilon);
    let l2 = T::lit(hp.lambda2) * upsilon;
    let psi_t = T::lit(psi);
    let wc: Array2<T> = idm_consistency_weights(rows, cols);
    for _ in 0..rounds {
        let prior = augmented_prior(&plan, T::lit(hp.sigma), psi_t)?;
        let wo = idm_optimality_weights(&plan);
        let mut cost = Array2::from_shape_fn((rows, cols), |(i, j)| {
            let w = psi_t * wc[[i, j]] + (T::one() - psi_t) * wo[[i, j]];
            problem.augmented_cost.get(i, j) - l1 * w - l2 * prior.get(i, j).ln()
        });
        let floor = cost.iter().copied().fold(T::infinity(), T::min);
        cost.mapv_inplace(|v| v - floor);
        let cost = CostMatrix::new(cost)?;
        plan = problem.solve_with(&cost, upsilon, hp)?;
    }
    Ok(plan)
}

/// Aligns two sequences and decodes the result.
///
/// The plan is refined with the priors at the end of the mixture schedule;
/// with `lambda1 = lambda2 = 0` this is the plain entropic plan.
pub fn align_pair<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    hp: &Hyperparams,
) -> Result<(AlignmentResult, TransportPlan<T>)> {
    hp.validate()?;
    let problem = AugmentedProblem::new(x, y, hp)?;
    let psi = psi_at(&hp.psi_schedule(), hp.psi_decay_steps);
    let plan = prior_guided_plan(&problem, hp, psi, GUIDE_ROUNDS)?;
    Ok((decode_alignment(&plan, hp.zeta)?, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn aug(e: Array2<f64>) -> TransportPlan<f64> {
        TransportPlan::from_entries(e, true).unwrap()
    }

    #[test]
    fn dominant_diagonal_decodes_to_identity() {
        let mut e = Array2::from_elem((5, 5), 0.01);
        for i in 0..4 {
            e[[i, i]] = 0.2;
        }
        let a = decode_alignment(&aug(e), 0.1).unwrap();
        assert_eq!(a.x_to_y, (0..4).map(Some).collect::<Vec<_>>());
        assert_eq!(a.virtual_count(), (0, 0));
    }

    #[test]
    fn virtual_dominant_row_goes_virtual() {
        let e = array![[0.05, 0.05, 0.20], [0.3, 0.0, 0.0], [0.0, 0.3, 0.1]];
        let a = decode_alignment(&aug(e), 0.5).unwrap();
        assert_eq!(a.x_to_y[0], None);
        assert!((a.x_confidence[0] - 0.05 / 0.30).abs() < 1e-15);
        assert_eq!(a.x_to_y[1], Some(0));
    }

    #[test]
    fn rejects_plain_plans_and_bad_thresholds() {
        let p = TransportPlan::from_entries(array![[0.5, 0.0], [0.0, 0.5]], false).unwrap();
        assert!(matches!(decode_alignment(&p, 0.3), Err(Error::State(_))));
        let q = aug(array![[0.5, 0.0], [0.0, 0.5]]);
        assert!(matches!(decode_alignment(&q, 0.0), Err(Error::Param(_))));
        assert!(matches!(decode_alignment(&q, 1.0), Err(Error::Param(_))));
    }

    #[test]
    fn json_uses_minus_one_for_virtual() {
        let a = AlignmentResult {
            x_to_y: vec![Some(1), None],
            y_to_x: vec![None, Some(0)],
            x_confidence: vec![0.9, 0.1],
            y_confidence: vec![0.2, 0.9],
        };
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(
            s,
            r#"{"x_to_y":[1,-1],"y_to_x":[-1,0],"confidences":{"x":[0.9,0.1],"y":[0.2,0.9]}}"#
        );
        let back: AlignmentResult = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<AlignmentResult>(
            r#"{"x_to_y":[5],"y_to_x":[0],"confidences":{"x":[1.0],"y":[1.0]}}"#
        )
        .is_err());
    }

    fn line(n: usize, f: impl Fn(usize) -> f64) -> EmbeddingSequence<f64> {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![f(i), (f(i) * 0.7).sin()]).collect();
        EmbeddingSequence::from_rows(&rows, "s").unwrap()
    }

    #[test]
    fn self_alignment_is_identity() {
        let x = line(12, |i| i as f64 * 0.8);
        for hp in [Hyperparams::default(), Hyperparams::default().prior_free()] {
            let (a, plan) = align_pair(&x, &x, &hp).unwrap();
            assert_eq!(a.x_to_y, (0..12).map(Some).collect::<Vec<_>>());
            assert_eq!(a.y_to_x, (0..12).map(Some).collect::<Vec<_>>());
            assert!(plan.marginal_violation() <= 1e-6);
        }
    }

    #[test]
    fn inserted_outliers_go_virtual() {
        let x = line(12, |i| i as f64 * 0.8);
        let mut rows: Vec<Vec<f64>> = x.frames().rows().into_iter().map(|r| r.to_vec()).collect();
        for (k, at) in [3usize, 8, 12].into_iter().enumerate() {
            rows.insert(at + k, vec![60.0 + 9.0 * k as f64, -50.0]);
        }
        let y = EmbeddingSequence::from_rows(&rows, "y").unwrap();
        let (a, _) = align_pair(&x, &y, &Hyperparams::default()).unwrap();
        let virtual_frames: Vec<usize> = (0..y.len()).filter(|&j| a.y_to_x[j].is_none()).collect();
        assert_eq!(virtual_frames, vec![3, 9, 14]);
    }

    #[test]
    fn prior_free_guided_plan_is_plain_plan() {
        let x = line(6, |i| i as f64);
        let y = line(8, |i| i as f64 * 0.7);
        let hp = Hyperparams::default().prior_free();
        let problem = AugmentedProblem::new(&x, &y, &hp).unwrap();
        let guided = prior_guided_plan(&problem, &hp, 0.5, 3).unwrap();
        assert_eq!(guided.entries(), problem.solve(&hp).unwrap().entries());
    }

    fn arb_aug() -> impl Strategy<Value = Array2<f64>> {
        (2usize..7, 2usize..7).prop_flat_map(|(r, c)| {
            prop::collection::vec(0.0..1.0f64, r * c)
                .prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn raising_zeta_never_revives_virtual(e in arb_aug(), z1 in 0.01..0.99f64, z2 in 0.01..0.99f64) {
            let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
            let p = aug(e);
            let a = decode_alignment(&p, lo).unwrap();
            let b = decode_alignment(&p, hi).unwrap();
            for (pa, pb) in a.x_to_y.iter().zip(&b.x_to_y).chain(a.y_to_x.iter().zip(&b.y_to_x)) {
                if pa.is_none() {
                    prop_assert!(pb.is_none());
                }
            }
        }

        #[test]
        fn decoding_is_scale_free(e in arb_aug(), s in 0.01..100.0f64, z in 0.05..0.95f64) {
            let a = decode_alignment(&aug(e.clone()), z).unwrap();
            let b = decode_alignment(&aug(e * s), z).unwrap();
            prop_assert_eq!(a.x_to_y, b.x_to_y);
            prop_assert_eq!(a.y_to_x, b.y_to_x);
        }

        #[test]
        fn permutation_plans_decode_exactly(perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(), z in 0.05..0.8f64) {
            let n = perm.len();
            let mut e = Array2::from_elem((n + 1, n + 1), 0.001);
            for (i, &j) in perm.iter().enumerate() {
                e[[i, j]] = 1.0;
            }
            let a = decode_alignment(&aug(e), z).unwrap();
            prop_assert_eq!(a.x_to_y, perm.iter().map(|&j| Some(j)).collect::<Vec<_>>());
        }
    }
}
