//! Training objective and its gradient.
//!
//! `total = ot - lambda1 * idm + lambda2 * kl + gamma * (intra_x + intra_y + inter)`
//!
//! Gradients follow the stop-gradient convention: the solved plan, and with it
//! the priors, the inverse difference moments, the KL term and the contrastive
//! pair selections, are constants with respect to the embeddings. Gradients
//! reach the embeddings through the cost matrix (including the virtual-frame
//! cost, which is read from the median real cost) and through the distances of
//! the contrastive terms.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::priors::{
    augment_and_normalize, col_argmax, col_argmin, consistency_prior, mix_priors,
    optimality_prior, psi_at, row_argmax, row_argmin, PriorMatrix,
};
use crate::scalar::Scalar;
use crate::seqcore::{
    augment_cost, augment_marginals, cost_matrix, frame_distance, uniform_marginals, CostMatrix,
    EmbeddingSequence, Hyperparams, VirtualCost, WeightVector,
};
use crate::sinkhorn::{ot_cost, sinkhorn_solve_support, TransportPlan};

/// Value of every term of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossBreakdown<T> {
    pub ot_term: T,
    pub idm_term: T,
    pub kl_term: T,
    pub intra_x: T,
    pub intra_y: T,
    pub inter: T,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    /// Recomputes `total` from the individual terms.
    pub fn recompose(&self, hp: &Hyperparams) -> T {
        let l1 = T::lit(hp.lambda1);
        let l2 = T::lit(hp.lambda2);
        let gamma = T::lit(hp.gamma);
        self.ot_term - l1 * self.idm_term
            + l2 * self.kl_term
            + gamma * (self.intra_x + self.intra_y + self.inter)
    }

    pub fn vava(&self, hp: &Hyperparams) -> T {
        self.ot_term - T::lit(hp.lambda1) * self.idm_term + T::lit(hp.lambda2) * self.kl_term
    }
}

/// Cost, virtual-frame cost and augmented marginals of one sequence pair.
#[derive(Debug, Clone)]
pub struct AugmentedProblem<T> {
    pub cost: CostMatrix<T>,
    pub virtual_cost: VirtualCost<T>,
    pub augmented_cost: CostMatrix<T>,
    pub row_marginal: WeightVector<T>,
    pub col_marginal: WeightVector<T>,
}

impl<T: Scalar> AugmentedProblem<T> {
    pub fn new(x: &EmbeddingSequence<T>, y: &EmbeddingSequence<T>, hp: &Hyperparams) -> Result<Self> {
        let cost = cost_matrix(x, y)?;
        let virtual_cost = crate::seqcore::virtual_cost(&cost, T::lit(hp.virtual_cost_factor));
        let augmented_cost = augment_cost(&cost, virtual_cost.value);
        let rho = T::lit(hp.rho);
        let row_marginal = augment_marginals(&uniform_marginals(x.len())?, rho)?;
        let col_marginal = augment_marginals(&uniform_marginals(y.len())?, rho)?;
        Ok(Self {
            cost,
            virtual_cost,
            augmented_cost,
            row_marginal,
            col_marginal,
        })
    }

    /// Entropic plan over the augmented marginals.
    pub fn solve(&self, hp: &Hyperparams) -> Result<TransportPlan<T>> {
        self.solve_with(&self.augmented_cost, T::lit(hp.upsilon), hp)
    }

    /// Same marginals, arbitrary augmented cost and temperature.
    pub fn solve_with(&self, cost: &CostMatrix<T>, temperature: T, hp: &Hyperparams) -> Result<TransportPlan<T>> {
        let plan = sinkhorn_solve_support(
            cost,
            &self.row_marginal,
            &self.col_marginal,
            temperature,
            hp.sinkhorn_max_iter,
            T::lit(hp.sinkhorn_tol),
        )?;
        Ok(plan.mark_augmented())
    }
}

fn require_augmented<T: Scalar>(plan: &TransportPlan<T>) -> Result<()> {
    if plan.is_augmented() {
        Ok(())
    } else {
        Err(Error::State("expected a plan augmented with the virtual frame".into()))
    }
}

/// Weights `1 / ((i/R - j/C)^2 + 1)` over an `R x C` grid, 1-based.
pub fn idm_consistency_weights<T: Scalar>(rows: usize, cols: usize) -> Array2<T> {
    let r = T::lit(rows as f64);
    let c = T::lit(cols as f64);
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let d = T::lit((i + 1) as f64) / r - T::lit((j + 1) as f64) / c;
        T::one() / (d * d + T::one())
    })
}

/// Weights `1 / (d_o / 2 + 1)` where `d_o` is the squared normalized distance
/// of `(i, j)` from the real-frame argmaxes `(i_o(j), j_o(i))`.
pub fn idm_optimality_weights<T: Scalar>(plan: &TransportPlan<T>) -> Array2<T> {
    let (rows, cols) = plan.shape();
    let (n, m) = plan.real_shape();
    let entries = plan.entries();
    // argmax over real columns for every row, over real rows for every column
    let j_o = row_argmax(entries.slice(ndarray::s![.., ..m]));
    let i_o = col_argmax(entries.slice(ndarray::s![..n, ..]));
    let r = T::lit(rows as f64);
    let c = T::lit(cols as f64);
    let half = T::lit(0.5);
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let di = T::lit(i as f64 - i_o[j] as f64) / r;
        let dj = T::lit(j as f64 - j_o[i] as f64) / c;
        T::one() / (half * (di * di + dj * dj) + T::one())
    })
}

fn weighted_mass<T: Scalar>(plan: &TransportPlan<T>, weights: &Array2<T>) -> T {
    plan.entries().iter().zip(weights.iter()).map(|(&t, &w)| t * w).sum()
}

/// Inverse difference moment about the proportional diagonal.
pub fn idm_consistency<T: Scalar>(plan: &TransportPlan<T>) -> T {
    let (r, c) = plan.shape();
    weighted_mass(plan, &idm_consistency_weights(r, c))
}

/// Inverse difference moment about the plan's own argmax pairings.
pub fn idm_optimality<T: Scalar>(plan: &TransportPlan<T>) -> T {
    weighted_mass(plan, &idm_optimality_weights(plan))
}

pub fn idm_mixed<T: Scalar>(plan: &TransportPlan<T>, psi: T) -> T {
    psi * idm_consistency(plan) + (T::one() - psi) * idm_optimality(plan)
}

/// `sum t log(t / p)` with `0 log(0 / p) = 0`.
pub fn kl_divergence<T: Scalar>(plan: &TransportPlan<T>, prior: &PriorMatrix<T>) -> Result<T> {
    if plan.shape() != prior.shape() {
        return Err(Error::dim(format!(
            "plan is {:?} but prior is {:?}",
            plan.shape(),
            prior.shape()
        )));
    }
    let mut total = T::zero();
    for ((idx, &t), &p) in plan.entries().indexed_iter().zip(prior.entries().iter()) {
        if t > T::zero() {
            if !(p > T::zero()) {
                return Err(Error::Support { row: idx.0, col: idx.1 });
            }
            total += t * (t / p).ln();
        }
    }
    Ok(total)
}

/// Normalized mixture prior, augmented with the virtual frame.
pub fn augmented_prior<T: Scalar>(plan: &TransportPlan<T>, sigma: T, psi: T) -> Result<PriorMatrix<T>> {
    let (n, m) = plan.real_shape();
    let pc = consistency_prior(n, m, sigma)?;
    let po = optimality_prior(plan, sigma)?;
    augment_and_normalize(&mix_priors(&pc, &po, psi)?)
}

/// Contrastive weight `(i - j)^2 + 1`.
pub fn contrastive_weight(i: usize, j: usize) -> f64 {
    let d = i as f64 - j as f64;
    d * d + 1.0
}

/// Intra-sequence contrastive loss over the full `N x N` grid of ordered pairs.
pub fn intra_contrastive<T: Scalar>(x: &EmbeddingSequence<T>, delta: usize, lambda3: T) -> T {
    let n = x.len();
    let mut total = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = T::lit(contrastive_weight(i, j));
            let d = frame_distance(x.frame(i), x.frame(j));
            total += if i.abs_diff(j) > delta {
                w * (lambda3 - d).max(T::zero())
            } else {
                w * d
            };
        }
    }
    total
}

/// Positive and negative real-frame pairs selected by the plan: for every real
/// row and every real column, its largest entry (positive) and smallest entry
/// (negative) among real frames. Each pair appears at most once per set.
pub fn contrastive_pairs<T: Scalar>(
    plan: &TransportPlan<T>,
) -> (BTreeSet<(usize, usize)>, BTreeSet<(usize, usize)>) {
    let block = plan.real_block();
    let mut positives = BTreeSet::new();
    let mut negatives = BTreeSet::new();
    for (i, j) in row_argmax(block).into_iter().enumerate() {
        positives.insert((i, j));
    }
    for (j, i) in col_argmax(block).into_iter().enumerate() {
        positives.insert((i, j));
    }
    for (i, j) in row_argmin(block).into_iter().enumerate() {
        negatives.insert((i, j));
    }
    for (j, i) in col_argmin(block).into_iter().enumerate() {
        negatives.insert((i, j));
    }
    (positives, negatives)
}

fn pair_sum<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    pairs: &BTreeSet<(usize, usize)>,
) -> T {
    pairs
        .iter()
        .map(|&(i, j)| frame_distance(x.frame(i), y.frame(j)))
        .sum()
}

/// Plan-guided inter-sequence contrastive loss: positive distances minus
/// negative distances.
pub fn inter_contrastive<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    plan: &TransportPlan<T>,
) -> Result<T> {
    if plan.real_shape() != (x.len(), y.len()) {
        return Err(Error::dim(format!(
            "plan covers {:?} real frames, sequences have {} and {}",
            plan.real_shape(),
            x.len(),
            y.len()
        )));
    }
    let (positives, negatives) = contrastive_pairs(plan);
    Ok(pair_sum(x, y, &positives) - pair_sum(x, y, &negatives))
}

/// Every term of the objective for a fixed augmented plan.
pub fn loss_with_plan<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    plan: &TransportPlan<T>,
    hp: &Hyperparams,
    psi: T,
) -> Result<LossBreakdown<T>> {
    require_augmented(plan)?;
    let problem = AugmentedProblem::new(x, y, hp)?;
    let mut out = vava_terms(&problem, plan, hp, psi)?;
    out.intra_x = intra_contrastive(x, hp.delta, T::lit(hp.lambda3));
    out.intra_y = intra_contrastive(y, hp.delta, T::lit(hp.lambda3));
    out.inter = inter_contrastive(x, y, plan)?;
    out.total = out.recompose(hp);
    Ok(out)
}

fn vava_terms<T: Scalar>(
    problem: &AugmentedProblem<T>,
    plan: &TransportPlan<T>,
    hp: &Hyperparams,
    psi: T,
) -> Result<LossBreakdown<T>> {
    let prior = augmented_prior(plan, T::lit(hp.sigma), psi)?;
    let mut out = LossBreakdown {
        ot_term: ot_cost(plan, &problem.augmented_cost)?,
        idm_term: idm_mixed(plan, psi),
        kl_term: kl_divergence(plan, &prior)?,
        ..Default::default()
    };
    out.total = out.vava(hp);
    Ok(out)
}

/// Alignment part of the objective (no contrastive terms) and the plan used.
pub fn vava_loss<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    hp: &Hyperparams,
    step: usize,
) -> Result<(LossBreakdown<T>, TransportPlan<T>)> {
    hp.validate()?;
    let problem = AugmentedProblem::new(x, y, hp)?;
    let plan = problem.solve(hp)?;
    let psi = T::lit(psi_at(&hp.psi_schedule(), step));
    Ok((vava_terms(&problem, &plan, hp, psi)?, plan))
}

/// Full objective including the contrastive regularizer.
pub fn total_loss<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    hp: &Hyperparams,
    step: usize,
) -> Result<LossBreakdown<T>> {
    Ok(total_loss_and_plan(x, y, hp, step)?.0)
}

pub fn total_loss_and_plan<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    hp: &Hyperparams,
    step: usize,
) -> Result<(LossBreakdown<T>, TransportPlan<T>)> {
    let (_, plan) = vava_loss(x, y, hp, step)?;
    let psi = T::lit(psi_at(&hp.psi_schedule(), step));
    Ok((loss_with_plan(x, y, &plan, hp, psi)?, plan))
}

/// Gradient with respect to the frames of both sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient<T> {
    pub x: Array2<T>,
    pub y: Array2<T>,
}

impl<T: Scalar> LossGradient<T> {
    pub fn zeros(n: usize, m: usize, d: usize) -> Self {
        Self {
            x: Array2::zeros((n, d)),
            y: Array2::zeros((m, d)),
        }
    }
}

/// Gradient of each differentiable term, unweighted. The inverse difference
/// moment and the KL term depend on the plan only and contribute nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGradients<T> {
    pub ot: LossGradient<T>,
    pub intra_x: Array2<T>,
    pub intra_y: Array2<T>,
    pub inter: LossGradient<T>,
}

impl<T: Scalar> TermGradients<T> {
    pub fn combine(&self, hp: &Hyperparams) -> LossGradient<T> {
        let gamma = T::lit(hp.gamma);
        LossGradient {
            x: &self.ot.x + &((&self.intra_x + &self.inter.x) * gamma),
            y: &self.ot.y + &((&self.intra_y + &self.inter.y) * gamma),
        }
    }
}

/// Unit vector `(a - b) / |a - b|` scaled by `scale`, added to `out`; no-op when `a == b`.
fn add_direction<T: Scalar>(mut out: ndarray::ArrayViewMut1<'_, T>, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>, scale: T) {
    let d = frame_distance(a, b);
    if d > T::zero() {
        let s = scale / d;
        for ((o, &p), &q) in out.iter_mut().zip(a.iter()).zip(b.iter()) {
            *o += s * (p - q);
        }
    }
}

/// Gradient of `<plan, augmented cost>` with the plan held fixed.
pub fn ot_gradient<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    plan: &TransportPlan<T>,
    virtual_cost: &VirtualCost<T>,
) -> LossGradient<T> {
    let (n, m) = (x.len(), y.len());
    let mut g = LossGradient::zeros(n, m, x.dim());
    let t = plan.entries();
    for i in 0..n {
        for j in 0..m {
            let tij = t[[i, j]];
            if tij == T::zero() {
                continue;
            }
            add_direction(g.x.row_mut(i), x.frame(i), y.frame(j), tij);
            add_direction(g.y.row_mut(j), y.frame(j), x.frame(i), tij);
        }
    }
    if plan.is_augmented() {
        let virtual_mass: T = (0..n).map(|i| t[[i, m]]).sum::<T>() + (0..m).map(|j| t[[n, j]]).sum::<T>();
        let (a, b) = virtual_cost.anchor;
        let scale = virtual_cost.factor * virtual_mass;
        add_direction(g.x.row_mut(a), x.frame(a), y.frame(b), scale);
        add_direction(g.y.row_mut(b), y.frame(b), x.frame(a), scale);
    }
    g
}

pub fn intra_gradient<T: Scalar>(x: &EmbeddingSequence<T>, delta: usize, lambda3: T) -> Array2<T> {
    let n = x.len();
    let mut g = Array2::zeros((n, x.dim()));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = T::lit(contrastive_weight(i, j));
            let scale = if i.abs_diff(j) > delta {
                if frame_distance(x.frame(i), x.frame(j)) < lambda3 {
                    -w
                } else {
                    continue;
                }
            } else {
                w
            };
            // d/dx_i and d/dx_j of |x_i - x_j|
            add_direction(g.row_mut(i), x.frame(i), x.frame(j), scale);
            add_direction(g.row_mut(j), x.frame(j), x.frame(i), scale);
        }
    }
    g
}

pub fn inter_gradient<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    plan: &TransportPlan<T>,
) -> LossGradient<T> {
    let mut g = LossGradient::zeros(x.len(), y.len(), x.dim());
    let (positives, negatives) = contrastive_pairs(plan);
    let sets = [(positives, T::one()), (negatives, -T::one())];
    for (pairs, sign) in &sets {
        for &(i, j) in pairs {
            add_direction(g.x.row_mut(i), x.frame(i), y.frame(j), *sign);
            add_direction(g.y.row_mut(j), y.frame(j), x.frame(i), *sign);
        }
    }
    g
}

/// Per-term gradients for a fixed augmented plan.
pub fn term_gradients_with_plan<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    plan: &TransportPlan<T>,
    hp: &Hyperparams,
) -> Result<TermGradients<T>> {
    require_augmented(plan)?;
    if plan.real_shape() != (x.len(), y.len()) {
        return Err(Error::dim("plan does not match the sequences"));
    }
    let cost = cost_matrix(x, y)?;
    let vc = crate::seqcore::virtual_cost(&cost, T::lit(hp.virtual_cost_factor));
    let lambda3 = T::lit(hp.lambda3);
    Ok(TermGradients {
        ot: ot_gradient(x, y, plan, &vc),
        intra_x: intra_gradient(x, hp.delta, lambda3),
        intra_y: intra_gradient(y, hp.delta, lambda3),
        inter: inter_gradient(x, y, plan),
    })
}

/// Gradient of `total_loss` under the stop-gradient convention, together with
/// the loss value and the plan it was computed with.
pub fn loss_gradient<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
    hp: &Hyperparams,
    step: usize,
) -> Result<(LossGradient<T>, LossBreakdown<T>, TransportPlan<T>)> {
    let (loss, plan) = total_loss_and_plan(x, y, hp, step)?;
    let grads = term_gradients_with_plan(x, y, &plan, hp)?;
    Ok((grads.combine(hp), loss, plan))
}

/// Row-wise mean of a gradient, used to average over pairs in a fixed order.
pub fn mean_rows<T: Scalar>(grads: &[Array2<T>]) -> Option<Array2<T>> {
    let first = grads.first()?;
    let mut acc = Array2::zeros(first.dim());
    for g in grads {
        acc += g;
    }
    let scale = T::one() / T::lit(grads.len() as f64);
    Some(acc.mapv(|v| v * scale))
}
