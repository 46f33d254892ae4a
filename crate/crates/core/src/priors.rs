//! Temporal priors over frame pairings.
//!
//! The consistency prior is a Gaussian in the distance of `(i, j)` from the
//! proportional diagonal `i/N = j/M`. The optimality prior is a Gaussian in the
//! mean distance of `(i, j)` from the current plan's row and column argmaxes.
//! Both use 1-based frame positions.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sinkhorn::TransportPlan;

#[derive(Debug, Clone, PartialEq)]
pub struct PriorMatrix<T> {
    entries: Array2<T>,
    normalized: bool,
}

impl<T: Scalar> PriorMatrix<T> {
    pub fn new(entries: Array2<T>, normalized: bool) -> Result<Self> {
        if entries.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::param("prior entries must be finite and nonnegative"));
        }
        if normalized {
            let total: T = entries.sum();
            if (total - T::one()).abs() > crate::seqcore::mass_tolerance::<T>(entries.len()) {
                return Err(Error::param(format!("normalized prior sums to {total}")));
            }
        }
        Ok(Self { entries, normalized })
    }

    pub fn entries(&self) -> &Array2<T> {
        &self.entries
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[[i, j]]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

/// Linear decay of the mixture weight from `psi_start` to `psi_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiSchedule {
    pub psi_start: f64,
    pub psi_end: f64,
    pub decay_steps: usize,
}

impl PsiSchedule {
    pub fn new(psi_start: f64, psi_end: f64, decay_steps: usize) -> Result<Self> {
        let unit = 0.0..=1.0;
        if !unit.contains(&psi_start) || !unit.contains(&psi_end) || psi_start < psi_end {
            return Err(Error::param(format!(
                "psi schedule needs 1 >= psi_start >= psi_end >= 0, got {psi_start} -> {psi_end}"
            )));
        }
        Ok(Self {
            psi_start,
            psi_end,
            decay_steps,
        })
    }
}

pub fn psi_at(schedule: &PsiSchedule, step: usize) -> f64 {
    if step >= schedule.decay_steps {
        return schedule.psi_end;
    }
    let frac = step as f64 / schedule.decay_steps as f64;
    schedule.psi_start + (schedule.psi_end - schedule.psi_start) * frac
}

/// Normal density at distance `l`, floored at the smallest positive normal
/// value so that distant pairings keep nonzero support.
fn gaussian<T: Scalar>(l: T, sigma: T) -> T {
    let peak = T::one() / (sigma * T::TAU().sqrt());
    let v = peak * (-(l * l) / (T::lit(2.0) * sigma * sigma)).exp();
    v.max(T::min_positive_value())
}

fn check_sigma<T: Scalar>(sigma: T) -> Result<()> {
    if sigma > T::zero() && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("sigma must be > 0, got {sigma}")))
    }
}

fn diagonal_scale<T: Scalar>(n: usize, m: usize) -> T {
    let nf = T::lit(n as f64);
    let mf = T::lit(m as f64);
    (T::one() / (nf * nf) + T::one() / (mf * mf)).sqrt()
}

/// Distance of the 1-based position `(i, j)` from the proportional diagonal.
pub fn consistency_distance<T: Scalar>(i: usize, j: usize, n: usize, m: usize) -> T {
    let di = T::lit(i as f64) / T::lit(n as f64);
    let dj = T::lit(j as f64) / T::lit(m as f64);
    (di - dj).abs() / diagonal_scale::<T>(n, m)
}

pub fn consistency_prior<T: Scalar>(n: usize, m: usize, sigma: T) -> Result<PriorMatrix<T>> {
    check_sigma(sigma)?;
    if n == 0 || m == 0 {
        return Err(Error::EmptySequence);
    }
    let entries = Array2::from_shape_fn((n, m), |(i, j)| {
        gaussian(consistency_distance::<T>(i + 1, j + 1, n, m), sigma)
    });
    Ok(PriorMatrix {
        entries,
        normalized: false,
    })
}

/// Column index of each row's maximum; ties go to the smallest index.
pub fn row_argmax<T: Scalar>(grid: ArrayView2<'_, T>) -> Vec<usize> {
    grid.rows()
        .into_iter()
        .map(|row| first_extreme(row.iter().copied(), |a, b| a > b))
        .collect()
}

/// Row index of each column's maximum; ties go to the smallest index.
pub fn col_argmax<T: Scalar>(grid: ArrayView2<'_, T>) -> Vec<usize> {
    grid.columns()
        .into_iter()
        .map(|col| first_extreme(col.iter().copied(), |a, b| a > b))
        .collect()
}

pub(crate) fn row_argmin<T: Scalar>(grid: ArrayView2<'_, T>) -> Vec<usize> {
    grid.rows()
        .into_iter()
        .map(|row| first_extreme(row.iter().copied(), |a, b| a < b))
        .collect()
}

pub(crate) fn col_argmin<T: Scalar>(grid: ArrayView2<'_, T>) -> Vec<usize> {
    grid.columns()
        .into_iter()
        .map(|col| first_extreme(col.iter().copied(), |a, b| a < b))
        .collect()
}

fn first_extreme<T: Scalar>(values: impl Iterator<Item = T>, better: impl Fn(T, T) -> bool) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (k, v) in values.enumerate() {
        match best {
            Some((_, b)) if !better(v, b) => {}
            _ => best = Some((k, v)),
        }
    }
    best.map_or(0, |(k, _)| k)
}

/// Mean normalized distance of `(i, j)` from the argmax pairings `(i, j_o)`
/// and `(i_o, j)`; all positions 1-based.
pub fn optimality_distance<T: Scalar>(
    i: usize,
    j: usize,
    i_o: usize,
    j_o: usize,
    n: usize,
    m: usize,
) -> T {
    let nf = T::lit(n as f64);
    let mf = T::lit(m as f64);
    let di = (T::lit(i as f64) - T::lit(i_o as f64)).abs() / nf;
    let dj = (T::lit(j as f64) - T::lit(j_o as f64)).abs() / mf;
    (di + dj) / (T::lit(2.0) * diagonal_scale::<T>(n, m))
}

/// Prior centred on the plan's own most likely pairings. Augmented plans
/// contribute only their real block.
pub fn optimality_prior<T: Scalar>(plan: &TransportPlan<T>, sigma: T) -> Result<PriorMatrix<T>> {
    check_sigma(sigma)?;
    let block = plan.real_block();
    let (n, m) = block.dim();
    if n == 0 || m == 0 {
        return Err(Error::dim("optimality prior needs a nonempty plan"));
    }
    let j_o = row_argmax(block);
    let i_o = col_argmax(block);
    let entries = Array2::from_shape_fn((n, m), |(i, j)| {
        let l = optimality_distance::<T>(i + 1, j + 1, i_o[j] + 1, j_o[i] + 1, n, m);
        gaussian(l, sigma)
    });
    Ok(PriorMatrix {
        entries,
        normalized: false,
    })
}

pub fn mix_priors<T: Scalar>(
    pc: &PriorMatrix<T>,
    po: &PriorMatrix<T>,
    psi: T,
) -> Result<PriorMatrix<T>> {
    if pc.shape() != po.shape() {
        return Err(Error::dim(format!(
            "priors have shapes {:?} and {:?}",
            pc.shape(),
            po.shape()
        )));
    }
    if !(psi >= T::zero() && psi <= T::one()) {
        return Err(Error::param(format!("psi must lie in [0, 1], got {psi}")));
    }
    let entries = if psi == T::one() {
        pc.entries.clone()
    } else if psi == T::zero() {
        po.entries.clone()
    } else {
        let rest = T::one() - psi;
        ndarray::Zip::from(&pc.entries)
            .and(&po.entries)
            .map_collect(|&c, &o| psi * c + rest * o)
    };
    Ok(PriorMatrix {
        entries,
        normalized: pc.normalized && po.normalized,
    })
}

/// Adds a virtual row and column filled with the mean real entry, then
/// rescales everything to sum to one.
pub fn augment_and_normalize<T: Scalar>(p: &PriorMatrix<T>) -> Result<PriorMatrix<T>> {
    let (n, m) = p.shape();
    let total: T = p.entries.sum();
    if !(total > T::zero()) {
        return Err(Error::DegeneratePrior);
    }
    let mean = total / T::lit((n * m) as f64);
    let mut entries = Array2::from_elem((n + 1, m + 1), mean);
    entries.slice_mut(ndarray::s![..n, ..m]).assign(&p.entries);
    let grand: T = entries.sum();
    entries.mapv_inplace(|v| v / grand);
    Ok(PriorMatrix {
        entries,
        normalized: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    const PEAK: f64 = 0.3989422804014327;

    #[test]
    fn consistency_prior_examples() {
        let p = consistency_prior::<f64>(4, 4, 1.0).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(p.get(i, i), PEAK, epsilon = 1e-15);
        }
        let p = consistency_prior::<f64>(10, 20, 1.0).unwrap();
        assert_abs_diff_eq!(p.get(4, 9), PEAK, epsilon = 1e-15);
        let l: f64 = consistency_distance(1, 2, 2, 2);
        assert_abs_diff_eq!(l, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert!(matches!(consistency_prior::<f64>(2, 2, 0.0), Err(Error::Param(_))));
    }

    #[test]
    fn optimality_prior_on_diagonal_plan_peaks_on_diagonal() {
        let plan = TransportPlan::from_entries(Array2::eye(4) / 4.0, false).unwrap();
        let p = optimality_prior(&plan, 1.0).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(p.get(i, i), PEAK, epsilon = 1e-15);
        }
    }

    #[test]
    fn optimality_prior_follows_reversed_plan() {
        let mut anti = Array2::zeros((4, 4));
        for i in 0..4 {
            anti[[i, 3 - i]] = 0.25;
        }
        let plan = TransportPlan::from_entries(anti, false).unwrap();
        let p = optimality_prior(&plan, 1.0).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(p.get(i, 3 - i), PEAK, epsilon = 1e-15);
            for j in 0..4 {
                if j != 3 - i {
                    assert!(p.get(i, j) < p.get(i, 3 - i));
                }
            }
        }
        // (1,1) in 1-based terms: i_o(1) = 4, j_o(1) = 4 -> l = (3/4 + 3/4) / (2 sqrt(1/8))
        let l = (0.75 + 0.75) / (2.0 * (0.125f64).sqrt());
        assert_abs_diff_eq!(p.get(0, 0), PEAK * (-l * l / 2.0).exp(), epsilon = 1e-15);
    }

    #[test]
    fn optimality_prior_uses_real_block_of_augmented_plan() {
        let plan = TransportPlan::from_entries(
            array![[0.3, 0.0, 0.05], [0.0, 0.3, 0.05], [0.05, 0.05, 0.2]],
            true,
        )
        .unwrap();
        let p = optimality_prior(&plan, 1.0).unwrap();
        assert_eq!(p.shape(), (2, 2));
        assert_abs_diff_eq!(p.get(1, 1), PEAK, epsilon = 1e-15);
    }

    #[test]
    fn argmax_ties_break_to_smallest_index() {
        let g = array![[0.2, 0.2, 0.1], [0.0, 0.3, 0.3]];
        assert_eq!(row_argmax(g.view()), vec![0, 1]);
        assert_eq!(col_argmax(g.view()), vec![0, 1, 1]);
        assert_eq!(row_argmin(g.view()), vec![2, 0]);
        assert_eq!(col_argmin(g.view()), vec![1, 0, 0]);
    }

    #[test]
    fn mix_priors_examples() {
        let pc = PriorMatrix::new(array![[0.4, 0.1]], false).unwrap();
        let po = PriorMatrix::new(array![[0.2, 0.7]], false).unwrap();
        assert_eq!(mix_priors(&pc, &po, 1.0).unwrap().entries(), pc.entries());
        assert_eq!(mix_priors(&pc, &po, 0.0).unwrap().entries(), po.entries());
        assert_abs_diff_eq!(mix_priors(&pc, &po, 0.5).unwrap().get(0, 0), 0.3, epsilon = 1e-15);
        let other = PriorMatrix::new(array![[0.2], [0.7]], false).unwrap();
        assert!(matches!(mix_priors(&pc, &other, 0.5), Err(Error::Dimension(_))));
    }

    #[test]
    fn augment_and_normalize_examples() {
        let p = PriorMatrix::new(Array2::from_elem((2, 2), 3.7), false).unwrap();
        let a = augment_and_normalize(&p).unwrap();
        assert_eq!(a.shape(), (3, 3));
        assert!(a.is_normalized());
        for &v in a.entries() {
            assert_abs_diff_eq!(v, 1.0 / 9.0, epsilon = 1e-15);
        }
        let a = augment_and_normalize(&PriorMatrix::new(array![[4.0]], false).unwrap()).unwrap();
        for &v in a.entries() {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        }
        let zero = PriorMatrix::new(Array2::<f64>::zeros((2, 3)), false).unwrap();
        assert!(matches!(augment_and_normalize(&zero), Err(Error::DegeneratePrior)));
    }

    #[test]
    fn psi_schedule_examples() {
        let s = PsiSchedule::new(1.0, 0.5, 100).unwrap();
        assert_eq!(psi_at(&s, 0), 1.0);
        assert_eq!(psi_at(&s, 50), 0.75);
        assert_eq!(psi_at(&s, 100), 0.5);
        assert_eq!(psi_at(&s, 10_000), 0.5);
        let instant = PsiSchedule::new(1.0, 0.5, 0).unwrap();
        assert_eq!(psi_at(&instant, 0), 0.5);
        assert!(PsiSchedule::new(0.4, 0.5, 10).is_err());
    }

    #[test]
    fn distant_pairings_keep_positive_mass() {
        let p = consistency_prior::<f64>(400, 400, 1.0).unwrap();
        assert!(p.get(0, 399) > 0.0);
    }

    proptest! {
        #[test]
        fn consistency_prior_is_exchange_symmetric(n in 1usize..15, m in 1usize..15, sigma in 0.1..3.0f64) {
            let p = consistency_prior::<f64>(n, m, sigma).unwrap();
            let q = consistency_prior::<f64>(m, n, sigma).unwrap();
            for i in 0..n {
                for j in 0..m {
                    prop_assert!((p.get(i, j) - q.get(j, i)).abs() <= 1e-15);
                }
            }
        }

        #[test]
        fn consistency_rows_peak_nearest_the_diagonal(n in 1usize..15, m in 1usize..15) {
            let p = consistency_prior::<f64>(n, m, 1.0).unwrap();
            let argmax = row_argmax(p.entries().view());
            for i in 0..n {
                let target = (i + 1) as f64 * m as f64 / n as f64;
                let best = ((argmax[i] + 1) as f64 - target).abs();
                let nearest = (1..=m).map(|j| (j as f64 - target).abs()).fold(f64::INFINITY, f64::min);
                prop_assert!((best - nearest).abs() <= 1e-12);
            }
        }

        #[test]
        fn mixing_is_affine(vals in prop::collection::vec(0.0..5.0f64, 12), psi in 0.0..=1.0f64) {
            let p = PriorMatrix::new(Array2::from_shape_vec((3, 2), vals[..6].to_vec()).unwrap(), false).unwrap();
            let q = PriorMatrix::new(Array2::from_shape_vec((3, 2), vals[6..].to_vec()).unwrap(), false).unwrap();
            let a = mix_priors(&p, &q, psi).unwrap();
            let b = mix_priors(&q, &p, psi).unwrap();
            for ((x, y), (u, v)) in a.entries().iter().zip(b.entries()).zip(p.entries().iter().zip(q.entries())) {
                prop_assert!((x + y - (u + v)).abs() <= 1e-12);
            }
        }

        #[test]
        fn augmented_prior_is_a_distribution(vals in prop::collection::vec(0.0..5.0f64, 1..30)) {
            prop_assume!(vals.iter().any(|&v| v > 0.0));
            let n = vals.len();
            let p = PriorMatrix::new(Array2::from_shape_vec((n, 1), vals).unwrap(), false).unwrap();
            let a = augment_and_normalize(&p).unwrap();
            prop_assert!(a.entries().iter().all(|&v| v >= 0.0));
            prop_assert!((a.entries().sum() - 1.0).abs() <= 1e-9);
        }
    }
}
