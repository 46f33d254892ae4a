//! Entropy-regularized optimal transport.
//!
//! The solver alternates the classic Sinkhorn scalings `u = a / Kv`,
//! `v = b / K'u` with `K = exp(-C / upsilon)`, starting from dual potentials
//! warmed up by epsilon scaling. As soon as a scaling leaves `[1/B, B]`
//! (`B = Scalar::scaling_bound`) it continues from the last safe iterate with
//! log-domain potential updates, which never underflow. `max_iter` bounds the
//! iterations at the target temperature.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seqcore::{mass_tolerance, CostMatrix, WeightVector};

/// Nonnegative coupling between two frame sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T> {
    entries: Array2<T>,
    augmented: bool,
    row_marginal: Array1<T>,
    col_marginal: Array1<T>,
    converged: bool,
    iterations: usize,
    marginal_error: T,
    log_domain: bool,
}

impl<T: Scalar> TransportPlan<T> {
    /// Wraps an explicit grid; marginals are read off its row and column sums.
    pub fn from_entries(entries: Array2<T>, augmented: bool) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::dim("plan must be nonempty"));
        }
        if augmented && (entries.nrows() < 2 || entries.ncols() < 2) {
            return Err(Error::dim("augmented plan needs at least one real row and column"));
        }
        if entries.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::param("plan entries must be finite and nonnegative"));
        }
        let row_marginal = entries.sum_axis(ndarray::Axis(1));
        let col_marginal = entries.sum_axis(ndarray::Axis(0));
        Ok(Self {
            entries,
            augmented,
            row_marginal,
            col_marginal,
            converged: true,
            iterations: 0,
            marginal_error: T::zero(),
            log_domain: false,
        })
    }

    pub fn entries(&self) -> &Array2<T> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<T> {
        self.entries
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[[i, j]]
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    /// Number of real rows and columns (excluding the virtual frame).
    pub fn real_shape(&self) -> (usize, usize) {
        let (r, c) = self.shape();
        if self.augmented {
            (r - 1, c - 1)
        } else {
            (r, c)
        }
    }

    pub fn real_block(&self) -> ArrayView2<'_, T> {
        let (n, m) = self.real_shape();
        self.entries.slice(s![..n, ..m])
    }

    /// The real-frame block as a standalone (non-augmented) plan.
    pub fn real_plan(&self) -> TransportPlan<T> {
        if !self.augmented {
            return self.clone();
        }
        let entries = self.real_block().to_owned();
        let row_marginal = entries.sum_axis(ndarray::Axis(1));
        let col_marginal = entries.sum_axis(ndarray::Axis(0));
        TransportPlan {
            entries,
            augmented: false,
            row_marginal,
            col_marginal,
            ..self.clone()
        }
    }

    /// Target row marginal (row sums for plans built from explicit entries).
    pub fn row_marginal(&self) -> &Array1<T> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Array1<T> {
        &self.col_marginal
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Max-norm marginal violation measured when the solver stopped.
    pub fn marginal_error(&self) -> T {
        self.marginal_error
    }

    pub fn used_log_domain(&self) -> bool {
        self.log_domain
    }

    pub fn total_mass(&self) -> T {
        self.entries.sum()
    }

    /// Max-norm violation of both marginal constraints, recomputed from the entries.
    pub fn marginal_violation(&self) -> T {
        let rows = self.entries.sum_axis(ndarray::Axis(1));
        let cols = self.entries.sum_axis(ndarray::Axis(0));
        max_abs_diff(&rows, &self.row_marginal).max(max_abs_diff(&cols, &self.col_marginal))
    }

    pub(crate) fn mark_augmented(mut self) -> Self {
        self.augmented = true;
        self
    }
}

fn max_abs_diff<T: Scalar>(a: &Array1<T>, b: &Array1<T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&p, &q)| (p - q).abs())
        .fold(T::zero(), T::max)
}

/// Solves `min <T, C> - upsilon * h(T)` over couplings with the given marginals.
///
/// Every marginal entry must be strictly positive. A run that exhausts
/// `max_iter` still returns its last plan with `converged() == false`.
pub fn sinkhorn_solve<T: Scalar>(
    cost: &CostMatrix<T>,
    row_m: &WeightVector<T>,
    col_m: &WeightVector<T>,
    upsilon: T,
    max_iter: usize,
    tol: T,
) -> Result<TransportPlan<T>> {
    let (n, m) = cost.shape();
    if n != row_m.len() || m != col_m.len() {
        return Err(Error::dim(format!(
            "cost is {n}x{m} but marginals have lengths {} and {}",
            row_m.len(),
            col_m.len()
        )));
    }
    if !(upsilon > T::zero()) || !upsilon.is_finite() {
        return Err(Error::param(format!("upsilon must be > 0, got {upsilon}")));
    }
    if !(tol > T::zero()) {
        return Err(Error::param("tolerance must be > 0"));
    }
    let a = row_m.weights();
    let b = col_m.weights();
    if a.iter().chain(b.iter()).any(|&w| !(w > T::zero())) {
        return Err(Error::param(
            "marginal entries must be > 0; drop zero-mass frames before solving",
        ));
    }
    let c = cost.entries();
    let (f0, g0) = warm_start(c, a, b, upsilon, tol);
    let kernel = c.mapv(|v| (-v / upsilon).exp());
    let bound = T::scaling_bound();
    let lower = T::one() / bound;
    let in_range = |s: &Array1<T>| s.iter().all(|&x| x.is_finite() && x >= lower && x <= bound);

    let mut u = f0.mapv(|f| (f / upsilon).exp());
    let mut v = g0.mapv(|g| (g / upsilon).exp());
    if !in_range(&u) || !in_range(&v) {
        return Ok(log_domain_loop(c, a, b, upsilon, f0, g0, 0, max_iter, tol));
    }
    let mut iter = 0;
    let mut checkpoint = T::infinity();
    while iter < max_iter {
        iter += 1;
        let kv = kernel.dot(&v);
        let new_u = Array1::from_shape_fn(n, |i| a[i] / kv[i]);
        if !in_range(&new_u) {
            let (f, g) = (u.mapv(|x| upsilon * x.ln()), v.mapv(|x| upsilon * x.ln()));
            return Ok(log_domain_loop(c, a, b, upsilon, f, g, iter - 1, max_iter, tol));
        }
        let ktu = kernel.t().dot(&new_u);
        let new_v = Array1::from_shape_fn(m, |j| b[j] / ktu[j]);
        if !in_range(&new_v) {
            let (f, g) = (new_u.mapv(|x| upsilon * x.ln()), v.mapv(|x| upsilon * x.ln()));
            return Ok(log_domain_loop(c, a, b, upsilon, f, g, iter - 1, max_iter, tol));
        }
        u = new_u;
        v = new_v;
        let err = row_violation(|i, j| u[i] * kernel[[i, j]] * v[j], a, m);
        if err <= tol {
            return Ok(scaled_plan(&kernel, &u, &v, a, b, true, iter));
        }
        if iter % STALL_WINDOW == 0 {
            if err > checkpoint * T::lit(0.5) {
                let (f, g) = (u.mapv(|x| upsilon * x.ln()), v.mapv(|x| upsilon * x.ln()));
                return Ok(newton_loop(c, a, b, upsilon, f, g, iter, max_iter, tol));
            }
            checkpoint = err;
        }
    }
    Ok(scaled_plan(&kernel, &u, &v, a, b, false, iter))
}

/// Scaling iterations whose error fails to halve within this window hand over
/// to Newton steps on the dual.
const STALL_WINDOW: usize = 20;

fn dual_objective<T: Scalar>(c: &Array2<T>, a: &Array1<T>, b: &Array1<T>, eps: T, f: &Array1<T>, g: &Array1<T>) -> T {
    let mass: T = c
        .indexed_iter()
        .map(|((i, j), &cij)| ((f[i] + g[j] - cij) / eps).exp())
        .sum();
    f.dot(a) + g.dot(b) - eps * mass
}

/// Newton ascent on the dual potentials. The Hessian system is solved with
/// Jacobi-preconditioned conjugate gradients; steps are damped by Armijo
/// backtracking on the dual objective.
#[allow(clippy::too_many_arguments)]
fn newton_loop<T: Scalar>(
    c: &Array2<T>,
    a: &Array1<T>,
    b: &Array1<T>,
    eps: T,
    mut f: Array1<T>,
    mut g: Array1<T>,
    start_iter: usize,
    max_iter: usize,
    tol: T,
) -> TransportPlan<T> {
    let (n, m) = c.dim();
    let plan_of = |f: &Array1<T>, g: &Array1<T>| {
        Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - c[[i, j]]) / eps).exp())
    };
    let mut iter = start_iter;
    let mut converged = false;
    let mut plan = plan_of(&f, &g);
    while iter < max_iter {
        let r = plan.sum_axis(ndarray::Axis(1));
        let col = plan.sum_axis(ndarray::Axis(0));
        let err = max_abs_diff(&r, a).max(max_abs_diff(&col, b));
        if err <= tol {
            converged = true;
            break;
        }
        iter += 1;
        let mut grad = Array1::zeros(n + m);
        for i in 0..n {
            grad[i] = a[i] - r[i];
        }
        for j in 0..m {
            grad[n + j] = b[j] - col[j];
        }
        let rhs = grad.mapv(|x| x * eps);
        let dir = solve_dual_hessian(&plan, &r, &col, &rhs);
        let slope = grad.dot(&dir);
        if !(slope > T::zero()) {
            break;
        }
        let base = dual_objective(c, a, b, eps, &f, &g);
        let mut step = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let nf = Array1::from_shape_fn(n, |i| f[i] + step * dir[i]);
            let ng = Array1::from_shape_fn(m, |j| g[j] + step * dir[n + j]);
            let value = dual_objective(c, a, b, eps, &nf, &ng);
            if value.is_finite() && value >= base + T::lit(1e-4) * step * slope {
                f = nf;
                g = ng;
                accepted = true;
                break;
            }
            step = step * T::lit(0.5);
        }
        if !accepted {
            break;
        }
        plan = plan_of(&f, &g);
    }
    finish(plan, a, b, converged, iter, true)
}

/// Solves `[[diag(r), P], [P', diag(col)]] x = rhs` by preconditioned CG.
/// The matrix is singular along `(1, -1)`, but `rhs` is orthogonal to it.
fn solve_dual_hessian<T: Scalar>(plan: &Array2<T>, r: &Array1<T>, col: &Array1<T>, rhs: &Array1<T>) -> Array1<T> {
    let (n, m) = plan.dim();
    let peak = r.iter().chain(col.iter()).fold(T::zero(), |acc, &v| acc.max(v));
    let ridge = peak * T::epsilon() * T::lit(16.0);
    let diag = Array1::from_shape_fn(n + m, |k| if k < n { r[k] } else { col[k - n] } + ridge);
    let apply = |x: &Array1<T>| {
        let xf = x.slice(s![..n]);
        let xg = x.slice(s![n..]);
        let top = plan.dot(&xg);
        let bottom = plan.t().dot(&xf);
        Array1::from_shape_fn(n + m, |k| {
            if k < n {
                diag[k] * x[k] + top[k]
            } else {
                diag[k] * x[k] + bottom[k - n]
            }
        })
    };
    let mut x = Array1::zeros(n + m);
    let mut res = rhs.clone();
    let mut z = Array1::from_shape_fn(n + m, |k| res[k] / diag[k]);
    let mut p = z.clone();
    let mut rz = res.dot(&z);
    let target = rhs.dot(rhs).sqrt() * T::lit(1e-10);
    for _ in 0..(4 * (n + m)).max(50) {
        let ap = apply(&p);
        let denom = p.dot(&ap);
        if !(denom > T::zero()) {
            break;
        }
        let alpha = rz / denom;
        x.scaled_add(alpha, &p);
        res.scaled_add(-alpha, &ap);
        if res.dot(&res).sqrt() <= target {
            break;
        }
        z = Array1::from_shape_fn(n + m, |k| res[k] / diag[k]);
        let rz_next = res.dot(&z);
        let beta = rz_next / rz;
        rz = rz_next;
        p = &z + &(&p * beta);
    }
    x
}

/// Iterations spent at each intermediate temperature of the warm start.
const WARM_STAGE_ITERS: usize = 25;

/// Dual potentials for `upsilon`, obtained by halving the temperature from the
/// scale of the costs down to `upsilon` (epsilon scaling). Without it, plans
/// whose optimum has near-zero entries converge only sublinearly.
fn warm_start<T: Scalar>(c: &Array2<T>, a: &Array1<T>, b: &Array1<T>, upsilon: T, tol: T) -> (Array1<T>, Array1<T>) {
    let (n, m) = c.dim();
    let mut f = Array1::zeros(n);
    let mut g = Array1::zeros(m);
    let spread = c.iter().fold(T::zero(), |acc, &v| acc.max(v)) - c.iter().fold(T::infinity(), |acc, &v| acc.min(v));
    let two = T::lit(2.0);
    let mut temps = Vec::new();
    let mut eps = upsilon * two;
    while eps < spread && temps.len() < 60 {
        temps.push(eps);
        eps = eps * two;
    }
    for &eps in temps.iter().rev() {
        for _ in 0..WARM_STAGE_ITERS {
            if log_domain_step(c, a, b, eps, &mut f, &mut g) <= tol {
                break;
            }
        }
    }
    (f, g)
}

/// One pair of log-domain potential updates; returns the row-marginal violation.
fn log_domain_step<T: Scalar>(
    c: &Array2<T>,
    a: &Array1<T>,
    b: &Array1<T>,
    eps: T,
    f: &mut Array1<T>,
    g: &mut Array1<T>,
) -> T {
    let (n, m) = c.dim();
    for i in 0..n {
        let lse = log_sum_exp((0..m).map(|j| (g[j] - c[[i, j]]) / eps));
        f[i] = eps * (a[i].ln() - lse);
    }
    for j in 0..m {
        let lse = log_sum_exp((0..n).map(|i| (f[i] - c[[i, j]]) / eps));
        g[j] = eps * (b[j].ln() - lse);
    }
    row_violation(|i, j| ((f[i] + g[j] - c[[i, j]]) / eps).exp(), a, m)
}

fn row_violation<T: Scalar>(entry: impl Fn(usize, usize) -> T, a: &Array1<T>, m: usize) -> T {
    a.iter()
        .enumerate()
        .map(|(i, &ai)| ((0..m).map(|j| entry(i, j)).sum::<T>() - ai).abs())
        .fold(T::zero(), T::max)
}

fn scaled_plan<T: Scalar>(
    kernel: &Array2<T>,
    u: &Array1<T>,
    v: &Array1<T>,
    a: &Array1<T>,
    b: &Array1<T>,
    converged: bool,
    iterations: usize,
) -> TransportPlan<T> {
    let entries = Array2::from_shape_fn(kernel.dim(), |(i, j)| u[i] * kernel[[i, j]] * v[j]);
    finish(entries, a, b, converged, iterations, false)
}

fn finish<T: Scalar>(
    entries: Array2<T>,
    a: &Array1<T>,
    b: &Array1<T>,
    converged: bool,
    iterations: usize,
    log_domain: bool,
) -> TransportPlan<T> {
    let mut plan = TransportPlan {
        entries,
        augmented: false,
        row_marginal: a.clone(),
        col_marginal: b.clone(),
        converged,
        iterations,
        marginal_error: T::zero(),
        log_domain,
    };
    plan.marginal_error = plan.marginal_violation();
    plan
}

fn log_sum_exp<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> T {
    let peak = values.clone().fold(T::neg_infinity(), T::max);
    if peak == T::neg_infinity() {
        return peak;
    }
    peak + values.map(|x| (x - peak).exp()).sum::<T>().ln()
}

#[allow(clippy::too_many_arguments)]
fn log_domain_loop<T: Scalar>(
    c: &Array2<T>,
    a: &Array1<T>,
    b: &Array1<T>,
    eps: T,
    mut f: Array1<T>,
    mut g: Array1<T>,
    start_iter: usize,
    max_iter: usize,
    tol: T,
) -> TransportPlan<T> {
    let mut iter = start_iter;
    let mut converged = false;
    let mut checkpoint = T::infinity();
    while iter < max_iter {
        iter += 1;
        let err = log_domain_step(c, a, b, eps, &mut f, &mut g);
        if err <= tol {
            converged = true;
            break;
        }
        if iter % STALL_WINDOW == 0 {
            if err > checkpoint * T::lit(0.5) {
                return newton_loop(c, a, b, eps, f, g, iter, max_iter, tol);
            }
            checkpoint = err;
        }
    }
    let entries = Array2::from_shape_fn(c.dim(), |(i, j)| ((f[i] + g[j] - c[[i, j]]) / eps).exp());
    finish(entries, a, b, converged, iter, true)
}

/// Solves over the strictly positive part of the marginals and scatters the
/// result back, leaving zero-mass rows and columns at zero.
pub fn sinkhorn_solve_support<T: Scalar>(
    cost: &CostMatrix<T>,
    row_m: &WeightVector<T>,
    col_m: &WeightVector<T>,
    upsilon: T,
    max_iter: usize,
    tol: T,
) -> Result<TransportPlan<T>> {
    let rows: Vec<usize> = (0..row_m.len()).filter(|&i| row_m.get(i) > T::zero()).collect();
    let cols: Vec<usize> = (0..col_m.len()).filter(|&j| col_m.get(j) > T::zero()).collect();
    if rows.len() == row_m.len() && cols.len() == col_m.len() {
        return sinkhorn_solve(cost, row_m, col_m, upsilon, max_iter, tol);
    }
    let (n, m) = cost.shape();
    if n != row_m.len() || m != col_m.len() {
        return Err(Error::dim("cost and marginals disagree"));
    }
    let sub_cost = CostMatrix::new(Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
        cost.get(rows[i], cols[j])
    }))?;
    let sub_a = WeightVector::new(rows.iter().map(|&i| row_m.get(i)).collect())?;
    let sub_b = WeightVector::new(cols.iter().map(|&j| col_m.get(j)).collect())?;
    let sub = sinkhorn_solve(&sub_cost, &sub_a, &sub_b, upsilon, max_iter, tol)?;
    let mut entries = Array2::zeros((n, m));
    for (si, &i) in rows.iter().enumerate() {
        for (sj, &j) in cols.iter().enumerate() {
            entries[[i, j]] = sub.get(si, sj);
        }
    }
    Ok(finish(
        entries,
        row_m.weights(),
        col_m.weights(),
        sub.converged,
        sub.iterations,
        sub.log_domain,
    ))
}

/// Frobenius product `<plan, cost>`.
pub fn ot_cost<T: Scalar>(plan: &TransportPlan<T>, cost: &CostMatrix<T>) -> Result<T> {
    if plan.shape() != cost.shape() {
        return Err(Error::dim(format!(
            "plan is {:?} but cost is {:?}",
            plan.shape(),
            cost.shape()
        )));
    }
    Ok(plan
        .entries
        .iter()
        .zip(cost.entries().iter())
        .map(|(&t, &c)| t * c)
        .sum())
}

/// `-sum t (log t - 1)` with `0 log 0 = 0`.
pub fn entropy<T: Scalar>(plan: &TransportPlan<T>) -> T {
    -plan
        .entries
        .iter()
        .filter(|&&t| t > T::zero())
        .map(|&t| t * (t.ln() - T::one()))
        .sum::<T>()
}

/// Checks that a plan's total mass is one within the solver-level tolerance.
pub fn has_unit_mass<T: Scalar>(plan: &TransportPlan<T>, tol: T) -> bool {
    let (r, c) = plan.shape();
    (plan.total_mass() - T::one()).abs() <= tol.max(mass_tolerance::<T>(r * c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::uniform_marginals;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn uniform(n: usize) -> WeightVector<f64> {
        uniform_marginals(n).unwrap()
    }

    #[test]
    fn zero_cost_gives_outer_product() {
        let cost = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        let plan = sinkhorn_solve(&cost, &uniform(2), &uniform(2), 0.05, 1000, 1e-9).unwrap();
        assert!(plan.converged());
        for &t in plan.entries() {
            assert_abs_diff_eq!(t, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn small_upsilon_approaches_assignment() {
        let cost = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let plan = sinkhorn_solve(&cost, &uniform(2), &uniform(2), 0.01, 1000, 1e-9).unwrap();
        assert!(plan.converged());
        assert_abs_diff_eq!(plan.get(0, 0), 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(plan.get(1, 1), 0.5, epsilon = 1e-8);
        assert!(plan.get(0, 1) < 1e-8 && plan.get(1, 0) < 1e-8);
    }

    #[test]
    fn dimension_and_parameter_errors() {
        let cost = CostMatrix::new(Array2::zeros((2, 3))).unwrap();
        assert!(matches!(
            sinkhorn_solve(&cost, &uniform(2), &uniform(2), 0.1, 10, 1e-6),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            sinkhorn_solve(&cost, &uniform(2), &uniform(3), 0.0, 10, 1e-6),
            Err(Error::Param(_))
        ));
        let zero_mass = WeightVector::new(array![1.0, 0.0]).unwrap();
        assert!(matches!(
            sinkhorn_solve(&cost, &zero_mass, &uniform(3), 0.1, 10, 1e-6),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn non_convergence_is_flagged_not_raised() {
        let cost = CostMatrix::new(array![[0.0, 3.0, 1.0], [2.0, 0.0, 5.0]]).unwrap();
        let plan = sinkhorn_solve(&cost, &uniform(2), &uniform(3), 0.01, 1, 1e-15).unwrap();
        assert!(!plan.converged());
        assert_eq!(plan.iterations(), 1);
        assert!(plan.entries().iter().all(|t| t.is_finite()));
    }

    #[test]
    fn large_costs_switch_to_log_domain() {
        let cost = CostMatrix::new(array![[5.0, 900.0, 50.0], [800.0, 20.0, 6.0], [9.0, 7.0, 700.0]]).unwrap();
        let plan = sinkhorn_solve(&cost, &uniform(3), &uniform(3), 0.01, 5000, 1e-9).unwrap();
        assert!(plan.used_log_domain());
        assert!(plan.converged());
        assert!(plan.entries().iter().all(|t| t.is_finite() && *t >= 0.0));
        assert!(plan.marginal_violation() <= 1e-9);
    }

    #[test]
    fn support_solver_keeps_zero_rows_empty() {
        let cost = CostMatrix::new(array![[0.0, 1.0, 2.0], [1.0, 0.0, 2.0], [2.0, 2.0, 0.0]]).unwrap();
        let a = WeightVector::new(array![0.5, 0.5, 0.0]).unwrap();
        let b = WeightVector::new(array![0.5, 0.5, 0.0]).unwrap();
        let plan = sinkhorn_solve_support(&cost, &a, &b, 0.05, 1000, 1e-9).unwrap();
        assert!(plan.converged());
        assert_eq!(plan.shape(), (3, 3));
        assert!(plan.entries().row(2).iter().all(|&t| t == 0.0));
        assert!(plan.entries().column(2).iter().all(|&t| t == 0.0));
        assert!(plan.marginal_violation() <= 1e-9);
    }

    #[test]
    fn ot_cost_examples() {
        let cost = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let diag = TransportPlan::from_entries(array![[0.5, 0.0], [0.0, 0.5]], false).unwrap();
        assert_eq!(ot_cost(&diag, &cost).unwrap(), 0.0);
        let flat = TransportPlan::from_entries(Array2::from_elem((2, 2), 0.25), false).unwrap();
        assert_eq!(ot_cost(&flat, &cost).unwrap(), 0.5);
        let constant = CostMatrix::new(Array2::from_elem((3, 4), 2.5)).unwrap();
        let flat = TransportPlan::from_entries(Array2::from_elem((3, 4), 1.0 / 12.0), false).unwrap();
        assert_abs_diff_eq!(ot_cost(&flat, &constant).unwrap(), 2.5, epsilon = 1e-12);
        let wrong = CostMatrix::new(Array2::zeros((3, 3))).unwrap();
        assert!(matches!(ot_cost(&diag, &wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn entropy_examples() {
        let one = TransportPlan::from_entries(array![[1.0]], false).unwrap();
        assert_abs_diff_eq!(entropy(&one), 1.0, epsilon = 1e-15);
        let diag = TransportPlan::from_entries(array![[0.5, 0.0], [0.0, 0.5]], false).unwrap();
        assert_abs_diff_eq!(entropy(&diag), 1.0 + std::f64::consts::LN_2, epsilon = 1e-12);
        let flat = TransportPlan::from_entries(Array2::from_elem((2, 2), 0.25), false).unwrap();
        assert!(entropy(&flat) > entropy(&diag));
    }

    #[test]
    fn works_in_single_precision() {
        let cost = CostMatrix::new(array![[0.0f32, 1.0], [1.0, 0.0]]).unwrap();
        let u = uniform_marginals::<f32>(2).unwrap();
        let plan = sinkhorn_solve(&cost, &u, &u, 0.05, 1000, 1e-5).unwrap();
        assert!(plan.converged());
        assert!((plan.get(0, 0) - 0.5).abs() < 1e-4);
    }

    fn arb_problem() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1usize..8, 1usize..8).prop_flat_map(|(n, m)| {
            (Just(n), Just(m), prop::collection::vec(0.0..3.0f64, n * m))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn converged_plans_are_feasible((n, m, c) in arb_problem(), ups in prop::sample::select(vec![0.05, 0.2, 1.0])) {
            let cost = CostMatrix::new(Array2::from_shape_vec((n, m), c).unwrap()).unwrap();
            let plan = sinkhorn_solve(&cost, &uniform(n), &uniform(m), ups, 20_000, 1e-9).unwrap();
            prop_assert!(plan.converged());
            prop_assert!(plan.marginal_violation() <= 1e-9);
            prop_assert!(plan.entries().iter().all(|&t| t >= 0.0));
            prop_assert!(has_unit_mass(&plan, 1e-6));
        }

        #[test]
        fn smaller_upsilon_never_costs_more((n, m, c) in arb_problem()) {
            let cost = CostMatrix::new(Array2::from_shape_vec((n, m), c).unwrap()).unwrap();
            let lo = sinkhorn_solve(&cost, &uniform(n), &uniform(m), 0.05, 50_000, 1e-10).unwrap();
            let hi = sinkhorn_solve(&cost, &uniform(n), &uniform(m), 0.5, 50_000, 1e-10).unwrap();
            prop_assert!(ot_cost(&lo, &cost).unwrap() <= ot_cost(&hi, &cost).unwrap() + 1e-8);
        }

        #[test]
        fn solves_are_deterministic((n, m, c) in arb_problem()) {
            let cost = CostMatrix::new(Array2::from_shape_vec((n, m), c).unwrap()).unwrap();
            let p1 = sinkhorn_solve(&cost, &uniform(n), &uniform(m), 0.1, 1000, 1e-9).unwrap();
            let p2 = sinkhorn_solve(&cost, &uniform(n), &uniform(m), 0.1, 1000, 1e-9).unwrap();
            prop_assert_eq!(p1, p2);
        }
    }
}
