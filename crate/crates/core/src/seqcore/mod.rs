//! Sequences, pairwise costs and marginal weights.

mod io;
mod params;

pub use io::{
    read_embedding_file, read_label_file, write_embedding_csv, write_embedding_json,
    write_label_file, EmbeddingFile,
};
pub use params::Hyperparams;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered per-frame feature vectors, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence<T> {
    frames: Array2<T>,
    source_id: String,
}

impl<T: Scalar> EmbeddingSequence<T> {
    /// Rejects empty sequences, zero-width frames and any NaN/Inf component.
    pub fn new(frames: Array2<T>, source_id: impl Into<String>) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::EmptySequence);
        }
        if frames.ncols() == 0 {
            return Err(Error::dim("frames must have dimension >= 1"));
        }
        for ((frame, component), v) in frames.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { frame, component });
            }
        }
        Ok(Self {
            frames,
            source_id: source_id.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<T>], source_id: impl Into<String>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptySequence);
        }
        let d = rows[0].len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::dim(format!(
                "frame {i} has dimension {} but frame 0 has {d}",
                r.len()
            )));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        let frames = Array2::from_shape_vec((n, d), flat).map_err(|e| Error::dim(e.to_string()))?;
        Self::new(frames, source_id)
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frames(&self) -> &Array2<T> {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> ArrayView1<'_, T> {
        self.frames.row(i)
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn into_frames(self) -> Array2<T> {
        self.frames
    }

    /// Converts every component to another scalar type.
    pub fn cast<U: Scalar>(&self) -> EmbeddingSequence<U> {
        EmbeddingSequence {
            frames: self.frames.mapv(|v| U::lit(v.as_f64())),
            source_id: self.source_id.clone(),
        }
    }
}

/// Pairwise Euclidean distances between the frames of two sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T>(Array2<T>);

impl<T: Scalar> CostMatrix<T> {
    pub fn new(entries: Array2<T>) -> Result<Self> {
        if entries.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::param("cost entries must be finite and nonnegative"));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &Array2<T> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.0[[i, j]]
    }

    pub fn transposed(&self) -> Self {
        Self(self.0.t().to_owned())
    }
}

/// Nonnegative frame weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T>(Array1<T>);

impl<T: Scalar> WeightVector<T> {
    pub fn new(weights: Array1<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySequence);
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(Error::param("weights must be finite and nonnegative"));
        }
        let total: T = weights.sum();
        if (total - T::one()).abs() > mass_tolerance::<T>(weights.len()) {
            return Err(Error::param(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self(weights))
    }

    pub fn weights(&self) -> &Array1<T> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> T {
        self.0[i]
    }
}

/// Tolerance for "sums to one": 1e-9 in double precision, looser for `f32`.
pub(crate) fn mass_tolerance<T: Scalar>(len: usize) -> T {
    let eps = T::epsilon() * T::lit(4.0 * (len.max(1) as f64));
    eps.max(T::lit(1e-9))
}

/// Euclidean distance between two frames.
pub fn frame_distance<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&p, &q)| (p - q) * (p - q))
        .sum::<T>()
        .sqrt()
}

pub fn cost_matrix<T: Scalar>(
    x: &EmbeddingSequence<T>,
    y: &EmbeddingSequence<T>,
) -> Result<CostMatrix<T>> {
    if x.dim() != y.dim() {
        return Err(Error::dim(format!(
            "sequences have dimensions {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    let mut out = Array2::zeros((x.len(), y.len()));
    for (i, xi) in x.frames.axis_iter(Axis(0)).enumerate() {
        for (j, yj) in y.frames.axis_iter(Axis(0)).enumerate() {
            out[[i, j]] = frame_distance(xi, yj);
        }
    }
    Ok(CostMatrix(out))
}

pub fn uniform_marginals<T: Scalar>(n: usize) -> Result<WeightVector<T>> {
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let w = T::one() / T::lit(n as f64);
    Ok(WeightVector(Array1::from_elem(n, w)))
}

/// Appends a virtual-frame entry of mass `rho`, scaling the real entries by `1 - rho`.
pub fn augment_marginals<T: Scalar>(w: &WeightVector<T>, rho: T) -> Result<WeightVector<T>> {
    if !(rho >= T::zero() && rho < T::one()) {
        return Err(Error::param(format!("rho must lie in [0, 1), got {rho}")));
    }
    let scale = T::one() - rho;
    let mut out = Array1::zeros(w.len() + 1);
    for (o, &v) in out.iter_mut().zip(w.0.iter()) {
        *o = v * scale;
    }
    out[w.len()] = rho;
    Ok(WeightVector(out))
}

/// Cost of routing a real frame to the virtual frame.
///
/// The value is `factor` times the lower median of the real cost entries, so it
/// follows the scale of the embedding space. `anchor` is the real entry the
/// median was read from, which is where its gradient flows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualCost<T> {
    pub value: T,
    pub factor: T,
    pub anchor: (usize, usize),
}

pub fn virtual_cost<T: Scalar>(cost: &CostMatrix<T>, factor: T) -> VirtualCost<T> {
    let (_, m) = cost.shape();
    let mut order: Vec<(T, usize)> = cost.0.iter().copied().zip(0..).collect();
    let mid = (order.len() - 1) / 2;
    order.select_nth_unstable_by(mid, |a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let (median, flat) = order[mid];
    VirtualCost {
        value: factor * median,
        factor,
        anchor: (flat / m, flat % m),
    }
}

/// Extends an `n x m` cost to `(n+1) x (m+1)`: real-to-virtual entries cost
/// `virtual_value`, the virtual-to-virtual corner is free.
pub fn augment_cost<T: Scalar>(cost: &CostMatrix<T>, virtual_value: T) -> CostMatrix<T> {
    let (n, m) = cost.shape();
    let mut out = Array2::from_elem((n + 1, m + 1), virtual_value);
    out.slice_mut(ndarray::s![..n, ..m]).assign(&cost.0);
    out[[n, m]] = T::zero();
    CostMatrix(out)
}
