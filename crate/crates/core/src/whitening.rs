//! Standard and iterated ZCA whitening.
//!
//! A whitening transform is fit by eigendecomposing the centered outer
//! product `u u^T = V L V^T` and forming
//!
//! ```text
//! w = sqrt(n - 1) * V * (L + eps)^(-1/2) * V^T
//! ```
//!
//! The `sqrt(n - 1)` factor pins the free proportionality constant so that
//! the covariance of the whitened output is `(n - 1) I` when `eps = 0`.
//! The regularizer `eps` keeps small eigenvalues from blowing up the
//! inverse; iterating the fit-and-apply step `k` times cancels the bias it
//! introduces, driving the output covariance toward `(n - 1) I` even with
//! `eps > 0`. `k = 1` is standard ZCA; `k = 0` only centers the data.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patches::PatchMatrix;

/// Eigenvalue regularizer. `Relative(r)` resolves to `r * mean(eigenvalues)`
/// of the matrix being whitened, which survives input rescaling; `Absolute`
/// is used verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Epsilon {
    Absolute(f64),
    Relative(f64),
}

impl Epsilon {
    /// Default regularizer for a `k`-iteration whitening run: `0.01 * mean(L)`
    /// for standard ZCA, absolute `0.1` for the iterated regime (iteration
    /// washes the absolute bias out; a relative one would keep a fixed-point
    /// offset forever).
    pub fn default_for_k(k: usize) -> Epsilon {
        if k <= 1 {
            Epsilon::Relative(0.01)
        } else {
            Epsilon::Absolute(0.1)
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Epsilon::Absolute(v) | Epsilon::Relative(v) => v,
        }
    }

    fn resolve(&self, eigvals: &DVector<f64>) -> f64 {
        match *self {
            Epsilon::Absolute(v) => v,
            Epsilon::Relative(v) => v * eigvals.mean(),
        }
    }
}

/// How patches are whitened when a trained model is applied to a new
/// image. Models store the chain fit on their training data so either
/// protocol works after deserialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiteningProtocol {
    /// Fit a fresh chain on the image's own patches (the default: test
    /// images need not follow the training distribution).
    RefitPerImage,
    /// Apply the chain fit during training.
    TrainingChain,
    /// Skip whitening entirely; raw patches go straight to the filters.
    None,
}

/// One fitted ZCA stage: the filter `w`, the feature mean subtracted before
/// application, and the eigen-data it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    w: DMatrix<f64>,
    epsilon: f64,
    mean: DVector<f64>,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

impl WhiteningTransform {
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Effective (absolute) regularizer added to the eigenvalues.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Eigenvalues of the centered outer product, descending.
    pub fn eigvals(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Rebuilds a transform from stored parts (deserialization path).
    pub fn from_parts(
        w: DMatrix<f64>,
        epsilon: f64,
        mean: DVector<f64>,
        eigvals: DVector<f64>,
        eigvecs: DMatrix<f64>,
    ) -> Result<Self> {
        let d = w.nrows();
        if w.ncols() != d || mean.len() != d || eigvals.len() != d || eigvecs.nrows() != d {
            return Err(Error::arg("inconsistent whitening transform dimensions"));
        }
        Ok(WhiteningTransform {
            w,
            epsilon,
            mean,
            eigvals,
            eigvecs,
        })
    }

    /// An identity transform with the given mean: applying it only centers.
    pub fn identity(mean: DVector<f64>) -> Self {
        let d = mean.len();
        WhiteningTransform {
            w: DMatrix::identity(d, d),
            epsilon: 0.0,
            mean,
            eigvals: DVector::from_element(d, 1.0),
            eigvecs: DMatrix::identity(d, d),
        }
    }
}

/// An ordered sequence of whitening stages plus the training-data mean.
/// An empty chain (`k = 0`) centers with the base mean and nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningChain {
    base_mean: DVector<f64>,
    stages: Vec<WhiteningTransform>,
}

impl WhiteningChain {
    pub fn from_parts(base_mean: DVector<f64>, stages: Vec<WhiteningTransform>) -> Self {
        WhiteningChain { base_mean, stages }
    }

    pub fn k(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[WhiteningTransform] {
        &self.stages
    }

    pub fn base_mean(&self) -> &DVector<f64> {
        &self.base_mean
    }
}

/// Outer product `P P^T` of already-centered data. The whitening target is
/// `(n - 1) I` in this convention.
pub fn covariance(p: &PatchMatrix) -> Result<DMatrix<f64>> {
    if p.n() < 2 {
        return Err(Error::arg(format!("covariance needs n >= 2, got n = {}", p.n())));
    }
    let m = p.matrix();
    Ok(m * m.transpose())
}

/// Fits one ZCA transform on `p`: stores the per-feature mean, eigendecomposes
/// the centered outer product, and builds `sqrt(n-1) V (L + eps)^(-1/2) V^T`.
pub fn compute_whitener(p: &PatchMatrix, epsilon: Epsilon) -> Result<WhiteningTransform> {
    let n = p.n();
    if n < 2 {
        return Err(Error::arg(format!("whitening needs n >= 2, got n = {n}")));
    }
    if epsilon.value() < 0.0 {
        return Err(Error::arg("epsilon must be >= 0"));
    }
    if p.matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite input to whitening"));
    }

    let mean = row_means(p.matrix());
    let centered = center(p.matrix(), &mean);
    let outer = &centered * centered.transpose();
    // Symmetrize explicitly to kill round-off asymmetry before the eigensolver.
    let sym = (&outer + outer.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    // Descending eigenvalue order.
    let d = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigvals = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigvecs = DMatrix::zeros(d, d);
    for (new_col, &old_col) in order.iter().enumerate() {
        eigvecs.set_column(new_col, &eig.eigenvectors.column(old_col));
    }
    if eigvals.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("eigendecomposition produced non-finite eigenvalues"));
    }

    let eps = epsilon.resolve(&eigvals);
    let min_eig = eigvals[d - 1];
    if eps <= 0.0 && min_eig <= 1e-12 {
        return Err(Error::arg(format!(
            "ill-conditioned input (min eigenvalue {min_eig:.3e}) requires epsilon > 0"
        )));
    }
    if eigvals.iter().any(|&l| l + eps <= 0.0) {
        return Err(Error::numeric("eigenvalue plus epsilon not strictly positive"));
    }

    let scale = ((n - 1) as f64).sqrt();
    let inv_sqrt = DVector::from_iterator(d, eigvals.iter().map(|&l| scale / (l + eps).sqrt()));
    let mut scaled = eigvecs.clone();
    for (j, col_scale) in inv_sqrt.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*col_scale);
    }
    let w = &scaled * eigvecs.transpose();
    let w = (&w + w.transpose()) * 0.5;

    Ok(WhiteningTransform {
        w,
        epsilon: eps,
        mean,
        eigvals,
        eigvecs,
    })
}

/// Applies a fitted transform: `w * (p - mean)`.
pub fn apply(t: &WhiteningTransform, p: &PatchMatrix) -> Result<PatchMatrix> {
    if p.d() != t.dim() {
        return Err(Error::arg(format!(
            "dimension mismatch: transform is {}, patches are {}",
            t.dim(),
            p.d()
        )));
    }
    let centered = center(p.matrix(), &t.mean);
    PatchMatrix::from_matrix(&t.w * centered)
}

/// Fits and applies `k` whitening stages in sequence, refitting on the output
/// of the previous stage each time. `k = 0` returns the zero-centered input
/// and an empty chain.
pub fn iterated_whiten(
    p: &PatchMatrix,
    k: usize,
    epsilon: Epsilon,
) -> Result<(PatchMatrix, WhiteningChain)> {
    let base_mean = row_means(p.matrix());
    if k == 0 {
        let centered = PatchMatrix::from_matrix(center(p.matrix(), &base_mean))?;
        return Ok((centered, WhiteningChain::from_parts(base_mean, Vec::new())));
    }
    let mut current = p.clone();
    let mut stages = Vec::with_capacity(k);
    for _ in 0..k {
        let t = compute_whitener(&current, epsilon)?;
        current = apply(&t, &current)?;
        stages.push(t);
    }
    Ok((current, WhiteningChain::from_parts(base_mean, stages)))
}

/// Applies every stage of a chain in order; an empty chain centers with the
/// chain's base mean.
pub fn apply_chain(c: &WhiteningChain, p: &PatchMatrix) -> Result<PatchMatrix> {
    if c.stages.is_empty() {
        if p.d() != c.base_mean.len() {
            return Err(Error::arg(format!(
                "dimension mismatch: chain mean is {}, patches are {}",
                c.base_mean.len(),
                p.d()
            )));
        }
        return PatchMatrix::from_matrix(center(p.matrix(), &c.base_mean));
    }
    let mut current = p.clone();
    for stage in &c.stages {
        current = apply(stage, &current)?;
    }
    Ok(current)
}

fn row_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.ncols() as f64;
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum() / n))
}

fn center(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        col -= mean;
    }
    out
}
