//! Sparse linear decoder: a one-hidden-layer autoencoder with sigmoid hidden
//! units and a linear reconstruction layer.
//!
//! Forward pass `s = sigmoid(w1^T p + b1)`, reconstruction
//! `p~ = w2^T s + b2`, and the training objective
//!
//! ```text
//! J = (1/n) ||p~ - p||_F^2
//!   + beta * sum_j KL(rho || rho_hat_j)        (j over hidden units)
//!   + lambda * (||w1||_F^2 + ||w2||_F^2)
//! ```
//!
//! with `rho_hat_j` the average activation of hidden unit `j` over the
//! batch. The reconstruction term is averaged per patch so the default
//! `beta`/`lambda` weights keep their balance regardless of `n`. Training
//! minimizes `J` with L-BFGS over the exact analytic gradient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbfgs::{minimize, MinimizeOptions, MinimizeOutcome};
use crate::patches::PatchMatrix;
use crate::whitening::Epsilon;

const RHO_HAT_CLAMP: f64 = 1e-12;

/// Hyperparameters for decoder training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Target average activation of each hidden unit.
    pub rho: f64,
    /// Weight of the KL sparsity penalty.
    pub beta: f64,
    /// Weight decay on w1 and w2 (biases excluded).
    pub lambda: f64,
    pub max_iterations: usize,
    /// Relative objective-change stopping threshold.
    pub tolerance: f64,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            rho: 0.035,
            beta: 5.0,
            lambda: 3e-3,
            max_iterations: 400,
            tolerance: 1e-7,
            memory: 20,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::arg(format!("rho must be in (0,1), got {}", self.rho)));
        }
        if self.beta < 0.0 || self.lambda < 0.0 {
            return Err(Error::arg("beta and lambda must be >= 0"));
        }
        Ok(())
    }

    /// Stable digest of the configuration, recorded in provenance.
    pub fn digest(&self) -> String {
        let canonical = format!(
            "rho={:e};beta={:e};lambda={:e};iters={};tol={:e};mem={}",
            self.rho, self.beta, self.lambda, self.max_iterations, self.tolerance, self.memory
        );
        format!("{:016x}", fnv1a(canonical.as_bytes()))
    }

    fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            memory: self.memory,
            ..MinimizeOptions::default()
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// How a filter set came to be: the whitening setup of its training data,
/// the init seed, and a digest of the training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub k: usize,
    pub epsilon: Epsilon,
    pub seed: u64,
    pub config_digest: String,
}

/// Trained decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSet {
    w1: DMatrix<f64>, // d x h
    b1: DVector<f64>, // h
    w2: DMatrix<f64>, // h x d
    b2: DVector<f64>, // d
    provenance: Provenance,
}

impl FilterSet {
    pub fn new(
        w1: DMatrix<f64>,
        b1: DVector<f64>,
        w2: DMatrix<f64>,
        b2: DVector<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        let (d, h) = (w1.nrows(), w1.ncols());
        if h == 0 || d == 0 {
            return Err(Error::arg("filter set dimensions must be >= 1"));
        }
        if b1.len() != h || w2.nrows() != h || w2.ncols() != d || b2.len() != d {
            return Err(Error::arg("inconsistent filter set dimensions"));
        }
        let finite = w1.iter().all(|v| v.is_finite())
            && b1.iter().all(|v| v.is_finite())
            && w2.iter().all(|v| v.is_finite())
            && b2.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::numeric("non-finite filter set parameters"));
        }
        Ok(FilterSet {
            w1,
            b1,
            w2,
            b2,
            provenance,
        })
    }

    pub fn d(&self) -> usize {
        self.w1.nrows()
    }

    pub fn h(&self) -> usize {
        self.w1.ncols()
    }

    pub fn w1(&self) -> &DMatrix<f64> {
        &self.w1
    }

    pub fn b1(&self) -> &DVector<f64> {
        &self.b1
    }

    pub fn w2(&self) -> &DMatrix<f64> {
        &self.w2
    }

    pub fn b2(&self) -> &DVector<f64> {
        &self.b2
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Forward filter for hidden unit `j` as a flat vector (column of w1).
    pub fn filter_column(&self, j: usize) -> Vec<f64> {
        self.w1.column(j).iter().copied().collect()
    }
}

/// Average activation per hidden unit over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityStats {
    pub rho_hat: DVector<f64>,
}

impl SparsityStats {
    pub fn mean(&self) -> f64 {
        self.rho_hat.mean()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hidden-layer responses `sigmoid(w1^T p + b1)`, one column per patch.
pub fn forward(f: &FilterSet, p: &PatchMatrix) -> Result<DMatrix<f64>> {
    if p.d() != f.d() {
        return Err(Error::arg(format!(
            "dimension mismatch: filters expect d = {}, patches have d = {}",
            f.d(),
            p.d()
        )));
    }
    let mut z = f.w1.transpose() * p.matrix();
    for mut col in z.column_iter_mut() {
        col += &f.b1;
    }
    z.apply(|v| *v = sigmoid(*v));
    Ok(z)
}

/// Linear reconstruction `w2^T s + b2`.
pub fn reconstruct(f: &FilterSet, s: &DMatrix<f64>) -> Result<PatchMatrix> {
    if s.nrows() != f.h() {
        return Err(Error::arg(format!(
            "dimension mismatch: filters have h = {}, activations have {} rows",
            f.h(),
            s.nrows()
        )));
    }
    let mut out = f.w2.transpose() * s;
    for mut col in out.column_iter_mut() {
        col += &f.b2;
    }
    PatchMatrix::from_matrix(out)
}

/// Average activations of each hidden unit on `p`.
pub fn sparsity_stats(f: &FilterSet, p: &PatchMatrix) -> Result<SparsityStats> {
    let s = forward(f, p)?;
    let n = s.ncols() as f64;
    let rho_hat = DVector::from_iterator(s.nrows(), s.row_iter().map(|r| r.sum() / n));
    Ok(SparsityStats { rho_hat })
}

/// `KL(rho || rho_hat)` between Bernoulli means: zero iff equal, positive
/// otherwise. Both arguments must lie strictly inside (0, 1).
pub fn kl_divergence(rho: f64, rho_hat: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::arg(format!("rho must be in (0,1), got {rho}")));
    }
    if !(rho_hat > 0.0 && rho_hat < 1.0) {
        return Err(Error::numeric(format!(
            "rho_hat at the boundary of (0,1): {rho_hat}"
        )));
    }
    Ok(rho * (rho / rho_hat).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).ln())
}

/// Flat parameter layout used by training: `w1` column-major, then `b1`,
/// then `w2` column-major, then `b2`.
pub fn pack_params(f: &FilterSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(param_count(f.d(), f.h()));
    out.extend(f.w1.iter());
    out.extend(f.b1.iter());
    out.extend(f.w2.iter());
    out.extend(f.b2.iter());
    out
}

/// Inverse of [`pack_params`].
pub fn unpack_params(params: &[f64], d: usize, h: usize, provenance: Provenance) -> Result<FilterSet> {
    if params.len() != param_count(d, h) {
        return Err(Error::arg(format!(
            "parameter vector length {} does not match d = {d}, h = {h}",
            params.len()
        )));
    }
    let (w1_len, w2_len) = (d * h, h * d);
    let w1 = DMatrix::from_column_slice(d, h, &params[..w1_len]);
    let b1 = DVector::from_column_slice(&params[w1_len..w1_len + h]);
    let w2 = DMatrix::from_column_slice(h, d, &params[w1_len + h..w1_len + h + w2_len]);
    let b2 = DVector::from_column_slice(&params[w1_len + h + w2_len..]);
    FilterSet::new(w1, b1, w2, b2, provenance)
}

pub fn param_count(d: usize, h: usize) -> usize {
    2 * d * h + d + h
}

/// Objective and exact analytic gradient at `params` (layout of
/// [`pack_params`]). `rho_hat` is clamped away from {0, 1} before the KL
/// terms so early saturated iterates stay finite.
pub fn objective_and_gradient(
    params: &[f64],
    p: &PatchMatrix,
    d: usize,
    h: usize,
    cfg: &TrainingConfig,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    if p.d() != d {
        return Err(Error::arg("patch dimension does not match d"));
    }
    if params.len() != param_count(d, h) {
        return Err(Error::arg("parameter vector length mismatch"));
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite parameters"));
    }

    let n = p.n();
    let n_f = n as f64;
    let (w1_len, w2_len) = (d * h, h * d);
    let w1 = DMatrix::from_column_slice(d, h, &params[..w1_len]);
    let b1 = DVector::from_column_slice(&params[w1_len..w1_len + h]);
    let w2 = DMatrix::from_column_slice(h, d, &params[w1_len + h..w1_len + h + w2_len]);
    let b2 = DVector::from_column_slice(&params[w1_len + h + w2_len..]);

    // Forward.
    let mut s = w1.transpose() * p.matrix();
    for mut col in s.column_iter_mut() {
        col += &b1;
    }
    s.apply(|v| *v = sigmoid(*v));
    let mut recon = w2.transpose() * &s;
    for mut col in recon.column_iter_mut() {
        col += &b2;
    }

    let residual = &recon - p.matrix();
    let rec_term = residual.iter().map(|r| r * r).sum::<f64>() / n_f;

    let rho_hat = DVector::from_iterator(
        h,
        s.row_iter()
            .map(|r| (r.sum() / n_f).clamp(RHO_HAT_CLAMP, 1.0 - RHO_HAT_CLAMP)),
    );
    let mut kl_term = 0.0;
    for &rh in rho_hat.iter() {
        kl_term += kl_divergence(cfg.rho, rh)?;
    }
    let decay_term = w1.iter().map(|v| v * v).sum::<f64>() + w2.iter().map(|v| v * v).sum::<f64>();
    let objective = rec_term + cfg.beta * kl_term + cfg.lambda * decay_term;

    // Backward.
    let g_recon = residual * (2.0 / n_f); // d x n
    let grad_w2 = &s * g_recon.transpose() + w2.scale(2.0 * cfg.lambda); // h x d
    let grad_b2 = DVector::from_iterator(d, g_recon.row_iter().map(|r| r.sum()));

    let mut g_s = &w2 * &g_recon; // h x n
    let sparsity_push = DVector::from_iterator(
        h,
        rho_hat
            .iter()
            .map(|&rh| cfg.beta / n_f * (-cfg.rho / rh + (1.0 - cfg.rho) / (1.0 - rh))),
    );
    for mut col in g_s.column_iter_mut() {
        col += &sparsity_push;
    }
    // Through the sigmoid: g_z = g_s .* s .* (1 - s)
    let g_z = g_s.zip_map(&s, |g, sv| g * sv * (1.0 - sv)); // h x n
    let grad_w1 = p.matrix() * g_z.transpose() + w1.scale(2.0 * cfg.lambda); // d x h
    let grad_b1 = DVector::from_iterator(h, g_z.row_iter().map(|r| r.sum()));

    let mut grad = Vec::with_capacity(params.len());
    grad.extend(grad_w1.iter());
    grad.extend(grad_b1.iter());
    grad.extend(grad_w2.iter());
    grad.extend(grad_b2.iter());

    Ok((objective, grad))
}

/// Trains a filter set on preprocessed patches. Weights start uniform in
/// `[-r, r]` with `r = sqrt(6) / sqrt(d + h + 1)`, biases at zero, all drawn
/// from a generator seeded with `seed` (bit-reproducible). `whitening_k` and
/// `whitening_epsilon` describe how the patches were preprocessed and are
/// recorded as provenance only.
pub fn train(
    p: &PatchMatrix,
    h: usize,
    cfg: &TrainingConfig,
    seed: u64,
    whitening_k: usize,
    whitening_epsilon: Epsilon,
) -> Result<FilterSet> {
    cfg.validate()?;
    if h == 0 {
        return Err(Error::arg("hidden size h must be >= 1"));
    }
    let d = p.d();
    let provenance = Provenance {
        k: whitening_k,
        epsilon: whitening_epsilon,
        seed,
        config_digest: cfg.digest(),
    };

    let x0 = initial_params(d, h, seed);
    let outcome = run_minimize(&x0, p, d, h, cfg)?;
    unpack_params(&outcome.x, d, h, provenance)
}

/// The deterministic starting point `train` uses for a given seed: weights
/// uniform in [-r, r] with r = sqrt(6)/sqrt(d+h+1), biases zero. Exposed so
/// callers can measure optimization progress against the initial objective.
pub fn initial_params(d: usize, h: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let r = 6f64.sqrt() / ((d + h + 1) as f64).sqrt();
    let mut params = vec![0.0; param_count(d, h)];
    // w1 column-major, then w2 column-major; biases stay zero.
    for v in params[..d * h].iter_mut() {
        *v = rng.random_range(-r..=r);
    }
    let w2_start = d * h + h;
    for v in params[w2_start..w2_start + h * d].iter_mut() {
        *v = rng.random_range(-r..=r);
    }
    params
}

fn run_minimize(
    x0: &[f64],
    p: &PatchMatrix,
    d: usize,
    h: usize,
    cfg: &TrainingConfig,
) -> Result<MinimizeOutcome> {
    let objective = |params: &[f64]| match objective_and_gradient(params, p, d, h, cfg) {
        Ok(pair) => pair,
        Err(_) => (f64::NAN, vec![f64::NAN; params.len()]),
    };
    minimize(objective, x0, &cfg.minimize_options())
}
