//! Gaussian-process regression with a zero prior mean on standardized targets.
//!
//! Kernels are stationary with per-dimension (ARD) lengthscales. The kernel
//! matrix is factorised once at fit time and the Cholesky factor is reused for
//! every posterior query.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::nelder_mead;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("need at least {needed} distinct training points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("inputs have inconsistent dimension: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite training data")]
    NonFinite,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    SingularKernel { jitter: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Matern52,
    SquaredExponential,
}

impl Kernel {
    /// Correlation as a function of the squared scaled distance.
    #[inline]
    pub fn correlation(self, r2: f64) -> f64 {
        match self {
            Kernel::Matern52 => {
                let s = (5.0 * r2).sqrt();
                (1.0 + s + 5.0 * r2 / 3.0) * (-s).exp()
            }
            Kernel::SquaredExponential => (-0.5 * r2).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
}

impl Hyperparameters {
    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64) -> Self {
        Hyperparameters {
            lengthscales: vec![lengthscale; dim],
            signal_variance,
        }
    }

    fn validate(&self, dim: usize) -> Result<(), GpError> {
        if self.lengthscales.len() != dim {
            return Err(GpError::InvalidHyperparameters(format!(
                "{} lengthscales for {dim}-dimensional inputs",
                self.lengthscales.len()
            )));
        }
        if self
            .lengthscales
            .iter()
            .chain(std::iter::once(&self.signal_variance))
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(GpError::InvalidHyperparameters(
                "entries must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

/// Settings for maximum-marginal-likelihood hyperparameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperSearch {
    /// Number of random log-uniform starting points.
    pub starts: usize,
    /// Starts (best by marginal likelihood) that get a local search.
    pub local_searches: usize,
    /// Nelder–Mead evaluations per local search.
    pub evals_per_search: usize,
    /// Largest training subset used to score hyperparameters.
    pub max_points: usize,
    pub lengthscale_range: (f64, f64),
    pub variance_range: (f64, f64),
    pub seed: u64,
}

impl Default for HyperSearch {
    fn default() -> Self {
        HyperSearch {
            starts: 16,
            local_searches: 4,
            evals_per_search: 120,
            max_points: 150,
            lengthscale_range: (0.05, 5.0),
            variance_range: (0.1, 10.0),
            seed: 0,
        }
    }
}

/// Search bounds in log space; wider than the start ranges.
const LOG_LENGTHSCALE_BOUNDS: (f64, f64) = (-6.907_755_278_982_137, 4.605_170_185_988_092); // 1e-3 .. 100
const LOG_VARIANCE_BOUNDS: (f64, f64) = (-4.605_170_185_988_091, 4.605_170_185_988_092); // 1e-2 .. 100

#[derive(Debug, Clone, PartialEq)]
pub enum HyperPolicy {
    Fixed(Hyperparameters),
    /// Maximise the log marginal likelihood; an optional warm start joins the
    /// random starts.
    Optimize {
        search: HyperSearch,
        warm_start: Option<Hyperparameters>,
    },
}

/// Relative jitter ladder: multiples of the signal variance added to the diagonal.
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

/// Largest coordinate difference under which two inputs count as duplicates.
const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: Kernel,
    hyper: Hyperparameters,
    jitter: f64,
    dim: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    /// Inputs divided by their lengthscales, row-major `n x dim`.
    scaled: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    /// Inverse of the Cholesky factor, built on the first batch query.
    l_inv: OnceLock<DMatrix<f64>>,
    alpha: DVector<f64>,
    log_marginal_likelihood: f64,
}

/// Merges inputs closer than `DUPLICATE_TOL` (max-norm), averaging their targets.
fn deduplicate(inputs: &[Vec<f64>], targets: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut out_x: Vec<Vec<f64>> = Vec::with_capacity(inputs.len());
    let mut sums: Vec<(f64, usize)> = Vec::with_capacity(inputs.len());
    'outer: for (x, &y) in inputs.iter().zip(targets) {
        for (j, u) in out_x.iter().enumerate() {
            if x.iter().zip(u).all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL) {
                sums[j].0 += y;
                sums[j].1 += 1;
                continue 'outer;
            }
        }
        out_x.push(x.clone());
        sums.push((y, 1));
    }
    let out_y = sums.into_iter().map(|(s, c)| s / c as f64).collect();
    (out_x, out_y)
}

fn scale_inputs(inputs: &[Vec<f64>], lengthscales: &[f64]) -> Vec<f64> {
    inputs
        .iter()
        .flat_map(|x| x.iter().zip(lengthscales).map(|(v, l)| v / l))
        .collect()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel_matrix(kernel: Kernel, scaled: &[f64], dim: usize, variance: f64) -> DMatrix<f64> {
    let n = scaled.len() / dim;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let xi = &scaled[i * dim..(i + 1) * dim];
        k[(i, i)] = variance;
        for j in 0..i {
            let v = variance * kernel.correlation(sq_dist(xi, &scaled[j * dim..(j + 1) * dim]));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factor of `K + jitter I`, escalating the jitter tenfold on failure.
fn factorize(k: &DMatrix<f64>, variance: f64) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * variance;
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
        if rel >= JITTER_MAX * (1.0 - 1e-9) {
            return Err(GpError::SingularKernel { jitter });
        }
        rel = (rel * 10.0).min(JITTER_MAX);
    }
}

/// Inverse of a lower-triangular matrix (upper triangle ignored) by recursive
/// 2x2 blocking, so most of the work runs through matrix products.
fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    fn inv(l: DMatrixView<'_, f64>) -> DMatrix<f64> {
        let n = l.nrows();
        if n <= 64 {
            let mut out = DMatrix::identity(n, n);
            for j in 0..n {
                for i in j..n {
                    let mut acc = if i == j { 1.0 } else { 0.0 };
                    for k in j..i {
                        acc -= l[(i, k)] * out[(k, j)];
                    }
                    out[(i, j)] = acc / l[(i, i)];
                }
            }
            return out;
        }
        let h = n / 2;
        let a_inv = inv(l.view((0, 0), (h, h)));
        let d_inv = inv(l.view((h, h), (n - h, n - h)));
        let c = l.view((h, 0), (n - h, h));
        let lower_left = -(&d_inv * (c * &a_inv));
        let mut out = DMatrix::zeros(n, n);
        out.view_mut((0, 0), (h, h)).copy_from(&a_inv);
        out.view_mut((h, h), (n - h, n - h)).copy_from(&d_inv);
        out.view_mut((h, 0), (n - h, h)).copy_from(&lower_left);
        out
    }
    inv(l.as_view())
}

fn log_marginal(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * y.dot(alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Log marginal likelihood of `targets` under the given hyperparameters, or
/// `-inf` if the kernel matrix cannot be factorised.
pub fn log_marginal_likelihood(
    kernel: Kernel,
    inputs: &[Vec<f64>],
    targets: &[f64],
    hyper: &Hyperparameters,
) -> f64 {
    let dim = hyper.lengthscales.len();
    let scaled = scale_inputs(inputs, &hyper.lengthscales);
    let k = kernel_matrix(kernel, &scaled, dim, hyper.signal_variance);
    match factorize(&k, hyper.signal_variance) {
        Ok((chol, _)) => {
            let y = DVector::from_column_slice(targets);
            let alpha = chol.solve(&y);
            log_marginal(&chol, &y, &alpha)
        }
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Deterministic subset used for hyperparameter scoring: the best half by
/// target plus an even stride through the rest.
fn scoring_subset(
    inputs: &[Vec<f64>],
    targets: &[f64],
    max_points: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = inputs.len();
    if n <= max_points {
        return (inputs.to_vec(), targets.to_vec());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| targets[b].total_cmp(&targets[a]).then(a.cmp(&b)));
    let top = max_points / 2;
    let mut chosen: Vec<usize> = order[..top].to_vec();
    let rest = &order[top..];
    let want = max_points - top;
    for i in 0..want {
        chosen.push(rest[i * rest.len() / want]);
    }
    chosen.sort_unstable();
    (
        chosen.iter().map(|&i| inputs[i].clone()).collect(),
        chosen.iter().map(|&i| targets[i]).collect(),
    )
}

fn optimize_hyperparameters(
    kernel: Kernel,
    inputs: &[Vec<f64>],
    targets: &[f64],
    search: &HyperSearch,
    warm_start: Option<&Hyperparameters>,
) -> Hyperparameters {
    let dim = inputs[0].len();
    let (xs, ys) = scoring_subset(inputs, targets, search.max_points);
    let clamp = |p: &[f64]| -> Hyperparameters {
        let lengthscales = p[..dim]
            .iter()
            .map(|v| {
                v.clamp(LOG_LENGTHSCALE_BOUNDS.0, LOG_LENGTHSCALE_BOUNDS.1)
                    .exp()
            })
            .collect();
        let signal_variance = p[dim]
            .clamp(LOG_VARIANCE_BOUNDS.0, LOG_VARIANCE_BOUNDS.1)
            .exp();
        Hyperparameters {
            lengthscales,
            signal_variance,
        }
    };
    let objective = |p: &[f64]| -log_marginal_likelihood(kernel, &xs, &ys, &clamp(p));

    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let (l_lo, l_hi) = (
        search.lengthscale_range.0.ln(),
        search.lengthscale_range.1.ln(),
    );
    let (v_lo, v_hi) = (search.variance_range.0.ln(), search.variance_range.1.ln());
    let mut starts: Vec<Vec<f64>> = (0..search.starts)
        .map(|_| {
            let mut p: Vec<f64> = (0..dim).map(|_| rng.gen_range(l_lo..=l_hi)).collect();
            p.push(rng.gen_range(v_lo..=v_hi));
            p
        })
        .collect();
    if let Some(w) = warm_start.filter(|w| w.lengthscales.len() == dim) {
        let mut p: Vec<f64> = w.lengthscales.iter().map(|l| l.ln()).collect();
        p.push(w.signal_variance.ln());
        starts.push(p);
    }

    let mut scored: Vec<(f64, Vec<f64>)> = starts.into_iter().map(|p| (objective(&p), p)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let step = vec![0.5; dim + 1];
    let mut best: Option<(f64, Vec<f64>)> = scored.first().cloned();
    for (_, start) in scored.iter().take(search.local_searches.max(1)) {
        let m = nelder_mead(objective, start, &step, search.evals_per_search);
        if best.as_ref().is_none_or(|(v, _)| m.value < *v) {
            best = Some((m.value, m.x));
        }
    }
    match best {
        Some((v, p)) if v.is_finite() => clamp(&p),
        // every candidate failed to factorise; fall back to a broad default
        _ => Hyperparameters::isotropic(dim, 0.5, 1.0),
    }
}

impl GpModel {
    /// Fits a GP to `(inputs, targets)`. Duplicate inputs are merged first.
    pub fn fit(
        kernel: Kernel,
        inputs: &[Vec<f64>],
        targets: &[f64],
        policy: &HyperPolicy,
    ) -> Result<Self, GpError> {
        if inputs.len() != targets.len() {
            return Err(GpError::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let dim = inputs.first().map_or(0, |x| x.len());
        if let Some(bad) = inputs.iter().find(|x| x.len() != dim) {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if inputs
            .iter()
            .flatten()
            .chain(targets)
            .any(|v| !v.is_finite())
        {
            return Err(GpError::NonFinite);
        }
        let (inputs, targets) = deduplicate(inputs, targets);
        if inputs.len() < 2 || dim == 0 {
            return Err(GpError::TooFewPoints {
                needed: 2,
                got: inputs.len(),
            });
        }

        let hyper = match policy {
            HyperPolicy::Fixed(h) => h.clone(),
            HyperPolicy::Optimize { search, warm_start } => {
                optimize_hyperparameters(kernel, &inputs, &targets, search, warm_start.as_ref())
            }
        };
        hyper.validate(dim)?;

        let scaled = scale_inputs(&inputs, &hyper.lengthscales);
        let k = kernel_matrix(kernel, &scaled, dim, hyper.signal_variance);
        let (chol, jitter) = factorize(&k, hyper.signal_variance)?;
        let y = DVector::from_column_slice(&targets);
        let alpha = chol.solve(&y);
        let log_marginal_likelihood = log_marginal(&chol, &y, &alpha);
        Ok(GpModel {
            kernel,
            hyper,
            jitter,
            dim,
            inputs,
            targets,
            scaled,
            chol,
            l_inv: OnceLock::new(),
            alpha,
            log_marginal_likelihood,
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Training inputs after duplicate merging.
    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Prior covariance between two raw inputs.
    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.hyper.lengthscales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        self.hyper.signal_variance * self.kernel.correlation(r2)
    }

    fn cross_covariances(&self, z: &[f64], out: &mut [f64]) {
        let zs: Vec<f64> = z
            .iter()
            .zip(&self.hyper.lengthscales)
            .map(|(v, l)| v / l)
            .collect();
        let s2 = self.hyper.signal_variance;
        for (i, o) in out.iter_mut().enumerate() {
            *o = s2
                * self
                    .kernel
                    .correlation(sq_dist(&zs, &self.scaled[i * self.dim..(i + 1) * self.dim]));
        }
    }

    /// Posterior mean and variance at `z`.
    pub fn posterior(&self, z: &[f64]) -> (f64, f64) {
        assert_eq!(z.len(), self.dim, "query dimension");
        let mut kbar = DVector::zeros(self.inputs.len());
        self.cross_covariances(z, kbar.as_mut_slice());
        let mean = kbar.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kbar)
            .expect("Cholesky factor has a positive diagonal");
        let var = (self.hyper.signal_variance - v.norm_squared()).max(0.0);
        (mean, var)
    }

    /// Cross-covariances `k(x_i, z_j)` as an `n x m` matrix.
    fn cross_matrix(&self, zs: &[Vec<f64>]) -> DMatrix<f64> {
        let (n, d, m) = (self.inputs.len(), self.dim, zs.len());
        let x = DMatrix::from_row_slice(n, d, &self.scaled);
        let z = DMatrix::from_fn(d, m, |k, j| {
            assert_eq!(zs[j].len(), d, "query dimension");
            zs[j][k] / self.hyper.lengthscales[k]
        });
        let x_norms: Vec<f64> = x.row_iter().map(|r| r.norm_squared()).collect();
        let z_norms: Vec<f64> = z.column_iter().map(|c| c.norm_squared()).collect();
        let mut kq = &x * &z;
        let s2 = self.hyper.signal_variance;
        for j in 0..m {
            for (i, v) in kq.column_mut(j).iter_mut().enumerate() {
                let r2 = (x_norms[i] + z_norms[j] - 2.0 * *v).max(0.0);
                *v = s2 * self.kernel.correlation(r2);
            }
        }
        kq
    }

    /// Posterior means and variances at many points. Uses the explicit inverse
    /// of the Cholesky factor so the bulk of the work is one matrix product.
    pub fn posterior_batch(&self, zs: &[Vec<f64>]) -> Vec<(f64, f64)> {
        if zs.is_empty() {
            return Vec::new();
        }
        let kq = self.cross_matrix(zs);
        let means = kq.tr_mul(&self.alpha);
        let l_inv = self
            .l_inv
            .get_or_init(|| lower_inverse(self.chol.l_dirty()));
        let v = l_inv * &kq;
        let s2 = self.hyper.signal_variance;
        v.column_iter()
            .zip(means.iter())
            .map(|(c, &mu)| (mu, (s2 - c.norm_squared()).max(0.0)))
            .collect()
    }
}
