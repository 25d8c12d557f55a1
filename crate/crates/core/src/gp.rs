//! Gaussian-process surrogate over control points.
//!
//! Noise-free GP regression with a Matérn 5/2 kernel of unit amplitude and a
//! constant prior mean equal to the average of the current targets. All
//! posterior queries go through a Cholesky factor of `K + jitter * I`; no
//! explicit inverse is ever formed.

use crate::error::{check_dim, Error, Result};
use serde::{Deserialize, Serialize};

const SQRT_5: f64 = 2.236_067_977_499_79;

/// Number of times the jitter is doubled after a failed factorization.
pub const JITTER_RETRIES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub length_scale: f64,
    pub jitter: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            length_scale: 0.5,
            jitter: 1e-8,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::Input(format!(
                "length_scale must be positive, got {}",
                self.length_scale
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Input(format!(
                "jitter must be nonnegative, got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn matern52_unchecked(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    let s = SQRT_5 * euclidean(a, b) / length_scale;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Matérn 5/2 covariance between two points, using the Euclidean distance.
pub fn matern52(a: &[f64], b: &[f64], cfg: &KernelConfig) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    cfg.validate()?;
    Ok(matern52_unchecked(a, b, cfg.length_scale))
}

/// Observed points and their objective values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GpDataset {
    points: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl GpDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(points: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if points.len() != targets.len() {
            return Err(Error::Input(format!(
                "{} points but {} targets",
                points.len(),
                targets.len()
            )));
        }
        let mut ds = Self::new();
        for (p, t) in points.into_iter().zip(targets) {
            ds.push(p, t)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, point: Vec<f64>, target: f64) -> Result<()> {
        if let Some(first) = self.points.first() {
            check_dim(first.len(), point.len())?;
        }
        if !target.is_finite() || point.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("non-finite point or target".into()));
        }
        self.points.push(point);
        self.targets.push(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Index and value of the smallest target.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.targets
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// A fitted GP. Immutable after [`fit`]; posterior queries take `&self`.
#[derive(Debug, Clone)]
pub struct GpModel {
    dataset: GpDataset,
    kernel: KernelConfig,
    /// Row-major lower-triangular factor of `K + jitter * I`.
    factor: Vec<f64>,
    /// `(K + jitter I)^{-1} (V - M)`.
    weights: Vec<f64>,
    prior_mean: f64,
}

/// In-place Cholesky of a row-major symmetric matrix. On success the lower
/// triangle holds `L` and the strict upper triangle is zeroed.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::Factorization {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
        for k in (j + 1)..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L x = b` in place.
fn forward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let s: f64 = row.iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
        b[i] = (b[i] - s) / l[i * n + i];
    }
}

/// Solves `L^T x = b` in place.
fn backward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

pub fn kernel_matrix(points: &[Vec<f64>], length_scale: f64) -> Vec<f64> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = matern52_unchecked(&points[i], &points[j], length_scale);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Fits the GP, doubling the jitter up to [`JITTER_RETRIES`] times if the
/// factorization breaks down. A zero jitter is never inflated.
pub fn fit(dataset: GpDataset, cfg: KernelConfig) -> Result<GpModel> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Input("cannot fit a GP to an empty dataset".into()));
    }
    let n = dataset.len();
    let base = kernel_matrix(dataset.points(), cfg.length_scale);
    let mut jitter = cfg.jitter;
    let mut last_err = None;
    for _ in 0..=JITTER_RETRIES {
        let mut a = base.clone();
        for i in 0..n {
            a[i * n + i] += jitter;
        }
        match cholesky_in_place(&mut a, n) {
            Ok(()) => {
                let prior_mean = dataset.targets().iter().sum::<f64>() / n as f64;
                let mut weights: Vec<f64> =
                    dataset.targets().iter().map(|t| t - prior_mean).collect();
                forward_substitute(&a, n, &mut weights);
                backward_substitute(&a, n, &mut weights);
                return Ok(GpModel {
                    dataset,
                    kernel: KernelConfig { jitter, ..cfg },
                    factor: a,
                    weights,
                    prior_mean,
                });
            }
            Err(e) => last_err = Some(e),
        }
        if jitter == 0.0 {
            break;
        }
        jitter *= 2.0;
    }
    Err(last_err.expect("at least one attempt"))
}

impl GpModel {
    pub fn dataset(&self) -> &GpDataset {
        &self.dataset
    }

    /// Kernel settings actually used, including any inflated jitter.
    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim().unwrap_or(0)
    }

    /// Lower-triangular factor, row-major `n x n`.
    pub fn factor(&self) -> &[f64] {
        &self.factor
    }

    /// Posterior mean and variance before the variance is clamped at zero.
    pub fn predict_raw(&self, u: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.dim(), u.len())?;
        let n = self.dataset.len();
        let mut cross: Vec<f64> = self
            .dataset
            .points()
            .iter()
            .map(|p| matern52_unchecked(u, p, self.kernel.length_scale))
            .collect();
        let mean = self.prior_mean
            + cross
                .iter()
                .zip(&self.weights)
                .map(|(k, w)| k * w)
                .sum::<f64>();
        forward_substitute(&self.factor, n, &mut cross);
        let variance = 1.0 - cross.iter().map(|v| v * v).sum::<f64>();
        Ok((mean, variance))
    }

    pub fn posterior(&self, u: &[f64]) -> Result<Posterior> {
        let (mean, variance) = self.predict_raw(u)?;
        Ok(Posterior {
            mean,
            variance: variance.max(0.0),
        })
    }
}
