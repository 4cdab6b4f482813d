//! Ornstein-Uhlenbeck Gaussian-process core.
//!
//! The covariance between two observations taken at times `t_i` and `t_j` is
//!
//! ```text
//! k(t_i, t_j) = exp(-lambda * |t_i - t_j|) + sigma^2 * [i == j]
//! ```
//!
//! i.e. a unit-variance OU process observed under white noise of standard
//! deviation `sigma`. Everything here works on dense matrices and goes
//! through a single Cholesky factorization per kernel, which is shared by
//! sampling, the log-density and the gradient.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First jitter tried after a plain factorization fails.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up with [`Error::Conditioning`].
pub const JITTER_MAX: f64 = 1e-4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Kernel hyperparameters: decay rate `lambda` (1/s) and observation-noise
/// standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUHyperparams {
    pub lambda: f64,
    pub sigma: f64,
}

impl OUHyperparams {
    pub fn new(lambda: f64, sigma: f64) -> Result<Self> {
        let params = Self { lambda, sigma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !self.sigma.is_finite() {
            return Err(Error::domain(format!(
                "hyperparameters must be finite (lambda={}, sigma={})",
                self.lambda, self.sigma
            )));
        }
        if self.lambda <= 0.0 {
            return Err(Error::domain(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.sigma < 0.0 {
            return Err(Error::domain(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Strictly increasing observation timestamps in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTimes(Vec<f64>);

impl SampleTimes {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::contract(format!(
                "need at least 2 sample times, got {}",
                times.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("sample times must be finite"));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::contract(format!(
                "sample times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self(times))
    }

    /// `n` samples starting at 0 with the given spacing.
    pub fn uniform(n: usize, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::domain(format!("spacing must be > 0, got {spacing}")));
        }
        Self::new((0..n).map(|i| i as f64 * spacing).collect())
    }

    /// `n` samples spread uniformly over `[0, duration]`.
    pub fn spanning(n: usize, duration: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::contract(format!("need at least 2 sample times, got {n}")));
        }
        Self::uniform(n, duration / (n - 1) as f64)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Total time covered, `t_N - t_1`.
    pub fn span(&self) -> f64 {
        self.0[self.0.len() - 1] - self.0[0]
    }
}

/// A factorized covariance matrix.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
}

impl KernelMatrix {
    /// Factorizes a symmetric matrix, escalating diagonal jitter from
    /// [`JITTER_START`] by factors of ten up to [`JITTER_MAX`] when the plain
    /// factorization fails.
    pub fn from_matrix(mut entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::contract(format!(
                "kernel must be a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("kernel matrix has non-finite entries"));
        }
        if let Some(chol) = Cholesky::new(entries.clone()) {
            return Ok(Self { entries, jitter: 0.0, chol });
        }
        let base = entries.diagonal();
        let mut jitter = JITTER_START;
        while jitter <= JITTER_MAX * (1.0 + 1e-9) {
            for i in 0..entries.nrows() {
                entries[(i, i)] = base[i] + jitter;
            }
            if let Some(chol) = Cholesky::new(entries.clone()) {
                return Ok(Self { entries, jitter, chol });
            }
            jitter *= 10.0;
        }
        Err(Error::Conditioning { jitter: jitter / 10.0 })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Diagonal stabilizer that was actually added (0 if none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Lower-triangular Cholesky factor `L` with `K = L L^T`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `K^{-1} y`.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(y)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `log det K`, from the diagonal of the factor.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..self.dim()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

/// `M` channels of `N` observations sharing one set of sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorBatch {
    channels: Vec<Vec<f64>>,
    times: SampleTimes,
}

impl SensorBatch {
    pub fn new(channels: Vec<Vec<f64>>, times: SampleTimes) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::contract("sensor batch needs at least one channel"));
        }
        if let Some((i, c)) = channels.iter().enumerate().find(|(_, c)| c.len() != times.len()) {
            return Err(Error::contract(format!(
                "channel {} has {} samples, expected {}",
                i + 1,
                c.len(),
                times.len()
            )));
        }
        Ok(Self { channels, times })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn times(&self) -> &SampleTimes {
        &self.times
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    /// Same observations, new timestamps (used when testing candidate
    /// interval lengths).
    pub fn with_times(&self, times: SampleTimes) -> Result<Self> {
        Self::new(self.channels.clone(), times)
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }
}

/// Dense OU covariance over `times`. Each off-diagonal value is computed once
/// and written to both triangles, so the result is exactly symmetric.
pub fn build_kernel(params: OUHyperparams, times: &SampleTimes) -> Result<KernelMatrix> {
    params.validate()?;
    let t = times.as_slice();
    let n = t.len();
    let noise = params.sigma * params.sigma;
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0 + noise;
        for j in 0..i {
            let v = (-params.lambda * (t[i] - t[j]).abs()).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    KernelMatrix::from_matrix(k)
}

/// Draws `m` independent channels from `N(0, K)` as `L z`.
pub fn sample_paths(params: OUHyperparams, times: &SampleTimes, m: usize, seed: u64) -> Result<SensorBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_paths_with_rng(params, times, m, &mut rng)
}

pub fn sample_paths_with_rng<R: Rng + ?Sized>(
    params: OUHyperparams,
    times: &SampleTimes,
    m: usize,
    rng: &mut R,
) -> Result<SensorBatch> {
    if m == 0 {
        return Err(Error::contract("channel count must be >= 1"));
    }
    let kernel = build_kernel(params, times)?;
    let l = kernel.factor();
    let n = times.len();
    let channels = (0..m)
        .map(|_| {
            let z = DVector::<f64>::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            (&l * z).iter().copied().collect()
        })
        .collect();
    SensorBatch::new(channels, times.clone())
}

/// Zero-mean Gaussian log-density `-1/2 y^T K^{-1} y - 1/2 log det(2 pi K)`.
pub fn log_likelihood(y: &[f64], kernel: &KernelMatrix) -> Result<f64> {
    let n = kernel.dim();
    if y.len() != n {
        return Err(Error::contract(format!(
            "observation length {} does not match kernel dimension {n}",
            y.len()
        )));
    }
    let y = DVector::from_column_slice(y);
    let alpha = kernel.solve(&y);
    Ok(-0.5 * y.dot(&alpha) - 0.5 * (kernel.log_det() + n as f64 * LN_2PI))
}

/// Sum of per-channel log-likelihoods under one kernel.
pub fn batch_log_likelihood(batch: &SensorBatch, kernel: &KernelMatrix) -> Result<f64> {
    // fixed channel order keeps the sum reproducible
    let mut total = 0.0;
    for c in batch.channels() {
        total += log_likelihood(c, kernel)?;
    }
    Ok(total)
}

/// Partial derivatives of the log marginal likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikGradient {
    pub d_lambda: f64,
    pub d_sigma: f64,
}

/// `d/dtheta log p(y | theta) = 1/2 tr((phi phi^T - K^{-1}) dK/dtheta)` with
/// `phi = K^{-1} y`.
pub fn loglik_gradient(y: &[f64], params: OUHyperparams, times: &SampleTimes) -> Result<LogLikGradient> {
    let batch = SensorBatch::new(vec![y.to_vec()], times.clone())?;
    batch_loglik_and_gradient(&batch, params).map(|(_, g)| g)
}

/// Summed log-likelihood and its gradient over all channels of a batch,
/// sharing one factorization.
pub fn batch_loglik_and_gradient(batch: &SensorBatch, params: OUHyperparams) -> Result<(f64, LogLikGradient)> {
    let times = batch.times();
    let kernel = build_kernel(params, times)?;
    let n = kernel.dim();
    let m = batch.n_channels() as f64;
    let k_inv = kernel.inverse();

    // W = sum_c phi_c phi_c^T - M K^{-1}
    let mut w = -m * &k_inv;
    let mut quad = 0.0;
    for c in batch.channels() {
        let y = DVector::from_column_slice(c);
        let phi = kernel.solve(&y);
        quad += y.dot(&phi);
        w.ger(1.0, &phi, &phi, 1.0);
    }
    let value = -0.5 * quad - 0.5 * m * (kernel.log_det() + n as f64 * LN_2PI);

    let t = times.as_slice();
    let mut d_lambda = 0.0;
    for i in 0..n {
        for j in 0..i {
            let dt = (t[i] - t[j]).abs();
            let dk = -dt * (-params.lambda * dt).exp();
            // W is symmetric; both triangles contribute
            d_lambda += w[(i, j)] * dk;
        }
    }
    let d_sigma = if params.sigma == 0.0 {
        0.0
    } else {
        params.sigma * w.trace()
    };
    Ok((value, LogLikGradient { d_lambda, d_sigma }))
}
