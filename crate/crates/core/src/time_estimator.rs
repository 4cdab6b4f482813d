//! Hyperparameter fitting and maximum-likelihood interval estimation.
//!
//! Fitting maximizes the summed per-channel log marginal likelihood over
//! `(log lambda, log sigma)` by projected gradient ascent with backtracking.
//! Interval estimation keeps the observations fixed and asks, for each
//! candidate duration `tau`, how likely they are if the `N` samples had been
//! spread uniformly over `[0, tau]`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ou_process::{batch_log_likelihood, batch_loglik_and_gradient, build_kernel, OUHyperparams, SampleTimes, SensorBatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub init_lambda: f64,
    pub init_sigma: f64,
    pub max_iters: usize,
    /// Convergence threshold on the max-norm step in log-parameter space.
    pub step_tolerance: f64,
    /// Initial step size, applied to the per-observation mean gradient.
    pub learning_rate: f64,
    pub max_halvings: usize,
    pub lambda_bounds: (f64, f64),
    pub sigma_bounds: (f64, f64),
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            init_lambda: 0.5,
            init_sigma: 0.5,
            max_iters: 500,
            step_tolerance: 1e-4,
            learning_rate: 0.05,
            max_halvings: 20,
            lambda_bounds: (1e-3, 1e3),
            sigma_bounds: (1e-3, 1e2),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        OUHyperparams::new(self.init_lambda, self.init_sigma)?;
        if self.init_sigma <= 0.0 {
            return Err(Error::domain("init_sigma must be > 0 for log-parameter ascent"));
        }
        if self.max_iters < 1 {
            return Err(Error::domain("max_iters must be >= 1"));
        }
        if !(self.step_tolerance > 0.0 && self.learning_rate > 0.0) {
            return Err(Error::domain("step_tolerance and learning_rate must be > 0"));
        }
        for (name, (lo, hi)) in [("lambda", self.lambda_bounds), ("sigma", self.sigma_bounds)] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::domain(format!("{name} bounds must satisfy 0 < lo < hi < inf")));
            }
        }
        Ok(())
    }
}

/// Result of [`fit_hyperparams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub params: OUHyperparams,
    /// Summed log-likelihood at `params`.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Candidate interval durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauGrid(Vec<f64>);

impl TauGrid {
    pub fn new(candidates: Vec<f64>) -> Result<Self> {
        if candidates.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::domain("tau candidates must be finite and > 0"));
        }
        if candidates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::contract("tau candidates must be strictly increasing"));
        }
        Ok(Self(candidates))
    }

    /// Multiples of `step` lying in `[start, stop]`.
    pub fn regular(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && start > 0.0 && stop >= start) {
            return Err(Error::domain(format!("bad grid range {start}..{stop} step {step}")));
        }
        let first = (start / step - 1e-9).ceil() as usize;
        let last = (stop / step + 1e-9).floor() as usize;
        Self::new((first.max(1)..=last).map(|i| i as f64 * step).collect())
    }

    /// 0.5 s steps from 0.5 s to 1.5x the longest interval of interest.
    pub fn default_for(max_interval_seconds: f64) -> Result<Self> {
        Self::regular(0.5, (1.5 * max_interval_seconds).max(0.5), 0.5)
    }

    pub fn candidates(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<f64> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.0.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeEstimate {
    pub tau_hat: f64,
    /// `(candidate tau, summed log-likelihood)` in grid order.
    pub profile: Vec<(f64, f64)>,
}

fn to_log_space(p: OUHyperparams) -> [f64; 2] {
    [p.lambda.ln(), p.sigma.ln()]
}

fn from_log_space(u: [f64; 2]) -> OUHyperparams {
    OUHyperparams { lambda: u[0].exp(), sigma: u[1].exp() }
}

fn project(u: [f64; 2], cfg: &FitConfig) -> [f64; 2] {
    [
        u[0].clamp(cfg.lambda_bounds.0.ln(), cfg.lambda_bounds.1.ln()),
        u[1].clamp(cfg.sigma_bounds.0.ln(), cfg.sigma_bounds.1.ln()),
    ]
}

/// Objective and gradient with respect to the log parameters.
fn evaluate(batch: &SensorBatch, u: [f64; 2]) -> Result<(f64, [f64; 2])> {
    let p = from_log_space(u);
    let (f, g) = batch_loglik_and_gradient(batch, p)?;
    Ok((f, [g.d_lambda * p.lambda, g.d_sigma * p.sigma]))
}

/// Fits `(lambda, sigma)` to a batch of independent channels.
///
/// The ascent never returns a point worse than the (projected) start: trial
/// points that fail to factorize or do not improve the objective are
/// backtracked, and a step is only taken when it strictly improves.
pub fn fit_hyperparams(batch: &SensorBatch, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    let start = project(
        to_log_space(OUHyperparams { lambda: cfg.init_lambda, sigma: cfg.init_sigma }),
        cfg,
    );
    let (mut f, mut g) = evaluate(batch, start)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            message: format!("objective {f} at the initial point"),
            last_valid: from_log_space(start),
        });
    }
    let scale = 1.0 / (batch.n_channels() * batch.n_samples()) as f64;
    let mut u = start;
    let mut lr = cfg.learning_rate;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        iterations += 1;
        let mut step_lr = lr;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial = project([u[0] + step_lr * scale * g[0], u[1] + step_lr * scale * g[1]], cfg);
            if trial == u {
                break;
            }
            match evaluate(batch, trial) {
                Ok((f_new, _)) if f_new.is_nan() => {
                    return Err(Error::Numerical {
                        message: format!("objective became NaN at iteration {iterations}"),
                        last_valid: from_log_space(u),
                    });
                }
                Ok((f_new, g_new)) if f_new > f && g_new.iter().all(|v| v.is_finite()) => {
                    accepted = Some((trial, f_new, g_new));
                    break;
                }
                // worse, or not factorizable even with jitter: shrink
                _ => step_lr *= 0.5,
            }
        }
        let Some((trial, f_new, g_new)) = accepted else {
            converged = true;
            break;
        };
        let step = (trial[0] - u[0]).abs().max((trial[1] - u[1]).abs());
        u = trial;
        f = f_new;
        g = g_new;
        lr = step_lr * 2.0;
        if step < cfg.step_tolerance {
            converged = true;
            break;
        }
    }

    Ok(FitReport {
        params: from_log_space(u),
        log_likelihood: f,
        iterations,
        converged,
    })
}

/// Summed log-likelihood of the batch with its samples respaced uniformly
/// over `[0, tau]`.
pub fn interval_log_likelihood(batch: &SensorBatch, params: OUHyperparams, tau: f64) -> Result<f64> {
    let times = SampleTimes::spanning(batch.n_samples(), tau)?;
    let kernel = build_kernel(params, &times)?;
    batch_log_likelihood(batch, &kernel)
}

/// Maximum-likelihood elapsed time over a grid of candidates. Ties go to the
/// smallest candidate.
pub fn estimate_tau(batch: &SensorBatch, params: OUHyperparams, grid: &TauGrid) -> Result<TimeEstimate> {
    if grid.is_empty() {
        return Err(Error::contract("tau grid is empty"));
    }
    if batch.n_samples() < 2 {
        return Err(Error::contract("need at least 2 samples per channel"));
    }
    let profile = grid
        .candidates()
        .par_iter()
        .map(|&tau| interval_log_likelihood(batch, params, tau).map(|ll| (tau, ll)))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &(_, ll)) in profile.iter().enumerate() {
        if ll > profile[best].1 {
            best = i;
        }
    }
    Ok(TimeEstimate { tau_hat: profile[best].0, profile })
}

/// Uniformly random `k`-channel sub-batch; the kept channels retain their
/// original relative order.
pub fn subsample_channels(batch: &SensorBatch, k: usize, seed: u64) -> Result<SensorBatch> {
    let m = batch.n_channels();
    if k < 1 || k > m {
        return Err(Error::contract(format!("cannot pick {k} of {m} channels")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, m, k).into_vec();
    picked.sort_unstable();
    let channels = picked.into_iter().map(|i| batch.channel(i).to_vec()).collect();
    SensorBatch::new(channels, batch.times().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ou_process::sample_paths;

    fn params(l: f64, s: f64) -> OUHyperparams {
        OUHyperparams::new(l, s).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = TauGrid::default_for(20.0).unwrap();
        assert_eq!(g.first(), Some(0.5));
        assert_eq!(g.last(), Some(30.0));
        assert_eq!(g.len(), 60);
        assert!(TauGrid::new(vec![1.0, 1.0]).is_err());
        assert!(TauGrid::new(vec![0.0, 1.0]).is_err());
        assert_eq!(TauGrid::regular(0.15, 4.5, 0.15).unwrap().len(), 30);
    }

    #[test]
    fn singleton_grid_returns_its_candidate() {
        let b = sample_paths(params(0.65, 0.45), &SampleTimes::spanning(20, 4.0).unwrap(), 2, 1).unwrap();
        let est = estimate_tau(&b, params(0.65, 0.45), &TauGrid::new(vec![7.5]).unwrap()).unwrap();
        assert_eq!(est.tau_hat, 7.5);
        assert_eq!(est.profile.len(), 1);
    }

    #[test]
    fn empty_grid_is_a_contract_error() {
        let b = sample_paths(params(0.65, 0.45), &SampleTimes::spanning(4, 1.0).unwrap(), 1, 1).unwrap();
        let err = estimate_tau(&b, params(0.65, 0.45), &TauGrid::new(vec![]).unwrap());
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn ties_break_to_smallest_candidate() {
        // the reported estimate is the first grid point reaching the maximum
        let b = sample_paths(params(0.65, 0.45), &SampleTimes::spanning(10, 3.0).unwrap(), 3, 5).unwrap();
        let est = estimate_tau(&b, params(0.65, 0.45), &TauGrid::regular(0.5, 8.0, 0.5).unwrap()).unwrap();
        let max = est.profile.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let first_max = est.profile.iter().find(|p| p.1 == max).unwrap().0;
        assert_eq!(est.tau_hat, first_max);
    }

    #[test]
    fn subsample_edges() {
        let b = sample_paths(params(0.65, 0.45), &SampleTimes::spanning(5, 1.0).unwrap(), 6, 3).unwrap();
        assert_eq!(subsample_channels(&b, 6, 11).unwrap(), b);
        let one = subsample_channels(&b, 1, 11).unwrap();
        assert_eq!(one.n_channels(), 1);
        assert!(b.channels().contains(&one.channel(0).to_vec()));
        assert_eq!(subsample_channels(&b, 3, 4).unwrap(), subsample_channels(&b, 3, 4).unwrap());
        assert!(matches!(subsample_channels(&b, 0, 1), Err(Error::Contract(_))));
        assert!(matches!(subsample_channels(&b, 7, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_channels_terminate_at_lower_sigma_bound() {
        let times = SampleTimes::uniform(40, 0.1).unwrap();
        let b = SensorBatch::new(vec![vec![0.0; 40]; 3], times).unwrap();
        let cfg = FitConfig::default();
        let r = fit_hyperparams(&b, &cfg).unwrap();
        assert!(r.params.sigma < 0.05, "sigma {}", r.params.sigma);
        assert!(r.params.sigma >= cfg.sigma_bounds.0 * (1.0 - 1e-12));
        assert!(r.iterations <= cfg.max_iters);
    }

    #[test]
    fn fit_never_worse_than_start() {
        let p = params(1.2, 0.3);
        let b = sample_paths(p, &SampleTimes::uniform(60, 0.1).unwrap(), 4, 77).unwrap();
        let cfg = FitConfig::default();
        let start = batch_log_likelihood(&b, &build_kernel(params(cfg.init_lambda, cfg.init_sigma), b.times()).unwrap()).unwrap();
        let r = fit_hyperparams(&b, &cfg).unwrap();
        assert!(r.log_likelihood >= start);
        r.params.validate().unwrap();
    }

    #[test]
    fn invalid_fit_config() {
        let b = SensorBatch::new(vec![vec![0.1, 0.2, 0.3]], SampleTimes::uniform(3, 0.1).unwrap()).unwrap();
        let cfg = FitConfig { max_iters: 0, ..FitConfig::default() };
        assert!(fit_hyperparams(&b, &cfg).is_err());
    }
}
