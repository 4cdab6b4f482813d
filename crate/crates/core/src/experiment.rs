//! End-to-end runs: sensing, interval estimation, feature injection and TD
//! learning, episode after episode, plus the metrics computed from the logs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Action, EnvState, Environment, Phase, TaskConfig};
use crate::error::{Error, Result};
use crate::features::{csc_features, microstimuli_features, FeatureVector, MicrostimuliConfig, TraceState};
use crate::ou_process::{sample_paths, OUHyperparams, SampleTimes};
use crate::td_agent::{
    decay_epsilon, q_values, select_action, tabular_update, td_error, update, AgentParams, EligibilityTraces,
    EpsilonSchedule, QTable, QWeights,
};
use crate::time_estimator::{estimate_tau, fit_hyperparams, FitConfig, FitReport, TauGrid};

/// Feature-block ids of the three events in an episode.
pub const FIRST_TONE: usize = 0;
pub const SECOND_TONE: usize = 1;
pub const REWARD: usize = 2;

/// How the agent represents the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Representation {
    /// Linear Q over microstimuli.
    Microstimuli,
    /// Linear Q over a complete serial compound with the given horizon.
    Csc { horizon: u32 },
    /// Q-table over the task phase only (Init, Tone, Interval).
    Tabular,
    /// Q-table over (tones heard, perceived steps since the first tone).
    TabularHistory { horizon: u32 },
}

impl Representation {
    pub fn name(&self) -> &'static str {
        match self {
            Representation::Microstimuli => "microstimuli",
            Representation::Csc { .. } => "csc",
            Representation::Tabular => "tabular",
            Representation::TabularHistory { .. } => "tabular-history",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub episodes: usize,
    pub agent: AgentParams,
    pub representation: Representation,
    pub features: MicrostimuliConfig,
    pub task: TaskConfig,
    pub fit: FitConfig,
    /// `None` uses [`default_task_grid`].
    pub tau_grid: Option<TauGrid>,
    /// Length of the pre-run batch used to fit the sensor model.
    pub calibration_seconds: f64,
    /// Use the true interval instead of the sensor-based estimate.
    pub oracle_tau: bool,
    pub master_seed: u64,
    /// Psychometric analysis uses episodes starting with epsilon below this.
    pub analysis_epsilon: f64,
    pub td_window: usize,
    pub convergence_window: usize,
    pub convergence_points: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            episodes: 7000,
            agent: AgentParams::default(),
            representation: Representation::Microstimuli,
            features: MicrostimuliConfig::default(),
            task: TaskConfig::default(),
            fit: FitConfig::default(),
            tau_grid: None,
            calibration_seconds: 20.0,
            oracle_tau: false,
            master_seed: 0,
            analysis_epsilon: 0.01,
            td_window: 100,
            convergence_window: 100,
            convergence_points: 3.5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes < 1 {
            return Err(Error::domain("episodes must be >= 1"));
        }
        self.agent.validate()?;
        self.features.validate()?;
        self.task.validate()?;
        self.fit.validate()?;
        if self.features.zeta < 3 {
            return Err(Error::domain("the task deploys three events; zeta must be >= 3"));
        }
        if let Representation::Csc { horizon } | Representation::TabularHistory { horizon } = self.representation {
            if horizon < 1 {
                return Err(Error::domain("representation horizon must be >= 1"));
            }
        }
        if let Some(g) = &self.tau_grid {
            if g.is_empty() {
                return Err(Error::contract("tau grid is empty"));
            }
        }
        if !(self.calibration_seconds > 0.0) {
            return Err(Error::domain("calibration_seconds must be > 0"));
        }
        if self.td_window < 1 || self.convergence_window < 1 {
            return Err(Error::domain("analysis windows must be >= 1"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TauGrid> {
        match &self.tau_grid {
            Some(g) => Ok(g.clone()),
            None => default_task_grid(&self.task),
        }
    }
}

/// Half-timestep resolution from `dt/2` up to 1.5x the longest interval.
pub fn default_task_grid(task: &TaskConfig) -> Result<TauGrid> {
    let step = task.dt / 2.0;
    TauGrid::regular(step, 1.5 * task.max_interval_seconds(), step)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of episode `index` (1-based): `mix64(master + mix64(index))`.
pub fn episode_seed(master: u64, index: usize) -> u64 {
    mix64(master.wrapping_add(mix64(index as u64)))
}

const POLICY_STREAM: u64 = 0x706F_6C69_6379;
const WEIGHTS_STREAM: u64 = 0x7765_6967_6874;
const CALIBRATION_STREAM: u64 = 0x6361_6C69_6272;

fn stream_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ tag)
}

fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor().max(0.0) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Learner {
    Linear { weights: QWeights, traces: EligibilityTraces },
    Tabular { table: QTable },
}

/// Everything that persists across episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub learner: Learner,
    pub epsilon: f64,
    /// Sensor model used by the interval estimator.
    pub sensor_model: Option<OUHyperparams>,
}

impl AgentState {
    /// Fresh learner: linear weights uniform in [0, 1], tables at zero.
    pub fn new(cfg: &RunConfig, sensor_model: Option<OUHyperparams>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.master_seed, WEIGHTS_STREAM));
        let learner = match cfg.representation {
            Representation::Microstimuli | Representation::Csc { .. } => {
                let dim = feature_dim(cfg);
                Learner::Linear {
                    weights: QWeights::uniform(Action::COUNT, dim, &mut rng),
                    traces: EligibilityTraces::zeros(Action::COUNT, dim, cfg.agent.shared_traces),
                }
            }
            Representation::Tabular => Learner::Tabular { table: QTable::zeros(3, Action::COUNT) },
            Representation::TabularHistory { horizon } => Learner::Tabular {
                table: QTable::zeros(1 + 2 * (horizon as usize + 1), Action::COUNT),
            },
        };
        Self { learner, epsilon: cfg.agent.epsilon0, sensor_model }
    }
}

fn feature_dim(cfg: &RunConfig) -> usize {
    match cfg.representation {
        Representation::Csc { horizon } => cfg.features.zeta * horizon as usize,
        _ => cfg.features.dim(),
    }
}

fn features_of(cfg: &RunConfig, traces: &TraceState) -> Result<FeatureVector> {
    match cfg.representation {
        Representation::Csc { horizon } => csc_features(traces, cfg.features.zeta, horizon),
        _ => microstimuli_features(traces, &cfg.features),
    }
}

fn table_state(repr: Representation, env: &EnvState, traces: &TraceState) -> usize {
    match repr {
        Representation::TabularHistory { horizon } => {
            let age = traces.age_of(FIRST_TONE).unwrap_or(0).min(horizon) as usize;
            match env.tones_heard {
                0 => 0,
                1 => 1 + age,
                _ => 2 + horizon as usize + age,
            }
        }
        _ => match env.phase {
            Phase::Init | Phase::Terminal => 0,
            Phase::Tone => 1,
            Phase::Interval => 2,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// 1-based episode number.
    pub index: usize,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    /// One TD error per step.
    pub deltas: Vec<f64>,
    pub points: u8,
    pub true_interval_steps: u32,
    pub true_seconds: f64,
    /// Interval the agent used at the second tone, in seconds.
    pub estimated_tau: Option<f64>,
    /// Age injected into the first-tone trace at the second tone.
    pub perceived_steps: Option<u32>,
    /// Short or Long, when chosen after the second tone.
    pub classification: Option<Action>,
    pub correct: bool,
    /// Estimate sat on the upper edge of the grid.
    pub clamped: bool,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
}

impl EpisodeLog {
    pub fn final_reward(&self) -> f64 {
        self.rewards.last().copied().unwrap_or(0.0)
    }

    /// TD error of the step on which the episode ended (and the reward, if
    /// any, was delivered).
    pub fn delta_at_reward(&self) -> f64 {
        self.deltas.last().copied().unwrap_or(0.0)
    }
}

/// Perceives the second tone: estimates the interval and returns the
/// (possibly clamped) estimate, the injected age, and whether it clamped.
fn perceive_interval(
    cfg: &RunConfig,
    grid: &TauGrid,
    agent: &AgentState,
    env: &Environment,
) -> Result<(f64, u32, bool)> {
    let task = &cfg.task;
    let raw = if cfg.oracle_tau {
        env.state().true_interval_steps as f64 * task.dt
    } else {
        let model = agent
            .sensor_model
            .ok_or_else(|| Error::contract("estimated-tau run without a fitted sensor model"))?;
        let batch = env.collect_interval_batch()?;
        estimate_tau(&batch, model, grid)?.tau_hat
    };
    let (lo, hi) = (grid.first().unwrap_or(raw), grid.last().unwrap_or(raw));
    let clamped = !cfg.oracle_tau && raw >= hi;
    let tau = raw.clamp(lo.min(raw), hi);
    Ok((tau, round_half_up(tau / task.dt), clamped))
}

/// Runs one episode of the sensing-to-action loop, learning online.
pub fn run_episode(cfg: &RunConfig, grid: &TauGrid, agent: &mut AgentState, index: usize, seed: u64) -> Result<EpisodeLog> {
    let task = cfg.task;
    let zeta = cfg.features.zeta;
    let mut env = Environment::reset(task, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, POLICY_STREAM));
    if let Learner::Linear { traces, .. } = &mut agent.learner {
        traces.reset();
    }

    let mut trace_state = TraceState::new();
    let mut x = features_of(cfg, &trace_state)?;
    let epsilon_start = agent.epsilon;
    let mut log = EpisodeLog {
        index,
        actions: Vec::new(),
        rewards: Vec::new(),
        deltas: Vec::new(),
        points: 0,
        true_interval_steps: env.state().true_interval_steps,
        true_seconds: env.state().true_interval_steps as f64 * task.dt,
        estimated_tau: None,
        perceived_steps: None,
        classification: None,
        correct: false,
        clamped: false,
        epsilon_start,
        epsilon_end: epsilon_start,
    };

    loop {
        let before = *env.state();
        let s_table = table_state(cfg.representation, &before, &trace_state);
        let qs = match &agent.learner {
            Learner::Linear { weights, .. } => q_values(weights, &x)?,
            Learner::Tabular { table } => table.row(s_table).to_vec(),
        };
        let a = Action::from_index(select_action(&qs, agent.epsilon, &mut rng)).expect("action index in range");
        let out = env.step(a)?;

        if before.tones_heard == 2 && matches!(a, Action::Short | Action::Long) {
            log.classification = Some(a);
        }

        trace_state = trace_state.tick();
        if before.tones_heard == 0 && out.next_state.tones_heard == 1 {
            trace_state = trace_state.deploy_event(FIRST_TONE, zeta)?;
        }
        if before.tones_heard == 1 && out.next_state.tones_heard == 2 {
            let (tau, steps, clamped) = perceive_interval(cfg, grid, agent, &env)?;
            log.estimated_tau = Some(tau);
            log.perceived_steps = Some(steps);
            log.clamped = clamped;
            trace_state = trace_state.override_age(FIRST_TONE, steps)?.deploy_event(SECOND_TONE, zeta)?;
        }
        if out.reward != 0.0 && !trace_state.is_deployed(REWARD) {
            trace_state = trace_state.deploy_event(REWARD, zeta)?;
        }

        let x_next = features_of(cfg, &trace_state)?;
        let delta = match &mut agent.learner {
            Learner::Linear { weights, traces } => {
                let q_next_max = if out.done {
                    0.0
                } else {
                    q_values(weights, &x_next)?.into_iter().fold(f64::NEG_INFINITY, f64::max)
                };
                let delta = td_error(out.reward, cfg.agent.gamma, q_next_max, qs[a.index()], out.done);
                update(weights, traces, &x, a.index(), delta, &cfg.agent)?;
                delta
            }
            Learner::Tabular { table } => {
                let s_next = table_state(cfg.representation, &out.next_state, &trace_state);
                tabular_update(table, s_table, a.index(), out.reward, s_next, out.done, &cfg.agent)?
            }
        };

        if cfg.agent.epsilon_schedule == EpsilonSchedule::PerStep {
            agent.epsilon = decay_epsilon(agent.epsilon, &cfg.agent);
        }
        log.actions.push(a);
        log.rewards.push(out.reward);
        log.deltas.push(delta);
        if out.done {
            break;
        }
        x = x_next;
    }

    if cfg.agent.epsilon_schedule == EpsilonSchedule::PerEpisode {
        agent.epsilon = decay_epsilon(agent.epsilon, &cfg.agent);
    }
    log.epsilon_end = agent.epsilon;
    log.points = crate::environment::score_points(&log.actions, log.true_interval_steps, &task);
    log.correct = log.points == 4;
    Ok(log)
}

/// Fits the estimator's sensor model on a dedicated calibration batch drawn
/// from the environment's generator.
pub fn calibrate(cfg: &RunConfig) -> Result<FitReport> {
    let spacing = cfg.task.sample_spacing();
    let n = ((cfg.calibration_seconds / spacing).round() as usize).max(2);
    let times = SampleTimes::uniform(n, spacing)?;
    let batch = sample_paths(
        cfg.task.true_ou_params,
        &times,
        cfg.task.sensor_channels,
        stream_seed(cfg.master_seed, CALIBRATION_STREAM),
    )?;
    fit_hyperparams(&batch, &cfg.fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub episodes: usize,
    pub representation: String,
    pub oracle_tau: bool,
    pub master_seed: u64,
    pub mean_points: f64,
    /// Last episode of the first trailing window whose mean points reach the
    /// convergence threshold.
    pub convergence_episode: Option<usize>,
    pub total_misclassifications: usize,
    pub mean_misclassified_duration: Option<f64>,
    pub median_misclassified_duration: Option<f64>,
    pub clamped_estimates: usize,
    /// First episode that started with epsilon below the analysis threshold.
    pub analysis_start_episode: Option<usize>,
    pub fitted_sensor_model: Option<OUHyperparams>,
    pub fit_iterations: Option<usize>,
    pub fit_converged: Option<bool>,
}

pub fn run_experiment(cfg: &RunConfig) -> Result<(Vec<EpisodeLog>, RunSummary)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let fit = if cfg.oracle_tau { None } else { Some(calibrate(cfg)?) };
    let mut agent = AgentState::new(cfg, fit.map(|f| f.params));
    let mut logs = Vec::with_capacity(cfg.episodes);
    for index in 1..=cfg.episodes {
        let seed = episode_seed(cfg.master_seed, index);
        let log = run_episode(cfg, &grid, &mut agent, index, seed)
            .map_err(|e| Error::Episode { episode: index, source: Box::new(e) })?;
        logs.push(log);
    }
    let summary = summarize(cfg, &logs, fit.as_ref());
    Ok((logs, summary))
}

pub fn summarize(cfg: &RunConfig, logs: &[EpisodeLog], fit: Option<&FitReport>) -> RunSummary {
    let points: Vec<f64> = logs.iter().map(|l| l.points as f64).collect();
    let mut wrong: Vec<f64> = logs
        .iter()
        .filter(|l| l.classification.is_some() && !l.correct)
        .map(|l| l.true_seconds)
        .collect();
    wrong.sort_by(f64::total_cmp);
    RunSummary {
        episodes: logs.len(),
        representation: cfg.representation.name().to_string(),
        oracle_tau: cfg.oracle_tau,
        master_seed: cfg.master_seed,
        mean_points: mean(&points).unwrap_or(0.0),
        convergence_episode: convergence_episode(logs, cfg.convergence_window, cfg.convergence_points),
        total_misclassifications: wrong.len(),
        mean_misclassified_duration: mean(&wrong),
        median_misclassified_duration: median_sorted(&wrong),
        clamped_estimates: logs.iter().filter(|l| l.clamped).count(),
        analysis_start_episode: analysis_window(logs, cfg.analysis_epsilon).first().map(|l| l.index),
        fitted_sensor_model: fit.map(|f| f.params),
        fit_iterations: fit.map(|f| f.iterations),
        fit_converged: fit.map(|f| f.converged),
    }
}

/// Episode number closing the first trailing window with mean points at or
/// above `threshold`.
pub fn convergence_episode(logs: &[EpisodeLog], window: usize, threshold: f64) -> Option<usize> {
    if window == 0 || logs.len() < window {
        return None;
    }
    let mut sum: f64 = logs[..window].iter().map(|l| l.points as f64).sum();
    if sum / window as f64 >= threshold {
        return Some(logs[window - 1].index);
    }
    for i in window..logs.len() {
        sum += logs[i].points as f64 - logs[i - window].points as f64;
        if sum / window as f64 >= threshold {
            return Some(logs[i].index);
        }
    }
    None
}

/// Suffix of the run starting at the first episode whose starting epsilon is
/// below `threshold`.
pub fn analysis_window(logs: &[EpisodeLog], threshold: f64) -> &[EpisodeLog] {
    let start = logs.iter().position(|l| l.epsilon_start < threshold).unwrap_or(logs.len());
    &logs[start..]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsychometricBin {
    pub duration_s: f64,
    pub p_long: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsychometricCurve {
    pub bins: Vec<PsychometricBin>,
}

impl PsychometricCurve {
    /// Count-weighted isotonic (non-decreasing) fit of `p_long`.
    pub fn isotonic(&self) -> Vec<f64> {
        let values: Vec<f64> = self.bins.iter().map(|b| b.p_long).collect();
        let weights: Vec<f64> = self.bins.iter().map(|b| b.count as f64).collect();
        isotonic_fit(&values, &weights)
    }
}

/// Probability of a Long choice per true interval, over the episodes that
/// ended with a Short/Long choice after the second tone. `None` when there
/// are no such episodes.
pub fn psychometric(logs: &[EpisodeLog], dt: f64) -> Option<PsychometricCurve> {
    let mut counts: std::collections::BTreeMap<u32, (usize, usize)> = Default::default();
    for l in logs {
        if let Some(choice) = l.classification {
            let entry = counts.entry(l.true_interval_steps).or_default();
            entry.1 += 1;
            if choice == Action::Long {
                entry.0 += 1;
            }
        }
    }
    if counts.is_empty() {
        return None;
    }
    let bins = counts
        .into_iter()
        .map(|(steps, (long, total))| PsychometricBin {
            duration_s: steps as f64 * dt,
            p_long: long as f64 / total as f64,
            count: total,
        })
        .collect();
    Some(PsychometricCurve { bins })
}

/// Trailing moving average of `|delta|` at the final step of each episode.
pub fn td_error_trajectory(logs: &[EpisodeLog], window: usize) -> Vec<(usize, f64)> {
    let window = window.max(1);
    let abs: Vec<f64> = logs.iter().map(|l| l.delta_at_reward().abs()).collect();
    let mut out = Vec::with_capacity(abs.len());
    let mut sum = 0.0;
    for i in 0..abs.len() {
        sum += abs[i];
        if i >= window {
            sum -= abs[i - window];
        }
        let n = (i + 1).min(window);
        out.push((logs[i].index, sum / n as f64));
    }
    out
}

/// Settings for an interval-estimation accuracy sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Generator of the synthetic sensor data.
    pub generator: OUHyperparams,
    /// Model used by the estimator.
    pub estimator: OUHyperparams,
    pub sample_spacing: f64,
    pub channels: usize,
    pub grid: TauGrid,
}

impl SweepConfig {
    /// Appendix-style defaults: 0.1 s sampling, 15 channels, known model.
    pub fn new(params: OUHyperparams, grid: TauGrid) -> Self {
        Self {
            generator: params,
            estimator: params,
            sample_spacing: 0.1,
            channels: 15,
            grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub true_tau: f64,
    pub mean_tau_hat: f64,
    /// Sample standard deviation (zero for a single seed).
    pub std_tau_hat: f64,
    pub mean_abs_rel_error: f64,
    pub estimates: Vec<f64>,
}

/// Batch of `round(tau / spacing) + 1` samples spanning `[0, tau]`.
pub fn sweep_batch(cfg: &SweepConfig, tau: f64, seed: u64) -> Result<crate::ou_process::SensorBatch> {
    let n = ((tau / cfg.sample_spacing).round() as usize + 1).max(2);
    let times = SampleTimes::spanning(n, tau)?;
    sample_paths(cfg.generator, &times, cfg.channels, seed)
}

/// For every true interval and seed: generate a batch, estimate tau, then
/// aggregate. Cases run in parallel; results are reduced in input order.
pub fn tau_accuracy_sweep(cfg: &SweepConfig, true_intervals: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let cases: Vec<(usize, f64, u64)> = true_intervals
        .iter()
        .enumerate()
        .flat_map(|(i, &tau)| seeds.iter().map(move |&s| (i, tau, s)))
        .collect();
    let estimates = cases
        .par_iter()
        .map(|&(_, tau, seed)| {
            let batch = sweep_batch(cfg, tau, mix64(seed ^ tau.to_bits()))?;
            Ok(estimate_tau(&batch, cfg.estimator, &cfg.grid)?.tau_hat)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(true_intervals
        .iter()
        .enumerate()
        .map(|(i, &tau)| {
            let est: Vec<f64> = estimates[i * seeds.len()..(i + 1) * seeds.len()].to_vec();
            let rel: Vec<f64> = est.iter().map(|e| (e - tau).abs() / tau).collect();
            SweepRow {
                true_tau: tau,
                mean_tau_hat: mean(&est).unwrap_or(f64::NAN),
                std_tau_hat: sample_std(&est),
                mean_abs_rel_error: mean(&rel).unwrap_or(f64::NAN),
                estimates: est,
            }
        })
        .collect())
}

pub fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median_sorted(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// Pool-adjacent-violators fit of a non-decreasing sequence.
pub fn isotonic_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w.max(f64::MIN_POSITIVE), 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m2, w2, n2) = blocks.pop().unwrap();
            let (m1, w1, n1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, n1 + n2));
        }
    }
    blocks.into_iter().flat_map(|(m, _, n)| std::iter::repeat_n(m, n)).collect()
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = rank;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra).unwrap_or(0.0), mean(&rb).unwrap_or(0.0));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}
