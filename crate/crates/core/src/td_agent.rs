//! Q-learning with linear function approximation and accumulating
//! eligibility traces, plus the tabular baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonSchedule {
    PerStep,
    PerEpisode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Trace decay; traces shrink by `gamma * eta` each step.
    pub eta: f64,
    pub epsilon0: f64,
    /// Multiplicative exploration decay.
    pub epsilon_decay: f64,
    /// One trace vector shared by all actions instead of one per action.
    pub shared_traces: bool,
    pub epsilon_schedule: EpsilonSchedule,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            gamma: 0.1,
            eta: 0.95,
            epsilon0: 0.3,
            epsilon_decay: 0.9995,
            shared_traces: false,
            epsilon_schedule: EpsilonSchedule::PerStep,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !unit(self.gamma) || !unit(self.eta) || !unit(self.epsilon0) {
            return Err(Error::domain("gamma, eta and epsilon0 must lie in [0, 1]"));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::domain(format!(
                "epsilon_decay must lie in (0, 1], got {}",
                self.epsilon_decay
            )));
        }
        Ok(())
    }
}

/// One weight vector per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QWeights {
    w: Vec<Vec<f64>>,
}

impl QWeights {
    pub fn zeros(n_actions: usize, dim: usize) -> Self {
        Self { w: vec![vec![0.0; dim]; n_actions] }
    }

    /// Independent uniform draws in `[0, 1]`.
    pub fn uniform<R: Rng + ?Sized>(n_actions: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            w: (0..n_actions)
                .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
                .collect(),
        }
    }

    pub fn from_rows(w: Vec<Vec<f64>>) -> Result<Self> {
        let dim = w.first().map_or(0, Vec::len);
        if w.is_empty() || w.iter().any(|r| r.len() != dim) {
            return Err(Error::contract("weight rows must be non-empty and equally sized"));
        }
        Ok(Self { w })
    }

    pub fn action(&self, a: usize) -> &[f64] {
        &self.w[a]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn n_actions(&self) -> usize {
        self.w.len()
    }

    pub fn dim(&self) -> usize {
        self.w[0].len()
    }
}

/// Per-(action, feature) traces, or a single shared row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityTraces {
    e: Vec<Vec<f64>>,
}

impl EligibilityTraces {
    pub fn zeros(n_actions: usize, dim: usize, shared: bool) -> Self {
        let rows = if shared { 1 } else { n_actions };
        Self { e: vec![vec![0.0; dim]; rows] }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.e
    }

    pub fn is_shared(&self) -> bool {
        self.e.len() == 1
    }

    pub fn reset(&mut self) {
        self.e.iter_mut().flatten().for_each(|v| *v = 0.0);
    }
}

pub fn q_value(w: &QWeights, x: &FeatureVector, a: usize) -> Result<f64> {
    if a >= w.n_actions() {
        return Err(Error::contract(format!("action {a} out of range")));
    }
    if x.len() != w.dim() {
        return Err(Error::contract(format!(
            "feature dimension {} does not match weights {}",
            x.len(),
            w.dim()
        )));
    }
    Ok(w.w[a].iter().zip(x.as_slice()).map(|(wi, xi)| wi * xi).sum())
}

pub fn q_values(w: &QWeights, x: &FeatureVector) -> Result<Vec<f64>> {
    (0..w.n_actions()).map(|a| q_value(w, x, a)).collect()
}

/// Index of the first maximal value.
pub fn greedy(qs: &[f64]) -> usize {
    let mut best = 0;
    for (i, q) in qs.iter().enumerate() {
        if *q > qs[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice. Always consumes one uniform draw, plus one more
/// when exploring, so the stream position depends only on the decisions.
pub fn select_action<R: Rng + ?Sized>(qs: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!(!qs.is_empty(), "no actions to choose from");
    let u: f64 = rng.random();
    if u < epsilon {
        rng.random_range(0..qs.len())
    } else {
        greedy(qs)
    }
}

pub fn td_error(reward: f64, gamma: f64, q_next_max: f64, q_cur: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { gamma * q_next_max };
    reward + bootstrap - q_cur
}

/// Decays all traces by `gamma * eta`, accumulates `x` into the taken
/// action's traces, then moves every action's weights along its traces.
pub fn update(
    w: &mut QWeights,
    e: &mut EligibilityTraces,
    x: &FeatureVector,
    a: usize,
    delta: f64,
    params: &AgentParams,
) -> Result<()> {
    if x.len() != w.dim() || e.e[0].len() != w.dim() {
        return Err(Error::contract("feature, trace and weight dimensions differ"));
    }
    if a >= w.n_actions() {
        return Err(Error::contract(format!("action {a} out of range")));
    }
    let decay = params.gamma * params.eta;
    for row in e.e.iter_mut() {
        row.iter_mut().for_each(|v| *v *= decay);
    }
    let taken = if e.is_shared() { 0 } else { a };
    for (ei, xi) in e.e[taken].iter_mut().zip(x.as_slice()) {
        *ei += xi;
    }
    if e.is_shared() {
        for (wi, ei) in w.w[a].iter_mut().zip(&e.e[0]) {
            *wi += params.alpha * delta * ei;
        }
    } else {
        for (wrow, erow) in w.w.iter_mut().zip(&e.e) {
            for (wi, ei) in wrow.iter_mut().zip(erow) {
                *wi += params.alpha * delta * ei;
            }
        }
    }
    Ok(())
}

pub fn decay_epsilon(epsilon: f64, params: &AgentParams) -> f64 {
    params.epsilon_decay * epsilon
}

/// `|S| x |A|` action-value table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    q: Vec<Vec<f64>>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { q: vec![vec![0.0; n_actions]; n_states] }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s][a]
    }

    pub fn n_states(&self) -> usize {
        self.q.len()
    }

    pub fn n_actions(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }
}

/// `Q(s,a) += alpha * (r + gamma * max_b Q(s',b) - Q(s,a))`; terminal
/// transitions bootstrap zero. Returns the TD error.
pub fn tabular_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    reward: f64,
    s_next: usize,
    terminal: bool,
    params: &AgentParams,
) -> Result<f64> {
    if s >= q.n_states() || s_next >= q.n_states() || a >= q.n_actions() {
        return Err(Error::contract(format!(
            "index out of range: s={s}, s'={s_next}, a={a} for a {}x{} table",
            q.n_states(),
            q.n_actions()
        )));
    }
    let next_max = q.q[s_next].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let delta = td_error(reward, params.gamma, next_max, q.q[s][a], terminal);
    q.q[s][a] += params.alpha * delta;
    Ok(delta)
}
