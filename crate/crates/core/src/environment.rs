//! The temporal-discrimination task.
//!
//! Pressing Start plays a first tone; after a random number of Wait steps a
//! second tone sounds and the agent must press Short or Long depending on
//! whether the interval was at most `boundary_steps`. Between the tones the
//! environment streams sensor readings drawn from an OU process.
//!
//! | state    | Start | Wait          | Short  | Long   |
//! |----------|-------|---------------|--------|--------|
//! | Init     | Tone  | Init          | wrong  | wrong  |
//! | Tone     | wrong | Interval/Tone | N or Y | N or Y |
//! | Interval | wrong | Interval/Tone | wrong  | wrong  |
//!
//! Short/Long in the first Tone are wrong; in the second Tone they are
//! scored against the true interval.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ou_process::{sample_paths_with_rng, OUHyperparams, SampleTimes, SensorBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Start,
    Wait,
    Short,
    Long,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Start, Action::Wait, Action::Short, Action::Long];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Start => "start",
            Action::Wait => "wait",
            Action::Short => "short",
            Action::Long => "long",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Init,
    Tone,
    Interval,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    /// Seconds per timestep.
    pub dt: f64,
    pub max_interval_steps: u32,
    /// Intervals of at most this many steps are Short.
    pub boundary_steps: u32,
    pub reward_correct: f64,
    pub reward_wrong: f64,
    pub sensor_channels: usize,
    pub samples_per_step: usize,
    pub true_ou_params: OUHyperparams,
    pub max_episode_steps: u32,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            dt: 0.3,
            max_interval_steps: 10,
            boundary_steps: 5,
            reward_correct: 1.0,
            reward_wrong: -1.0,
            sensor_channels: 15,
            samples_per_step: 5,
            true_ou_params: OUHyperparams { lambda: 0.65, sigma: 0.45 },
            max_episode_steps: 40,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::domain(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(1 <= self.boundary_steps && self.boundary_steps < self.max_interval_steps) {
            return Err(Error::domain(format!(
                "need 1 <= boundary_steps ({}) < max_interval_steps ({})",
                self.boundary_steps, self.max_interval_steps
            )));
        }
        if !(self.reward_correct.is_finite() && self.reward_wrong.is_finite()) {
            return Err(Error::domain("rewards must be finite"));
        }
        if self.sensor_channels < 1 {
            return Err(Error::domain("sensor_channels must be >= 1"));
        }
        if self.samples_per_step < 2 {
            return Err(Error::domain("samples_per_step must be >= 2"));
        }
        // Start, max interval of waits, one choice
        if self.max_episode_steps < self.max_interval_steps + 2 {
            return Err(Error::domain(format!(
                "max_episode_steps must be >= max_interval_steps + 2 = {}",
                self.max_interval_steps + 2
            )));
        }
        self.true_ou_params.validate()
    }

    pub fn sample_spacing(&self) -> f64 {
        self.dt / self.samples_per_step as f64
    }

    pub fn max_interval_seconds(&self) -> f64 {
        self.max_interval_steps as f64 * self.dt
    }

    pub fn is_short(&self, interval_steps: u32) -> bool {
        interval_steps <= self.boundary_steps
    }

    pub fn correct_choice(&self, interval_steps: u32) -> Action {
        if self.is_short(interval_steps) {
            Action::Short
        } else {
            Action::Long
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub phase: Phase,
    pub steps_since_first_tone: Option<u32>,
    pub true_interval_steps: u32,
    pub tones_heard: u8,
    /// Actions taken so far in the episode.
    pub steps_taken: u32,
}

impl EnvState {
    pub fn initial(true_interval_steps: u32) -> Self {
        Self {
            phase: Phase::Init,
            steps_since_first_tone: None,
            true_interval_steps,
            tones_heard: 0,
            steps_taken: 0,
        }
    }

    fn terminal(&self) -> Self {
        Self {
            phase: Phase::Terminal,
            steps_since_first_tone: None,
            ..*self
        }
    }
}

/// Result of a pure table transition, without sensor data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// Per-channel samples emitted during one step (`M` rows, possibly empty).
pub type SensorSlice = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub sensor_slice: SensorSlice,
}

/// Fair coin for the category, then uniform within it.
pub fn sample_interval<R: Rng + ?Sized>(cfg: &TaskConfig, rng: &mut R) -> u32 {
    if rng.random_bool(0.5) {
        rng.random_range(1..=cfg.boundary_steps)
    } else {
        rng.random_range(cfg.boundary_steps + 1..=cfg.max_interval_steps)
    }
}

/// Initial state for an episode with a freshly drawn interval.
pub fn reset(cfg: &TaskConfig, seed: u64) -> EnvState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EnvState::initial(sample_interval(cfg, &mut rng))
}

/// The task table as a pure function of state and action.
pub fn transition(state: &EnvState, action: Action, cfg: &TaskConfig) -> Result<Transition> {
    if state.phase == Phase::Terminal {
        return Err(Error::contract("cannot act in a terminal state"));
    }
    let wrong = |s: &EnvState| Transition { next: s.terminal(), reward: cfg.reward_wrong, done: true };
    let mut s = *state;
    s.steps_taken += 1;

    let mut out = match (state.phase, action) {
        (Phase::Init, Action::Start) => {
            s.phase = Phase::Tone;
            s.tones_heard = 1;
            s.steps_since_first_tone = Some(0);
            Transition { next: s, reward: 0.0, done: false }
        }
        (Phase::Init, Action::Wait) => Transition { next: s, reward: 0.0, done: false },
        (Phase::Init, _) => wrong(&s),

        (Phase::Tone | Phase::Interval, Action::Wait) => {
            let count = state.steps_since_first_tone.unwrap_or(0) + 1;
            s.steps_since_first_tone = Some(count);
            if state.tones_heard == 1 {
                if count >= state.true_interval_steps {
                    s.phase = Phase::Tone;
                    s.tones_heard = 2;
                } else {
                    s.phase = Phase::Interval;
                }
            }
            Transition { next: s, reward: 0.0, done: false }
        }
        (Phase::Tone, Action::Short | Action::Long) if state.tones_heard == 2 => {
            let reward = if action == cfg.correct_choice(state.true_interval_steps) {
                cfg.reward_correct
            } else {
                cfg.reward_wrong
            };
            Transition { next: s.terminal(), reward, done: true }
        }
        (Phase::Tone | Phase::Interval, _) => wrong(&s),
        (Phase::Terminal, _) => unreachable!(),
    };

    if !out.done && out.next.steps_taken >= cfg.max_episode_steps {
        out = wrong(&out.next);
    }
    Ok(out)
}

/// A running episode: the table plus the sensor stream between the tones.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: TaskConfig,
    state: EnvState,
    rng: ChaCha8Rng,
    stream: Option<SensorBatch>,
    cursor: usize,
    emitted: Vec<Vec<f64>>,
}

impl Environment {
    /// Draws the interval from `seed`; the same generator then drives the
    /// sensor stream.
    pub fn reset(cfg: TaskConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = sample_interval(&cfg, &mut rng);
        Ok(Self::with_interval(cfg, k, rng))
    }

    /// Episode with a fixed interval, for scripted runs.
    pub fn with_fixed_interval(cfg: TaskConfig, interval_steps: u32, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if !(1..=cfg.max_interval_steps).contains(&interval_steps) {
            return Err(Error::contract(format!("interval {interval_steps} outside 1..={}", cfg.max_interval_steps)));
        }
        Ok(Self::with_interval(cfg, interval_steps, ChaCha8Rng::seed_from_u64(seed)))
    }

    fn with_interval(cfg: TaskConfig, k: u32, rng: ChaCha8Rng) -> Self {
        Self {
            emitted: vec![Vec::new(); cfg.sensor_channels],
            cfg,
            state: EnvState::initial(k),
            rng,
            stream: None,
            cursor: 0,
        }
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn config(&self) -> &TaskConfig {
        &self.cfg
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        let before = self.state;
        let t = transition(&before, action, &self.cfg)?;

        if before.phase == Phase::Init && t.next.tones_heard == 1 {
            // the whole interval path is drawn at the first tone so the
            // concatenated slices have exactly the OU covariance
            let n = self.cfg.samples_per_step * before.true_interval_steps as usize;
            let times = SampleTimes::uniform(n, self.cfg.sample_spacing())?;
            self.stream = Some(sample_paths_with_rng(
                self.cfg.true_ou_params,
                &times,
                self.cfg.sensor_channels,
                &mut self.rng,
            )?);
            self.cursor = 0;
        }

        let mut slice = Vec::new();
        let between_tones = before.tones_heard == 1 && action == Action::Wait && !t.done;
        if between_tones {
            if let Some(stream) = &self.stream {
                let end = self.cursor + self.cfg.samples_per_step;
                slice = stream.channels().iter().map(|c| c[self.cursor..end].to_vec()).collect();
                for (hist, new) in self.emitted.iter_mut().zip(&slice) {
                    hist.extend_from_slice(new);
                }
                self.cursor = end;
            }
        }

        self.state = t.next;
        Ok(StepOutcome {
            next_state: t.next,
            reward: t.reward,
            done: t.done,
            sensor_slice: slice,
        })
    }

    /// Everything streamed between the tones so far, as one batch with
    /// uniform spacing `dt / samples_per_step`.
    pub fn collect_interval_batch(&self) -> Result<SensorBatch> {
        if self.state.tones_heard == 0 && self.stream.is_none() {
            return Err(Error::contract("no tone heard yet; nothing to collect"));
        }
        collect_interval_batch(&self.emitted, self.cfg.sample_spacing())
    }
}

/// Joins per-channel sample histories into a batch.
pub fn collect_interval_batch(channels: &[Vec<f64>], spacing: f64) -> Result<SensorBatch> {
    let n = channels.first().map_or(0, Vec::len);
    let times = SampleTimes::uniform(n, spacing)?;
    SensorBatch::new(channels.to_vec(), times)
}

/// Episode score on the 0..=4 ladder, by replaying the actions through the
/// task table.
pub fn score_points(actions: &[Action], true_interval_steps: u32, cfg: &TaskConfig) -> u8 {
    let mut state = EnvState::initial(true_interval_steps);
    let mut points = 0;
    for &a in actions {
        let Ok(t) = transition(&state, a, cfg) else { break };
        if state.phase == Phase::Init && a == Action::Start {
            points = points.max(1);
        }
        if state.tones_heard >= 1 && a == Action::Wait && !t.done {
            points = points.max(2);
        }
        if t.next.tones_heard == 2 {
            points = points.max(3);
        }
        if t.done && t.reward == cfg.reward_correct && state.tones_heard == 2 {
            points = 4;
        }
        state = t.next;
        if t.done {
            break;
        }
    }
    points
}
