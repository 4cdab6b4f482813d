//! Temporal feature codes for the agent.
//!
//! Every event (tone, reward) leaves a memory trace whose height decays as
//! `h = exp(-(1 - xi) * age)`. A microstimulus is that height multiplied by a
//! Gaussian basis function of the height itself, with centers at `j / m` for
//! `j = 1..=m`. Early after onset the high-center microstimuli fire; as the
//! trace decays, activity moves to lower centers and spreads out, so the
//! block of `m` activations encodes elapsed time with decreasing precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1 / sqrt(2 pi)`, the peak of the basis function.
pub const BASIS_PEAK: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicrostimuliConfig {
    /// Microstimuli per event.
    pub m: usize,
    /// Basis width.
    pub beta: f64,
    /// Trace decay parameter in (0, 1).
    pub xi: f64,
    /// Events per episode.
    pub zeta: usize,
}

impl Default for MicrostimuliConfig {
    fn default() -> Self {
        Self { m: 6, beta: 0.1, xi: 0.9, zeta: 3 }
    }
}

impl MicrostimuliConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.zeta < 1 {
            return Err(Error::domain("m and zeta must be >= 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::domain(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::domain(format!("xi must lie in (0, 1), got {}", self.xi)));
        }
        Ok(())
    }

    /// Feature dimension `m * zeta`.
    pub fn dim(&self) -> usize {
        self.m * self.zeta
    }
}

/// A deployed event: its id selects the feature block, its age counts
/// timesteps since onset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: usize,
    pub age: u32,
}

/// Events deployed so far in the episode.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceState {
    events: Vec<Event>,
    clock: u32,
}

impl TraceState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn age_of(&self, id: usize) -> Option<u32> {
        self.events.iter().find(|e| e.id == id).map(|e| e.age)
    }

    pub fn is_deployed(&self, id: usize) -> bool {
        self.age_of(id).is_some()
    }

    /// Advances the clock and every event's age by one timestep.
    pub fn tick(&self) -> Self {
        Self {
            events: self.events.iter().map(|e| Event { id: e.id, age: e.age + 1 }).collect(),
            clock: self.clock + 1,
        }
    }

    /// Appends event `id` at age 0. `zeta` bounds both the id and the number
    /// of events.
    pub fn deploy_event(&self, id: usize, zeta: usize) -> Result<Self> {
        if id >= zeta {
            return Err(Error::contract(format!("event id {id} out of range for zeta={zeta}")));
        }
        if self.is_deployed(id) {
            return Err(Error::contract(format!("event {id} already deployed")));
        }
        if self.events.len() >= zeta {
            return Err(Error::contract(format!("all {zeta} event slots are in use")));
        }
        let mut next = self.clone();
        next.events.push(Event { id, age: 0 });
        Ok(next)
    }

    /// Replaces the age of a deployed event; later ticks count up from the
    /// new value.
    pub fn override_age(&self, id: usize, new_age: u32) -> Result<Self> {
        let mut next = self.clone();
        let event = next
            .events
            .iter_mut()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::contract(format!("event {id} is not deployed")))?;
        event.age = new_age;
        Ok(next)
    }
}

/// Activation vector fed to the linear value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn trace_height(age: u32, xi: f64) -> f64 {
    (-(1.0 - xi) * age as f64).exp()
}

pub fn basis(h: f64, center: f64, beta: f64) -> f64 {
    let d = h - center;
    BASIS_PEAK * (-d * d / (2.0 * beta * beta)).exp()
}

pub fn microstimuli_features(state: &TraceState, cfg: &MicrostimuliConfig) -> Result<FeatureVector> {
    if state.events.len() > cfg.zeta {
        return Err(Error::contract(format!(
            "{} events deployed but zeta={}",
            state.events.len(),
            cfg.zeta
        )));
    }
    let mut x = vec![0.0; cfg.dim()];
    for e in &state.events {
        if e.id >= cfg.zeta {
            return Err(Error::contract(format!("event id {} out of range", e.id)));
        }
        let h = trace_height(e.age, cfg.xi);
        let block = &mut x[e.id * cfg.m..(e.id + 1) * cfg.m];
        for (j, slot) in block.iter_mut().enumerate() {
            let center = (j + 1) as f64 / cfg.m as f64;
            *slot = h * basis(h, center, cfg.beta);
        }
    }
    Ok(FeatureVector(x))
}

/// Complete serial compound: event `id` at age `a < horizon` lights slot
/// `id * horizon + a`.
pub fn csc_features(state: &TraceState, zeta: usize, horizon: u32) -> Result<FeatureVector> {
    if horizon < 1 {
        return Err(Error::contract("csc horizon must be >= 1"));
    }
    let h = horizon as usize;
    let mut x = vec![0.0; zeta * h];
    for e in &state.events {
        if e.id >= zeta {
            return Err(Error::contract(format!("event id {} out of range", e.id)));
        }
        if e.age < horizon {
            x[e.id * h + e.age as usize] = 1.0;
        }
    }
    Ok(FeatureVector(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trace_height_values() {
        assert_eq!(trace_height(0, 0.9), 1.0);
        assert_relative_eq!(trace_height(10, 0.9), 0.367_879_441_171_442_3, epsilon = 1e-12);
        assert_relative_eq!(trace_height(20, 0.9), trace_height(10, 0.9).powi(2), epsilon = 1e-15);
    }

    #[test]
    fn basis_values() {
        assert_relative_eq!(basis(0.4, 0.4, 0.1), 0.398_942, epsilon = 1e-6);
        assert_relative_eq!(basis(0.5, 0.4, 0.1), BASIS_PEAK * (-0.5f64).exp(), epsilon = 1e-14);
        let expected = BASIS_PEAK * (-(5.0f64 / 6.0).powi(2) / 0.02).exp();
        assert_relative_eq!(basis(1.0, 1.0 / 6.0, 0.1), expected, epsilon = 1e-20);
    }

    #[test]
    fn empty_state_is_zero_vector() {
        let x = microstimuli_features(&TraceState::new(), &MicrostimuliConfig::default()).unwrap();
        assert_eq!(x.0, vec![0.0; 18]);
    }

    #[test]
    fn fresh_event_peaks_at_center_one() {
        let cfg = MicrostimuliConfig::default();
        let s = TraceState::new().deploy_event(0, 3).unwrap();
        let x = microstimuli_features(&s, &cfg).unwrap();
        assert_relative_eq!(x.0[5], BASIS_PEAK, epsilon = 1e-15);
        assert!(x.0[6..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn second_block_for_second_event() {
        let cfg = MicrostimuliConfig::default();
        let s = TraceState::new().deploy_event(1, 3).unwrap();
        let x = microstimuli_features(&s, &cfg).unwrap();
        assert!(x.0[..6].iter().all(|v| *v == 0.0));
        assert_relative_eq!(x.0[11], BASIS_PEAK, epsilon = 1e-15);
    }

    #[test]
    fn deploy_contracts() {
        let s = TraceState::new().deploy_event(0, 3).unwrap();
        assert_eq!(s.events(), &[Event { id: 0, age: 0 }]);
        assert!(matches!(s.deploy_event(0, 3), Err(Error::Contract(_))));
        let mut s = s;
        for _ in 0..7 {
            s = s.tick();
        }
        let s2 = s.deploy_event(1, 3).unwrap();
        assert_eq!(s2.age_of(0), Some(7));
        assert_eq!(s2.age_of(1), Some(0));
        let full = s2.deploy_event(2, 3).unwrap();
        assert!(full.deploy_event(3, 3).is_err());
        let two_slots = TraceState::new().deploy_event(0, 2).unwrap().deploy_event(1, 2).unwrap();
        assert!(two_slots.deploy_event(1, 2).is_err());
    }

    #[test]
    fn override_age_behaviour() {
        let cfg = MicrostimuliConfig::default();
        let s = TraceState::new().deploy_event(0, 3).unwrap().tick().tick().tick();
        assert_eq!(s.override_age(0, 3).unwrap(), s);

        let injected = s.override_age(0, 9).unwrap();
        let mut genuine = TraceState::new().deploy_event(0, 3).unwrap();
        for _ in 0..9 {
            genuine = genuine.tick();
        }
        assert_eq!(
            microstimuli_features(&injected, &cfg).unwrap(),
            microstimuli_features(&genuine, &cfg).unwrap()
        );

        let reset = s.override_age(0, 0).unwrap();
        let fresh = TraceState::new().deploy_event(0, 3).unwrap();
        assert_eq!(
            microstimuli_features(&reset, &cfg).unwrap(),
            microstimuli_features(&fresh, &cfg).unwrap()
        );
        assert_eq!(injected.tick().age_of(0), Some(10));
        assert!(matches!(s.override_age(2, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn csc_one_hot() {
        let s = TraceState::new().deploy_event(0, 3).unwrap();
        let x = csc_features(&s, 3, 4).unwrap();
        assert_eq!(x.0.iter().filter(|v| **v == 1.0).count(), 1);
        assert_eq!(x.0[0], 1.0);

        let old = s.override_age(0, 4).unwrap();
        assert!(csc_features(&old, 3, 4).unwrap().0.iter().all(|v| *v == 0.0));

        // event 0 aged 2 -> slot 0*4+2; event 1 aged 0 -> slot 1*4+0
        let two = s.tick().tick().deploy_event(1, 3).unwrap();
        let x = csc_features(&two, 3, 4).unwrap();
        let ones: Vec<usize> = x.0.iter().enumerate().filter(|(_, v)| **v == 1.0).map(|(i, _)| i).collect();
        assert_eq!(ones, vec![2, 4]);
        assert_eq!(x.len(), 12);
        assert!(csc_features(&s, 3, 0).is_err());
    }
}
