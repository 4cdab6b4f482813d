//! Elapsed-time perception for a reinforcement-learning agent.
//!
//! Sensor readings are modeled as Ornstein-Uhlenbeck processes. The length
//! of an interval is recovered by maximizing the likelihood of the observed
//! readings over candidate durations, and the estimate is injected into a
//! microstimuli trace that feeds a TD(lambda) Q-learner on a
//! temporal-discrimination task.

pub mod cli;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod features;
pub mod ou_process;
pub mod td_agent;
pub mod time_estimator;

pub use error::{Error, Result};
