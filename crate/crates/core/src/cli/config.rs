//! Run configuration files: TOML whose keys are flattened to dotted paths
//! (`agent.alpha`, `task.dt`, ...). Sections and dotted keys are equivalent.
//! Unknown keys are rejected.

use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::experiment::{Representation, RunConfig};
use crate::ou_process::OUHyperparams;
use crate::td_agent::EpsilonSchedule;
use crate::time_estimator::TauGrid;

pub const KEYS: &[&str] = &[
    "episodes",
    "seed",
    "representation",
    "horizon",
    "oracle_tau",
    "calibration_seconds",
    "analysis_epsilon",
    "td_window",
    "convergence_window",
    "convergence_points",
    "agent.alpha",
    "agent.gamma",
    "agent.eta",
    "agent.epsilon0",
    "agent.epsilon_decay",
    "agent.shared_traces",
    "agent.epsilon_schedule",
    "features.m",
    "features.beta",
    "features.xi",
    "features.zeta",
    "task.dt",
    "task.max_interval_steps",
    "task.boundary_steps",
    "task.reward_correct",
    "task.reward_wrong",
    "task.sensor_channels",
    "task.samples_per_step",
    "task.max_episode_steps",
    "task.ou_lambda",
    "task.ou_sigma",
    "fit.init_lambda",
    "fit.init_sigma",
    "fit.max_iters",
    "fit.step_tolerance",
    "fit.learning_rate",
    "fit.max_halvings",
    "fit.lambda_min",
    "fit.lambda_max",
    "fit.sigma_min",
    "fit.sigma_max",
    "grid.start",
    "grid.stop",
    "grid.step",
];

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn float(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Config(format!("{key}: expected a number, got {v}"))),
    }
}

fn uint(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(Error::Config(format!("{key}: expected a non-negative integer, got {v}"))),
    }
}

fn small(key: &str, v: &Value) -> Result<u32> {
    u32::try_from(uint(key, v)?).map_err(|_| Error::Config(format!("{key}: value too large")))
}

fn flag(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| Error::Config(format!("{key}: expected true or false, got {v}")))
}

fn text<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::Config(format!("{key}: expected a string, got {v}")))
}

/// Builds a representation from its command-line name. The horizon of the
/// CSC and history-table variants defaults to the longest interval plus two
/// steps, enough to cover every age the first tone can reach.
pub fn representation_from_name(name: &str, horizon: Option<u32>, max_interval_steps: u32) -> Result<Representation> {
    let horizon = horizon.unwrap_or(max_interval_steps + 2);
    match name {
        "microstimuli" => Ok(Representation::Microstimuli),
        "csc" => Ok(Representation::Csc { horizon }),
        "tabular" => Ok(Representation::Tabular),
        "tabular-history" => Ok(Representation::TabularHistory { horizon }),
        other => Err(Error::Config(format!(
            "representation: unknown value {other:?} (expected microstimuli, csc, tabular or tabular-history)"
        ))),
    }
}

pub fn parse_run_config(source: &str) -> Result<RunConfig> {
    let table: Table = source.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut entries = Vec::new();
    flatten("", &table, &mut entries);

    let mut cfg = RunConfig::default();
    let mut repr = "microstimuli".to_string();
    let mut horizon = None;
    let (mut lambda, mut sigma) = (cfg.task.true_ou_params.lambda, cfg.task.true_ou_params.sigma);
    let mut grid = [None::<f64>; 3];

    for (key, v) in &entries {
        let k = key.as_str();
        match k {
            "episodes" => cfg.episodes = uint(k, v)? as usize,
            "seed" => cfg.master_seed = uint(k, v)?,
            "representation" => repr = text(k, v)?.to_string(),
            "horizon" => horizon = Some(small(k, v)?),
            "oracle_tau" => cfg.oracle_tau = flag(k, v)?,
            "calibration_seconds" => cfg.calibration_seconds = float(k, v)?,
            "analysis_epsilon" => cfg.analysis_epsilon = float(k, v)?,
            "td_window" => cfg.td_window = uint(k, v)? as usize,
            "convergence_window" => cfg.convergence_window = uint(k, v)? as usize,
            "convergence_points" => cfg.convergence_points = float(k, v)?,

            "agent.alpha" => cfg.agent.alpha = float(k, v)?,
            "agent.gamma" => cfg.agent.gamma = float(k, v)?,
            "agent.eta" => cfg.agent.eta = float(k, v)?,
            "agent.epsilon0" => cfg.agent.epsilon0 = float(k, v)?,
            "agent.epsilon_decay" => cfg.agent.epsilon_decay = float(k, v)?,
            "agent.shared_traces" => cfg.agent.shared_traces = flag(k, v)?,
            "agent.epsilon_schedule" => {
                cfg.agent.epsilon_schedule = match text(k, v)? {
                    "per-step" => EpsilonSchedule::PerStep,
                    "per-episode" => EpsilonSchedule::PerEpisode,
                    other => {
                        return Err(Error::Config(format!(
                            "{k}: unknown value {other:?} (expected per-step or per-episode)"
                        )))
                    }
                }
            }

            "features.m" => cfg.features.m = uint(k, v)? as usize,
            "features.beta" => cfg.features.beta = float(k, v)?,
            "features.xi" => cfg.features.xi = float(k, v)?,
            "features.zeta" => cfg.features.zeta = uint(k, v)? as usize,

            "task.dt" => cfg.task.dt = float(k, v)?,
            "task.max_interval_steps" => cfg.task.max_interval_steps = small(k, v)?,
            "task.boundary_steps" => cfg.task.boundary_steps = small(k, v)?,
            "task.reward_correct" => cfg.task.reward_correct = float(k, v)?,
            "task.reward_wrong" => cfg.task.reward_wrong = float(k, v)?,
            "task.sensor_channels" => cfg.task.sensor_channels = uint(k, v)? as usize,
            "task.samples_per_step" => cfg.task.samples_per_step = uint(k, v)? as usize,
            "task.max_episode_steps" => cfg.task.max_episode_steps = small(k, v)?,
            "task.ou_lambda" => lambda = float(k, v)?,
            "task.ou_sigma" => sigma = float(k, v)?,

            "fit.init_lambda" => cfg.fit.init_lambda = float(k, v)?,
            "fit.init_sigma" => cfg.fit.init_sigma = float(k, v)?,
            "fit.max_iters" => cfg.fit.max_iters = uint(k, v)? as usize,
            "fit.step_tolerance" => cfg.fit.step_tolerance = float(k, v)?,
            "fit.learning_rate" => cfg.fit.learning_rate = float(k, v)?,
            "fit.max_halvings" => cfg.fit.max_halvings = uint(k, v)? as usize,
            "fit.lambda_min" => cfg.fit.lambda_bounds.0 = float(k, v)?,
            "fit.lambda_max" => cfg.fit.lambda_bounds.1 = float(k, v)?,
            "fit.sigma_min" => cfg.fit.sigma_bounds.0 = float(k, v)?,
            "fit.sigma_max" => cfg.fit.sigma_bounds.1 = float(k, v)?,

            "grid.start" => grid[0] = Some(float(k, v)?),
            "grid.stop" => grid[1] = Some(float(k, v)?),
            "grid.step" => grid[2] = Some(float(k, v)?),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
    }

    cfg.task.true_ou_params =
        OUHyperparams::new(lambda, sigma).map_err(|e| Error::Config(format!("task.ou_*: {e}")))?;
    cfg.representation = representation_from_name(&repr, horizon, cfg.task.max_interval_steps)?;
    cfg.tau_grid = match grid {
        [None, None, None] => None,
        [Some(start), Some(stop), Some(step)] => {
            Some(TauGrid::regular(start, stop, step).map_err(|e| Error::Config(format!("grid: {e}")))?)
        }
        _ => return Err(Error::Config("grid.start, grid.stop and grid.step must be given together".into())),
    };
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

/// Reads a config file, or returns the defaults when no path is given.
pub fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let source = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_run_config(&source)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(parse_run_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_and_dotted_keys_agree() {
        let a = parse_run_config("[agent]\nalpha = 0.1\n[task]\ndt = 0.2\n").unwrap();
        let b = parse_run_config("agent.alpha = 0.1\ntask.dt = 0.2\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.agent.alpha, 0.1);
        assert_eq!(a.task.dt, 0.2);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = parse_run_config("agent.alpah = 0.1").unwrap_err();
        assert!(err.to_string().contains("agent.alpah"), "{err}");
        assert!(parse_run_config("[agent]\nbogus = 1").is_err());
    }

    #[test]
    fn representations() {
        let c = parse_run_config("representation = \"csc\"").unwrap();
        assert_eq!(c.representation, Representation::Csc { horizon: 12 });
        let c = parse_run_config("representation = \"tabular-history\"\nhorizon = 4").unwrap();
        assert_eq!(c.representation, Representation::TabularHistory { horizon: 4 });
        assert!(parse_run_config("representation = \"lstm\"").is_err());
    }

    #[test]
    fn grid_and_domain_checks() {
        let c = parse_run_config("grid.start = 0.5\ngrid.stop = 2.0\ngrid.step = 0.5").unwrap();
        assert_eq!(c.tau_grid.unwrap().candidates(), &[0.5, 1.0, 1.5, 2.0]);
        assert!(parse_run_config("grid.start = 0.5").is_err());
        assert!(parse_run_config("agent.alpha = 2.0").is_err());
        assert!(parse_run_config("task.ou_lambda = -1").is_err());
        assert!(parse_run_config("episodes = \"many\"").is_err());
        assert!(parse_run_config("agent.epsilon_schedule = \"per-episode\"").is_ok());
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let defaults = RunConfig::default();
        for key in KEYS {
            let value = match *key {
                "representation" => "\"microstimuli\"".to_string(),
                "agent.epsilon_schedule" => "\"per-step\"".to_string(),
                "oracle_tau" | "agent.shared_traces" => "false".to_string(),
                k if k.starts_with("grid.") => continue,
                "horizon" => "5".to_string(),
                "episodes" => "10".to_string(),
                "seed" => "3".to_string(),
                k => default_literal(&defaults, k),
            };
            parse_run_config(&format!("{key} = {value}")).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    fn default_literal(c: &RunConfig, key: &str) -> String {
        let v: f64 = match key {
            "calibration_seconds" => c.calibration_seconds,
            "analysis_epsilon" => c.analysis_epsilon,
            "td_window" => return c.td_window.to_string(),
            "convergence_window" => return c.convergence_window.to_string(),
            "convergence_points" => c.convergence_points,
            "agent.alpha" => c.agent.alpha,
            "agent.gamma" => c.agent.gamma,
            "agent.eta" => c.agent.eta,
            "agent.epsilon0" => c.agent.epsilon0,
            "agent.epsilon_decay" => c.agent.epsilon_decay,
            "features.m" => return c.features.m.to_string(),
            "features.beta" => c.features.beta,
            "features.xi" => c.features.xi,
            "features.zeta" => return c.features.zeta.to_string(),
            "task.dt" => c.task.dt,
            "task.max_interval_steps" => return c.task.max_interval_steps.to_string(),
            "task.boundary_steps" => return c.task.boundary_steps.to_string(),
            "task.reward_correct" => c.task.reward_correct,
            "task.reward_wrong" => c.task.reward_wrong,
            "task.sensor_channels" => return c.task.sensor_channels.to_string(),
            "task.samples_per_step" => return c.task.samples_per_step.to_string(),
            "task.max_episode_steps" => return c.task.max_episode_steps.to_string(),
            "task.ou_lambda" => c.task.true_ou_params.lambda,
            "task.ou_sigma" => c.task.true_ou_params.sigma,
            "fit.init_lambda" => c.fit.init_lambda,
            "fit.init_sigma" => c.fit.init_sigma,
            "fit.max_iters" => return c.fit.max_iters.to_string(),
            "fit.step_tolerance" => c.fit.step_tolerance,
            "fit.learning_rate" => c.fit.learning_rate,
            "fit.max_halvings" => return c.fit.max_halvings.to_string(),
            "fit.lambda_min" => c.fit.lambda_bounds.0,
            "fit.lambda_max" => c.fit.lambda_bounds.1,
            "fit.sigma_min" => c.fit.sigma_bounds.0,
            "fit.sigma_max" => c.fit.sigma_bounds.1,
            other => panic!("no default for {other}"),
        };
        format!("{v:?}")
    }
}
