//! Command implementations. Each returns the exit code on success paths
//! (0, or 3 for a fit that stopped before converging).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::environment::Action;
use crate::error::{Error, Result};
use crate::experiment::{
    analysis_window, psychometric, run_experiment, td_error_trajectory, tau_accuracy_sweep, EpisodeLog, RunConfig,
    SweepConfig,
};
use crate::ou_process::{sample_paths, OUHyperparams, SampleTimes};
use crate::time_estimator::{estimate_tau, fit_hyperparams, TauGrid};

use super::config::{load_run_config, representation_from_name};
use super::format::{fixed, fixed_opt, to_json};
use super::sensor_csv::{csv_io, read_sensor_csv, write_sensor_csv};
use super::{EstimateArgs, FitArgs, GenArgs, SweepArgs, TrainArgs, EXIT_NOT_CONVERGED, EXIT_OK};

/// `start:stop:step` or `a,b,c`.
pub fn parse_grid(spec: &str) -> Result<TauGrid> {
    let bad = |e: &dyn std::fmt::Display| Error::Config(format!("grid {spec:?}: {e}"));
    let numbers = |sep: char| -> Result<Vec<f64>> {
        spec.split(sep).map(|s| s.trim().parse::<f64>().map_err(|e| bad(&e))).collect()
    };
    if spec.contains(':') {
        match numbers(':')?.as_slice() {
            [start, stop, step] => TauGrid::regular(*start, *stop, *step).map_err(|e| bad(&e)),
            _ => Err(bad(&"expected start:stop:step")),
        }
    } else {
        TauGrid::new(numbers(',')?).map_err(|e| bad(&e))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<i32> {
    let params = OUHyperparams::new(args.lambda, args.sigma)?;
    if args.channels < 1 {
        return Err(Error::Config("channels must be >= 1".into()));
    }
    let n = (args.duration / args.dt).round();
    if !(n >= 2.0 && n.is_finite()) {
        return Err(Error::Config(format!("duration / dt must give at least 2 rows, got {n}")));
    }
    let times = SampleTimes::uniform(n as usize, args.dt)?;
    let batch = sample_paths(params, &times, args.channels, args.seed)?;
    write_sensor_csv(&args.out, &batch).map_err(|e| Error::Config(format!("cannot write {}: {e}", args.out.display())))?;
    Ok(EXIT_OK)
}

pub fn cmd_fit(args: &FitArgs) -> Result<i32> {
    let cfg = load_run_config(args.config.as_deref())?;
    let batch = read_sensor_csv(&args.input)?;
    let report = fit_hyperparams(&batch, &cfg.fit)?;
    let out = json!({
        "lambda": report.params.lambda,
        "sigma": report.params.sigma,
        "log_likelihood": report.log_likelihood,
        "iterations": report.iterations,
        "converged": report.converged,
    });
    emit(args.out.as_ref(), &to_json(&out))?;
    if report.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: fit stopped after {} iterations without converging", report.iterations);
        Ok(EXIT_NOT_CONVERGED)
    }
}

/// Reads `lambda` and `sigma` from a JSON object.
pub fn read_params_json(path: &Path) -> Result<OUHyperparams> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)?;
    let get = |k: &str| {
        v.get(k)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Config(format!("{}: missing numeric field {k:?}", path.display())))
    };
    OUHyperparams::new(get("lambda")?, get("sigma")?)
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<i32> {
    let params = read_params_json(&args.params)?;
    let grid = parse_grid(&args.grid)?;
    let batch = read_sensor_csv(&args.input)?;
    let est = estimate_tau(&batch, params, &grid)?;
    let profile: Vec<Value> = est
        .profile
        .iter()
        .map(|(tau, ll)| json!({"tau": tau, "log_likelihood": ll}))
        .collect();
    let out = json!({
        "tau_hat": est.tau_hat,
        "lambda": params.lambda,
        "sigma": params.sigma,
        "profile": profile,
    });
    emit(args.out.as_ref(), &to_json(&out))?;
    Ok(EXIT_OK)
}

fn resolve_train_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = load_run_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    if args.oracle_tau {
        cfg.oracle_tau = true;
    }
    if let Some(r) = args.representation {
        cfg.representation = representation_from_name(r.name(), args.horizon, cfg.task.max_interval_steps)?;
    } else if args.horizon.is_some() {
        return Err(Error::Config("--horizon needs --representation csc or tabular-history".into()));
    }
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

fn classification_name(a: Option<Action>) -> &'static str {
    match a {
        Some(Action::Short) => "short",
        Some(Action::Long) => "long",
        _ => "",
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

pub fn write_episodes_csv(path: &Path, logs: &[EpisodeLog]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "episode",
        "points",
        "true_steps",
        "true_seconds",
        "estimated_tau",
        "classification",
        "correct",
        "reward",
        "delta_at_reward",
        "epsilon_end",
    ])
    .map_err(csv_io)?;
    for l in logs {
        w.write_record([
            l.index.to_string(),
            l.points.to_string(),
            l.true_interval_steps.to_string(),
            fixed(l.true_seconds),
            fixed_opt(l.estimated_tau),
            classification_name(l.classification).to_string(),
            u8::from(l.correct).to_string(),
            fixed(l.final_reward()),
            fixed(l.delta_at_reward()),
            fixed(l.epsilon_end),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let cfg = resolve_train_config(args)?;
    let started = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    fs::create_dir_all(&args.out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", args.out.display())))?;

    let (logs, summary) = run_experiment(&cfg)?;
    let grid = cfg.grid()?;
    let window = analysis_window(&logs, cfg.analysis_epsilon);
    let mut files = Vec::new();

    write_episodes_csv(&args.out.join("episodes.csv"), &logs)?;
    files.push("episodes.csv");

    let mut summary_json = serde_json::to_value(&summary)?;
    summary_json["psychometric_window"] = json!({
        "rule": "episodes starting with epsilon below the threshold",
        "epsilon_threshold": cfg.analysis_epsilon,
        "start_episode": window.first().map(|l| l.index),
        "episodes": window.len(),
    });
    summary_json["tau_grid"] = json!({
        "first": grid.first(),
        "last": grid.last(),
        "len": grid.len(),
    });
    write_text(&args.out.join("summary.json"), &to_json(&summary_json))?;
    files.push("summary.json");

    let mut w = csv_writer(&args.out.join("psychometric.csv"))?;
    w.write_record(["duration_s", "p_long", "count"]).map_err(csv_io)?;
    if let Some(curve) = psychometric(window, cfg.task.dt) {
        for b in &curve.bins {
            w.write_record([fixed(b.duration_s), fixed(b.p_long), b.count.to_string()]).map_err(csv_io)?;
        }
    }
    w.flush()?;
    files.push("psychometric.csv");

    let mut w = csv_writer(&args.out.join("tderror.csv"))?;
    w.write_record(["episode", "mean_abs_delta"]).map_err(csv_io)?;
    for (episode, d) in td_error_trajectory(&logs, cfg.td_window) {
        w.write_record([episode.to_string(), fixed(d)]).map_err(csv_io)?;
    }
    w.flush()?;
    files.push("tderror.csv");

    files.push("manifest.json");
    let finished = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let manifest = json!({
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.master_seed,
        "config": serde_json::to_value(&cfg)?,
        "resolved_tau_grid": grid.candidates(),
        "started": started,
        "finished": finished,
        "files": files,
    });
    write_text(&args.out.join("manifest.json"), &to_json(&manifest))?;
    Ok(EXIT_OK)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let params = OUHyperparams::new(args.lambda, args.sigma)?;
    let grid = parse_grid(&args.grid)?;
    let taus: Vec<f64> = args
        .taus
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("taus: {e}"))))
        .collect::<Result<_>>()?;
    if taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Config("taus must be positive".into()));
    }
    if args.seeds < 1 || args.channels < 1 {
        return Err(Error::Config("seeds and channels must be >= 1".into()));
    }
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let cfg = SweepConfig { sample_spacing: args.dt, channels: args.channels, ..SweepConfig::new(params, grid) };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Error::Config(format!("jobs: {e}")))?;
    let rows = pool.install(|| tau_accuracy_sweep(&cfg, &taus, &seeds))?;

    let mut text = String::from("true_tau,mean_tau_hat,std_tau_hat,mean_abs_rel_error,n\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            fixed(r.true_tau),
            fixed(r.mean_tau_hat),
            fixed(r.std_tau_hat),
            fixed(r.mean_abs_rel_error),
            r.estimates.len()
        ));
    }
    emit(args.out.as_ref(), &text)?;
    Ok(EXIT_OK)
}
