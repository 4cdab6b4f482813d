//! Trains each state representation on the same task and seeds, using the
//! true interval, and compares how fast and how well they learn.

use tempus::environment::TaskConfig;
use tempus::experiment::{run_experiment, Representation, RunConfig};

fn main() -> tempus::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let task = TaskConfig { max_interval_steps: 8, boundary_steps: 4, ..TaskConfig::default() };
    let reprs = [
        Representation::Microstimuli,
        Representation::Csc { horizon: 10 },
        Representation::Tabular,
        Representation::TabularHistory { horizon: 10 },
    ];

    println!("{:<16} {:>6} {:>12} {:>10}", "representation", "seed", "converged", "points");
    for repr in reprs {
        for seed in 0..3 {
            let cfg = RunConfig { episodes, representation: repr, task, oracle_tau: true, master_seed: seed, ..RunConfig::default() };
            let (logs, summary) = run_experiment(&cfg)?;
            let tail = &logs[logs.len() * 9 / 10..];
            let late = tail.iter().map(|l| l.points as f64).sum::<f64>() / tail.len() as f64;
            let conv = summary.convergence_episode.map(|e| e.to_string()).unwrap_or_else(|| "-".into());
            println!("{:<16} {:>6} {:>12} {:>10.3}", repr.name(), seed, conv, late);
        }
    }
    Ok(())
}
