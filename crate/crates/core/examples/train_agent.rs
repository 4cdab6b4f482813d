//! Trains the microstimuli agent on the discrimination task, once with the
//! true interval and once with the sensor-based estimate, and prints the
//! learning milestones and the psychometric curve.
//!
//!     cargo run --release --example train_agent -- [episodes] [seed]

use tempus::environment::TaskConfig;
use tempus::experiment::{analysis_window, psychometric, run_experiment, td_error_trajectory, RunConfig};

fn main() -> tempus::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    for oracle_tau in [true, false] {
        let cfg = RunConfig {
            episodes,
            oracle_tau,
            master_seed: seed,
            task: TaskConfig { max_interval_steps: 8, boundary_steps: 4, ..TaskConfig::default() },
            ..RunConfig::default()
        };
        let (logs, summary) = run_experiment(&cfg)?;
        println!("== {} tau ==", if oracle_tau { "oracle" } else { "estimated" });
        println!("mean points          {:.3}", summary.mean_points);
        println!("converged at episode {:?}", summary.convergence_episode);
        println!(
            "misclassified        {} (median {:?} s)",
            summary.total_misclassifications, summary.median_misclassified_duration
        );
        if let Some(fit) = summary.fitted_sensor_model {
            println!("fitted sensor model  lambda={:.3} sigma={:.3}", fit.lambda, fit.sigma);
        }

        let td = td_error_trajectory(&logs, 100);
        let at = |i: usize| td[i.min(td.len() - 1)].1;
        println!("mean |delta|         {:.4} -> {:.4}", at(99), at(td.len() - 1));

        if let Some(curve) = psychometric(analysis_window(&logs, cfg.analysis_epsilon), cfg.task.dt) {
            println!("duration  p_long  n");
            for b in &curve.bins {
                println!("{:>7.1}  {:>6.3}  {}", b.duration_s, b.p_long, b.count);
            }
        }
    }
    Ok(())
}
