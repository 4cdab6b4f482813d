//! Estimates interval durations from sensor readings alone and prints the
//! accuracy table, then the likelihood profile of one case.

use tempus::experiment::{sweep_batch, tau_accuracy_sweep, SweepConfig};
use tempus::ou_process::OUHyperparams;
use tempus::time_estimator::{estimate_tau, TauGrid};

fn main() -> tempus::Result<()> {
    let params = OUHyperparams::new(0.65, 0.45)?;
    let cfg = SweepConfig::new(params, TauGrid::regular(0.5, 30.0, 0.5)?);
    let seeds: Vec<u64> = (0..20).collect();

    println!("{:>6} {:>10} {:>8} {:>9}", "tau", "mean est", "std", "rel err");
    for row in tau_accuracy_sweep(&cfg, &[5.0, 10.0, 15.0, 20.0], &seeds)? {
        println!(
            "{:>6.1} {:>10.2} {:>8.2} {:>9.3}",
            row.true_tau, row.mean_tau_hat, row.std_tau_hat, row.mean_abs_rel_error
        );
    }

    let batch = sweep_batch(&cfg, 10.0, 7)?;
    let est = estimate_tau(&batch, params, &cfg.grid)?;
    let best = est.profile.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    println!("\nprofile for a 10 s interval (estimate {:.1} s):", est.tau_hat);
    for (tau, ll) in est.profile.iter().step_by(4) {
        let bar = ((ll - best) / 5.0).max(-60.0) as i64;
        println!("{tau:>5.1} {:>10.1} {}", ll, "#".repeat((60 + bar) as usize));
    }
    Ok(())
}
