//! Recovers OU hyperparameters from 20 s of synthetic 15-channel data,
//! across a few seeds.

use tempus::ou_process::{sample_paths, OUHyperparams, SampleTimes};
use tempus::time_estimator::{fit_hyperparams, FitConfig};

fn main() -> tempus::Result<()> {
    let times = SampleTimes::uniform(200, 0.1)?;
    let cfg = FitConfig::default();
    for (lambda, sigma) in [(0.65, 0.45), (0.65, 0.2), (0.3, 0.45)] {
        let truth = OUHyperparams::new(lambda, sigma)?;
        println!("truth lambda={lambda} sigma={sigma}");
        for seed in 0..5 {
            let batch = sample_paths(truth, &times, 15, seed)?;
            let r = fit_hyperparams(&batch, &cfg)?;
            println!(
                "  seed {seed}: lambda={:.3} sigma={:.3} ll={:.1} ({} iterations{})",
                r.params.lambda,
                r.params.sigma,
                r.log_likelihood,
                r.iterations,
                if r.converged { "" } else { ", not converged" }
            );
        }
    }
    Ok(())
}
