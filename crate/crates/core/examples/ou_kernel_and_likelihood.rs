//! Builds an OU kernel, draws sensor paths from it and scores them under a
//! few candidate models.

use tempus::ou_process::{
    batch_log_likelihood, batch_loglik_and_gradient, build_kernel, sample_paths, OUHyperparams, SampleTimes,
};

fn main() -> tempus::Result<()> {
    let truth = OUHyperparams::new(0.65, 0.45)?;
    let times = SampleTimes::uniform(50, 0.1)?;
    let batch = sample_paths(truth, &times, 15, 42)?;

    let k = build_kernel(truth, &times)?;
    println!("kernel {}x{}, jitter {:e}, log det {:.4}", k.dim(), k.dim(), k.jitter(), k.log_det());
    println!("K[0][0] = {:.4}, K[0][1] = {:.4}", k.entries()[(0, 0)], k.entries()[(0, 1)]);

    println!("{:>7} {:>7} {:>14} {:>12} {:>12}", "lambda", "sigma", "log-lik", "d/dlambda", "d/dsigma");
    for (lambda, sigma) in [(0.65, 0.45), (0.2, 0.45), (2.0, 0.45), (0.65, 0.1), (0.65, 1.0)] {
        let p = OUHyperparams::new(lambda, sigma)?;
        let ll = batch_log_likelihood(&batch, &build_kernel(p, &times)?)?;
        let (_, g) = batch_loglik_and_gradient(&batch, p)?;
        println!("{lambda:>7.2} {sigma:>7.2} {ll:>14.3} {:>12.3} {:>12.3}", g.d_lambda, g.d_sigma);
    }
    Ok(())
}
