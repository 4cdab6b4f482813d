//! Steps through the discrimination task by hand: a correct episode, a
//! premature choice, and the sensor batch collected between the tones.

use tempus::environment::{score_points, Action, Environment, TaskConfig};

fn play(cfg: TaskConfig, interval: u32, actions: &[Action]) -> tempus::Result<()> {
    let mut env = Environment::with_fixed_interval(cfg, interval, 1)?;
    for &a in actions {
        let out = env.step(a)?;
        println!(
            "  {:<5} -> {:?}, tones {}, reward {:+}{}",
            a.name(),
            out.next_state.phase,
            out.next_state.tones_heard,
            out.reward,
            if out.done { ", done" } else { "" }
        );
        if out.done {
            break;
        }
    }
    println!("  points: {}", score_points(actions, interval, &cfg));
    Ok(())
}

fn main() -> tempus::Result<()> {
    let cfg = TaskConfig::default();
    use Action::*;

    println!("3-step interval (short), correct play:");
    play(cfg, 3, &[Start, Wait, Wait, Wait, Short])?;

    println!("7-step interval (long), choosing before the second tone:");
    play(cfg, 7, &[Start, Wait, Long])?;

    let mut env = Environment::with_fixed_interval(cfg, 4, 9)?;
    for a in [Start, Wait, Wait, Wait, Wait] {
        env.step(a)?;
    }
    let batch = env.collect_interval_batch()?;
    println!(
        "sensor batch between tones: {} channels x {} samples, spacing {:.3} s",
        batch.n_channels(),
        batch.n_samples(),
        cfg.sample_spacing()
    );
    Ok(())
}
