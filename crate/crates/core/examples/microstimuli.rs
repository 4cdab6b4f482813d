//! Prints the microstimuli of a single event as it ages, and how injecting
//! an age differs from letting the trace run.

use tempus::features::{microstimuli_features, trace_height, MicrostimuliConfig, TraceState};

fn main() -> tempus::Result<()> {
    let cfg = MicrostimuliConfig::default();
    let mut state = TraceState::new().deploy_event(0, cfg.zeta)?;
    println!("age  height   microstimuli (centers 1/6 .. 1)");
    for age in 0..=20 {
        let x = microstimuli_features(&state, &cfg)?;
        let block: Vec<String> = x.as_slice()[..cfg.m].iter().map(|v| format!("{v:.3}")).collect();
        println!("{age:>3}  {:.3}    {}", trace_height(age, cfg.xi), block.join(" "));
        state = state.tick();
    }

    let fresh = TraceState::new().deploy_event(0, cfg.zeta)?;
    let injected = fresh.override_age(0, 7)?.deploy_event(1, cfg.zeta)?;
    let x = microstimuli_features(&injected, &cfg)?;
    println!("\nfirst tone injected at age 7, second tone just heard:");
    for (event, block) in x.as_slice().chunks(cfg.m).enumerate() {
        let vals: Vec<String> = block.iter().map(|v| format!("{v:.3}")).collect();
        println!("  event {event}: {}", vals.join(" "));
    }
    Ok(())
}
