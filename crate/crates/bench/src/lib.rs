//! Shared fixtures for the criterion benches.

use offsim::agent::{Architecture, Transition};
use offsim::{generate_synthetic, GeneratorParams, ScenarioTrace, State, SystemParams};

pub fn trace(n_frames: usize) -> ScenarioTrace {
    generate_synthetic(
        &GeneratorParams::default(),
        &SystemParams::default(),
        n_frames,
        17,
    )
    .expect("default generator parameters are valid")
}

/// Network shape used by the default training configuration.
pub fn default_architecture() -> Architecture {
    let train = offsim::TrainConfig::default();
    let params = SystemParams::default();
    train.architecture(GeneratorParams::default().k, &params)
}

pub fn transitions(trace: &ScenarioTrace, n: usize) -> Vec<Transition> {
    let frames = &trace.frames;
    (0..n)
        .map(|t| {
            let s = |k: usize| State {
                features: frames[k % frames.len()].features.clone(),
                phi_obs: 5.0 + (k % 7) as f64,
                q_obs: 10.0 + (k % 5) as f64,
            };
            Transition {
                state: s(t),
                action: t % 3,
                reward: -((t % 3) as f64),
                next_state: s(t + 1),
                terminal: false,
            }
        })
        .collect()
}
