use offsim::env::{EnvOptions, LinkSource, RewardParams};
use offsim::policies::{LocalPolicy, OraclePolicy, Policy, RAgnosticPolicy};
use offsim::{
    evaluate, generate_synthetic, Action, ChannelModel, GeneratorParams, QueueModel, SystemParams,
};

fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[test]
fn default_trace_scores_are_persistent_and_centred() {
    let trace = generate_synthetic(
        &GeneratorParams::default(),
        &SystemParams::default(),
        10_000,
        202,
    )
    .unwrap();
    let scores: Vec<f64> = trace.frames.iter().map(|f| f.map_full).collect();
    let r1 = lag1_autocorrelation(&scores);
    assert!(r1 >= 0.8, "lag-1 autocorrelation {r1}");
    let mean = trace.mean_map_full();
    assert!((0.55..=0.75).contains(&mean), "mean map_full {mean}");
}

#[test]
fn different_seeds_give_different_traces_with_a_shared_embedding() {
    let gen = GeneratorParams::default();
    let p = SystemParams::default();
    let a = generate_synthetic(&gen, &p, 500, 1).unwrap();
    let b = generate_synthetic(&gen, &p, 500, 2).unwrap();
    assert_ne!(a.frames, b.frames);
    assert_eq!(a, generate_synthetic(&gen, &p, 500, 1).unwrap());
}

#[test]
fn heavier_load_means_more_local_execution() {
    let mut params = SystemParams::default();
    let trace = generate_synthetic(&GeneratorParams::default(), &params, 3_000, 202).unwrap();
    params.map_th = trace.map_threshold_at(0.5);
    let policies: [&dyn Policy; 3] = [
        &LocalPolicy,
        &RAgnosticPolicy { params: &params },
        &OraclePolicy { params: &params },
    ];
    for pol in policies {
        let freqs: Vec<f64> = [0.9, 0.97, 0.99]
            .iter()
            .map(|&rho| {
                let link = LinkSource::Sampled {
                    channel: ChannelModel::new(10.0, 0.1).unwrap(),
                    queue: QueueModel::new(rho, 4000, 1.5).unwrap(),
                };
                evaluate(
                    pol,
                    &trace,
                    link,
                    &params,
                    RewardParams::default(),
                    EnvOptions::default(),
                    &[1, 2, 3],
                )
                .unwrap()
                .freq(Action::LOCAL)
            })
            .collect();
        assert!(
            freqs.windows(2).all(|w| w[1] >= w[0]),
            "{}: {freqs:?}",
            pol.name()
        );
        if pol.name() != "local" {
            assert!(
                freqs.windows(2).all(|w| w[1] > w[0]),
                "{}: {freqs:?}",
                pol.name()
            );
        }
    }
}
