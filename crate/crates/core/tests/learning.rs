use offsim::agent::{
    act, loss_and_gradient, train, train_observed, train_step, Architecture, Dense, Optimizer,
    QNetwork, TrainConfig, Transition,
};
use offsim::env::{EnvOptions, LinkSource, RewardParams};
use offsim::metrics::replay;
use offsim::policies::DrlPolicy;
use offsim::{generate_synthetic, Action, Env, GeneratorParams, State, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, k: usize) -> State {
    State {
        features: (0..k).map(|_| rng.random_range(-1.5..1.5)).collect(),
        phi_obs: rng.random_range(0.5..30.0),
        q_obs: rng.random_range(0.0..60.0),
    }
}

/// Central differences of the batch loss, one parameter at a time.
fn numeric_gradient(
    online: &QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    gamma: f64,
) -> Vec<f64> {
    let h = 1e-6;
    let base = online.parameters();
    let mut probe = online.clone();
    (0..base.len())
        .map(|j| {
            let mut p = base.clone();
            p[j] = base[j] + h;
            probe.set_parameters(&p);
            let up = loss_and_gradient(&probe, target, batch, gamma).unwrap().0;
            p[j] = base[j] - h;
            probe.set_parameters(&p);
            let down = loss_and_gradient(&probe, target, batch, gamma).unwrap().0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn backprop_matches_finite_differences_across_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    // (k, context hidden, embedding, state hidden, actions)
    type Shape = (usize, Vec<usize>, usize, Vec<usize>, usize);
    let shapes: [Shape; 4] = [
        (1, vec![], 1, vec![], 2),
        (3, vec![4], 2, vec![5], 3),
        (5, vec![6, 4], 3, vec![7, 3], 4),
        (2, vec![3], 1, vec![2, 2, 2], 2),
    ];
    for (k, context_hidden, embedding, state_hidden, n_actions) in shapes {
        let arch = Architecture {
            k,
            context_hidden,
            embedding,
            state_hidden,
            n_actions,
            phi_scale: 30.0,
            q_scale: 68.12,
        };
        let mut online = QNetwork::new(&arch, &mut rng);
        let jitter: Vec<f64> = online
            .parameters()
            .iter()
            .map(|w| w + rng.random_range(-0.1..0.1))
            .collect();
        online.set_parameters(&jitter);
        let target = QNetwork::new(&arch, &mut rng);
        let batch: Vec<Transition> = (0..6)
            .map(|t| Transition {
                state: random_state(&mut rng, k),
                action: rng.random_range(0..n_actions),
                reward: rng.random_range(-2.0..0.0),
                next_state: random_state(&mut rng, k),
                terminal: t % 3 == 0,
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, analytic) = loss_and_gradient(&online, &target, &refs, 0.9).unwrap();
        let numeric = numeric_gradient(&online, &target, &refs, 0.9);
        for (j, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {j}: backprop {a} vs numeric {n}");
        }
    }
}

#[test]
fn uniform_exploration_passes_chi_square() {
    let net = QNetwork::new(
        &Architecture::small(3, 3),
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    let state = State {
        features: vec![0.1, 0.2, 0.3],
        phi_obs: 5.0,
        q_obs: 15.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = [0usize; 3];
    let draws = 100_000;
    for _ in 0..draws {
        counts[act(&net, &state, 1.0, &mut rng).unwrap()] += 1;
    }
    let expected = draws as f64 / 3.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 2 degrees of freedom, 0.1% tail.
    assert!(chi2 < 13.82, "chi2 {chi2}, counts {counts:?}");
}

/// One-hot two-state bandit on a purely linear net, so the table of
/// immediate rewards is exactly representable.
#[test]
fn zero_discount_bandit_learns_immediate_rewards() {
    let rewards = [[0.0, -2.0, -1.0], [-2.0, -0.5, 0.0]];
    let ctx = Dense {
        inputs: 2,
        outputs: 2,
        weights: vec![1.0, 0.0, 0.0, 1.0],
        bias: vec![0.0; 2],
        relu: false,
    };
    let head = Dense {
        inputs: 4,
        outputs: 3,
        weights: vec![0.0; 12],
        bias: vec![0.0; 3],
        relu: false,
    };
    let mut online = QNetwork::from_layers(vec![ctx], vec![head], 30.0, 68.12).unwrap();
    let state = |s: usize| State {
        features: if s == 0 {
            vec![1.0, 0.0]
        } else {
            vec![0.0, 1.0]
        },
        phi_obs: 0.0,
        q_obs: 0.0,
    };
    let batch: Vec<Transition> = (0..2)
        .flat_map(|s| {
            (0..3).map(move |a| Transition {
                state: state(s),
                action: a,
                reward: rewards[s][a],
                next_state: state(1 - s),
                terminal: false,
            })
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    for _ in 0..3000 {
        let target = online.clone();
        train_step(&mut online, &target, &refs, 0.2, 0.0).unwrap();
    }
    for (s, expected) in rewards.iter().enumerate() {
        let q = online.forward(&state(s)).unwrap();
        for (a, (got, want)) in q.iter().zip(expected).enumerate() {
            assert!((got - want).abs() < 0.05, "state {s} action {a}: {got}");
        }
    }
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        episodes: 8,
        batch_size: 32,
        target_sync: 50,
        epsilon_decay_steps: 600,
        context_hidden: vec![8],
        embedding: 4,
        state_hidden: vec![16],
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn learns_the_only_rewarded_action() {
    // No frame is uncertain and the link always fits offload_3, so it is
    // the single action rewarded 0.
    let params = SystemParams {
        map_th: 0.0,
        ..Default::default()
    };
    let trace = generate_synthetic(&GeneratorParams::default(), &params, 150, 3).unwrap();
    let link = LinkSource::Fixed {
        phi_mbps: 1e4,
        delay_ms: 0.0,
    };
    let mut env = Env::new(
        &trace,
        &params,
        link,
        RewardParams::default(),
        EnvOptions::default(),
    )
    .unwrap();
    let trained = train(&mut env, &quick_config()).unwrap();
    let policy = DrlPolicy {
        net: &trained.network,
        params: &params,
    };
    let steps = replay(&policy, &mut env, 77).unwrap();
    let hits = steps
        .iter()
        .filter(|s| s.action == Action::offload(3))
        .count();
    assert!(
        hits as f64 >= 0.95 * steps.len() as f64,
        "{hits}/{}",
        steps.len()
    );
}

#[test]
fn target_changes_only_at_sync_steps() {
    let params = SystemParams::default();
    let trace = generate_synthetic(&GeneratorParams::default(), &params, 80, 4).unwrap();
    let link = LinkSource::Sampled {
        channel: offsim::ChannelModel::new(10.0, 0.1).unwrap(),
        queue: offsim::QueueModel::new(0.9, 4000, 1.5).unwrap(),
    };
    let mut env = Env::new(
        &trace,
        &params,
        link,
        RewardParams::default(),
        EnvOptions::default(),
    )
    .unwrap();
    let config = TrainConfig {
        episodes: 3,
        target_sync: 37,
        ..quick_config()
    };
    let mut last: Option<Vec<f64>> = None;
    let mut changed_at = Vec::new();
    let mut synced_equal = true;
    let trained = train_observed(&mut env, &config, |step, online, target| {
        let now = target.parameters();
        if last.as_ref().is_some_and(|prev| *prev != now) {
            changed_at.push(step);
        }
        if step % 37 == 0 {
            synced_equal &= online.parameters() == now;
        }
        last = Some(now);
    })
    .unwrap();
    assert!(synced_equal);
    assert!(!changed_at.is_empty());
    assert!(
        changed_at
            .iter()
            .all(|s| trained.log.sync_steps.contains(s)),
        "{changed_at:?}"
    );
    assert_eq!(
        trained.log.sync_steps,
        (1..=240 / 37).map(|k| k * 37).collect::<Vec<_>>()
    );
}

#[test]
fn same_seed_same_training_run() {
    let params = SystemParams::default();
    let trace = generate_synthetic(&GeneratorParams::default(), &params, 120, 8).unwrap();
    let link = LinkSource::Sampled {
        channel: offsim::ChannelModel::new(10.0, 0.1).unwrap(),
        queue: offsim::QueueModel::new(0.9, 4000, 1.5).unwrap(),
    };
    for optimizer in [Optimizer::Sgd, Optimizer::Adam] {
        let config = TrainConfig {
            optimizer,
            ..quick_config()
        };
        let run = || {
            let mut env = Env::new(
                &trace,
                &params,
                link,
                RewardParams::default(),
                EnvOptions::default(),
            )
            .unwrap();
            train(&mut env, &config).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log, b.log);
        assert_eq!(a.network, b.network);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.log.write_csv(&mut ca).unwrap();
        b.log.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }
}
