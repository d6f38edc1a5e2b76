//! Double-DQN learning: TD targets, gradient steps, epsilon-greedy acting and
//! the episode loop.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{argmax, Architecture, ForwardCache, QNetwork};
use super::replay::{ReplayBuffer, Transition};
use crate::env::{Env, State};
use crate::error::{Error, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps between target-network syncs.
    pub target_sync: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub episodes: usize,
    pub seed: u64,
    pub context_hidden: Vec<usize>,
    pub embedding: usize,
    pub state_hidden: Vec<usize>,
    /// Channel capacity is divided by this before entering the network;
    /// delays are divided by the deadline.
    pub phi_max_mbps: f64,
    pub loss_ceiling: f64,
    pub divergence_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            lr: 1e-3,
            optimizer: Optimizer::Adam,
            batch_size: 64,
            buffer_capacity: 100_000,
            target_sync: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 50_000,
            episodes: 30,
            seed: 1,
            context_hidden: vec![32],
            embedding: 8,
            state_hidden: vec![64, 64],
            phi_max_mbps: 30.0,
            loss_ceiling: 1e6,
            divergence_patience: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!(
                "train.gamma must lie in [0, 1), got {}",
                self.gamma
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("train.lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || self.epsilon_end > self.epsilon_start
        {
            return bad(
                "train.epsilon_end must not exceed train.epsilon_start, both in [0, 1]".into(),
            );
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("target_sync", self.target_sync),
            ("epsilon_decay_steps", self.epsilon_decay_steps),
            ("episodes", self.episodes),
            ("embedding", self.embedding),
            ("divergence_patience", self.divergence_patience),
        ] {
            if v == 0 {
                return bad(format!("train.{name} must be positive"));
            }
        }
        if self.context_hidden.contains(&0) || self.state_hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if !(self.phi_max_mbps > 0.0) || !(self.loss_ceiling > 0.0) {
            return bad("train.phi_max_mbps and train.loss_ceiling must be positive".into());
        }
        Ok(())
    }

    pub fn epsilon_at(&self, step: usize) -> f64 {
        if step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn architecture(&self, k: usize, params: &SystemParams) -> Architecture {
        Architecture {
            k,
            context_hidden: self.context_hidden.clone(),
            embedding: self.embedding,
            state_hidden: self.state_hidden.clone(),
            n_actions: params.action_set.len(),
            phi_scale: self.phi_max_mbps,
            q_scale: params.l_th_ms,
        }
    }
}

/// `r` on terminal steps, otherwise `r + γ·Q_target(s', argmax_a Q_online(s', a))`.
pub fn ddqn_target(
    reward: f64,
    next_state: &State,
    online: &QNetwork,
    target: &QNetwork,
    gamma: f64,
    terminal: bool,
) -> Result<f64> {
    if terminal {
        return Ok(reward);
    }
    let pick = argmax(&online.forward(next_state)?);
    Ok(reward + gamma * target.forward(next_state)?[pick])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

/// Optimizer state carried across updates.
#[derive(Debug, Clone)]
pub enum Updater {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl Updater {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: Optimizer, n_params: usize) -> Self {
        match kind {
            Optimizer::Sgd => Updater::Sgd,
            Optimizer::Adam => Updater::Adam {
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                t: 0,
            },
        }
    }

    pub fn apply(&mut self, net: &mut QNetwork, grad: &[f64], lr: f64) {
        match self {
            Updater::Sgd => net.apply_gradient(grad, lr),
            Updater::Adam { m, v, t } => {
                *t = t.saturating_add(1);
                let c1 = 1.0 - Self::BETA1.powi(*t);
                let c2 = 1.0 - Self::BETA2.powi(*t);
                let step: Vec<f64> = grad
                    .iter()
                    .zip(m.iter_mut().zip(v.iter_mut()))
                    .map(|(&g, (m, v))| {
                        *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                        *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                        (*m / c1) / ((*v / c2).sqrt() + Self::EPS)
                    })
                    .collect();
                net.apply_gradient(&step, lr);
            }
        }
    }
}

/// One plain gradient-descent step on the mean squared TD error of the
/// taken actions. Returns the loss before the update.
pub fn train_step(
    online: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    lr: f64,
    gamma: f64,
) -> Result<f64> {
    update(online, target, batch, lr, gamma, &mut Updater::Sgd)
}

/// [`train_step`] with an arbitrary optimizer.
pub fn update(
    online: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    lr: f64,
    gamma: f64,
    updater: &mut Updater,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::domain("training batch is empty"));
    }
    let (loss, grad) = loss_and_gradient(online, target, batch, gamma)?;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("non-finite TD loss {loss}")));
    }
    updater.apply(online, &grad, lr);
    if !online.all_finite() {
        return Err(Error::Diverged("weights became non-finite".into()));
    }
    Ok(loss)
}

/// Mean squared TD error and its gradient with respect to the online
/// network's parameters; targets are held fixed.
pub fn loss_and_gradient(
    online: &QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; online.n_params()];
    let mut loss = 0.0;
    let mut cache = ForwardCache::default();
    let mut grad_out = vec![0.0; online.n_actions()];
    for t in batch {
        let y = ddqn_target(t.reward, &t.next_state, online, target, gamma, t.terminal)?;
        online.forward_cached(&t.state.features, online.link_inputs(&t.state), &mut cache)?;
        let td = cache.output[t.action] - y;
        loss += td * td / n;
        grad_out.iter_mut().for_each(|g| *g = 0.0);
        grad_out[t.action] = 2.0 * td / n;
        online.backward(&cache, &grad_out, &mut grad);
    }
    Ok((loss, grad))
}

/// Epsilon-greedy action index; greedy ties go to the lower index, which
/// is the action with fewer offloaded pipelines.
pub fn act<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &State,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..net.n_actions()));
    }
    Ok(argmax(&net.forward(state)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_reward: f64,
    /// `None` when no gradient step happened during the episode.
    pub mean_loss: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
    /// Environment steps at which the target network was synced.
    pub sync_steps: Vec<usize>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "mean_reward", "loss", "epsilon"])?;
        for e in &self.episodes {
            w.write_record([
                e.episode.to_string(),
                format!("{:.6}", e.mean_reward),
                e.mean_loss.map(|l| format!("{l:.6}")).unwrap_or_default(),
                format!("{:.6}", e.epsilon),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub struct Trained {
    pub network: QNetwork,
    pub log: TrainingLog,
}

/// Seed for the environment in episode `episode` of a run seeded with `seed`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    let mut z = seed
        ^ (episode as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn train(env: &mut Env<'_>, config: &TrainConfig) -> Result<Trained> {
    train_observed(env, config, |_, _, _| {})
}

/// [`train`], calling `observe(step, online, target)` after every
/// environment step (and its gradient update and any target sync).
pub fn train_observed<F>(env: &mut Env<'_>, config: &TrainConfig, mut observe: F) -> Result<Trained>
where
    F: FnMut(usize, &QNetwork, &QNetwork),
{
    config.validate()?;
    let arch = config.architecture(env.trace().k, env.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut online = QNetwork::new(&arch, &mut rng);
    let mut target = online.clone();
    let mut updater = Updater::new(config.optimizer, online.n_params());
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut log = TrainingLog::default();
    let actions = env.params().action_set.clone();

    let mut step = 0usize;
    let mut over_ceiling = 0usize;
    for episode in 0..config.episodes {
        let mut state = env.reset(episode_seed(config.seed, episode));
        let (mut reward_sum, mut loss_sum, mut n_steps, mut n_updates) = (0.0, 0.0, 0usize, 0usize);
        let mut epsilon = config.epsilon_at(step);
        while !env.is_done() {
            epsilon = config.epsilon_at(step);
            let a = act(&online, &state, epsilon, &mut rng)?;
            let result = env.step(actions[a])?;
            reward_sum += result.reward;
            n_steps += 1;
            buffer.push(Transition {
                state,
                action: a,
                reward: result.reward,
                next_state: result.next_state.clone(),
                terminal: result.done,
            });
            state = result.next_state;

            if let Some(batch) = buffer.sample(config.batch_size, &mut rng) {
                let loss = update(
                    &mut online,
                    &target,
                    &batch,
                    config.lr,
                    config.gamma,
                    &mut updater,
                )?;
                loss_sum += loss;
                n_updates += 1;
                over_ceiling = if loss > config.loss_ceiling {
                    over_ceiling + 1
                } else {
                    0
                };
                if over_ceiling >= config.divergence_patience {
                    return Err(Error::Diverged(format!(
                        "loss above {} for {} consecutive updates at step {step}",
                        config.loss_ceiling, config.divergence_patience
                    )));
                }
            }
            step += 1;
            if step.is_multiple_of(config.target_sync) {
                target = online.clone();
                log.sync_steps.push(step);
            }
            observe(step, &online, &target);
        }
        log.episodes.push(EpisodeLog {
            episode,
            mean_reward: reward_sum / n_steps.max(1) as f64,
            mean_loss: (n_updates > 0).then(|| loss_sum / n_updates as f64),
            epsilon,
        });
    }
    Ok(Trained {
        network: online,
        log,
    })
}
