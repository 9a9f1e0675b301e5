//! Training loops for every agent kind and greedy evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::neural::{Adam, Network, NeuralError, Sample};

use super::replay::{Experience, ReplayBuffer};
use super::tabular::{tabular_update, Bootstrap, QTable};
use super::{
    greedy, next_epsilon, random_policy, select_action, AgentConfig, AgentError, AgentKind,
    Environment, Policy, TabularState,
};

/// Salt separating the network-initialisation stream from the episode stream.
const INIT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based episode number.
    pub episode: usize,
    /// Undiscounted sum of rewards.
    pub reward: f64,
    /// Exploration rate used during the episode.
    pub epsilon: f64,
    /// Mean training loss over the episode's updates, if any ran.
    pub loss: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub kind: AgentKind,
    pub policy: Policy,
    pub history: Vec<EpisodeRecord>,
    /// Training stopped early on a non-finite loss.
    pub diverged: bool,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_reward: f64,
    pub rewards: Vec<f64>,
}

/// Divides rewards before they reach a network so targets stay near unit
/// scale.
fn reward_scale(env: &Environment<'_>) -> f64 {
    let inst = env.instance();
    let max = inst
        .damaged_items()
        .map(|i| inst.benefit().frozen()[i])
        .fold(0.0, f64::max);
    if max > 0.0 {
        max
    } else {
        1.0
    }
}

/// Bootstrap targets from the target network: `r` for terminal samples,
/// else `r + gamma * max` over the next state's feasible actions.
pub fn ddqn_targets(target: &Network, batch: &[&Experience], gamma: f64) -> Result<Vec<f64>, NeuralError> {
    batch
        .iter()
        .map(|e| {
            if e.terminal || e.next_feasible.is_empty() {
                return Ok(e.reward);
            }
            let q = target.forward(&e.next_state)?;
            let best = e
                .next_feasible
                .iter()
                .map(|&a| q[a])
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(e.reward + gamma * best)
        })
        .collect()
}

struct Progress<'f> {
    history: Vec<EpisodeRecord>,
    sink: &'f mut dyn FnMut(&EpisodeRecord),
}

impl Progress<'_> {
    fn record(&mut self, reward: f64, epsilon: f64, losses: &[f64], steps: usize) {
        let rec = EpisodeRecord {
            episode: self.history.len() + 1,
            reward,
            epsilon,
            loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            steps,
        };
        (self.sink)(&rec);
        self.history.push(rec);
    }
}

/// Trains the configured agent; `progress` sees every finished episode.
pub fn train(
    env: &Environment<'_>,
    config: &AgentConfig,
    progress: &mut dyn FnMut(&EpisodeRecord),
) -> Result<TrainingRun, AgentError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut progress = Progress {
        history: Vec::with_capacity(config.episodes),
        sink: progress,
    };
    let (policy, diverged, updates) = match config.kind {
        AgentKind::Ddqn => train_ddqn(env, config, &mut rng, &mut progress)?,
        AgentKind::DeepSarsa => train_deep_sarsa(env, config, &mut rng, &mut progress)?,
        AgentKind::QLearning | AgentKind::Sarsa => {
            train_tabular(env, config, &mut rng, &mut progress)?
        }
        AgentKind::Random => train_random(env, config, &mut rng, &mut progress)?,
    };
    Ok(TrainingRun {
        kind: config.kind,
        policy,
        history: progress.history,
        diverged,
        updates,
    })
}

fn fresh_network(env: &Environment<'_>, config: &AgentConfig) -> Result<Network, AgentError> {
    Ok(Network::q_network(env.action_count(), config.seed ^ INIT_SALT)?)
}

fn train_ddqn(
    env: &Environment<'_>,
    config: &AgentConfig,
    rng: &mut ChaCha8Rng,
    progress: &mut Progress<'_>,
) -> Result<(Policy, bool, u64), AgentError> {
    let scale = reward_scale(env);
    let mut online = fresh_network(env, config)?;
    let mut target = online.clone();
    let mut opt = Adam::new(&online, config.learning_rate);
    let mut buffer = ReplayBuffer::new(config.replay_capacity);
    let warmup = config.warmup.unwrap_or(config.batch_size).max(config.batch_size);
    let mut epsilon = config.epsilon_start;
    let mut updates = 0u64;

    for _ in 0..config.episodes {
        let mut episode = env.reset(rng);
        let (mut total, mut steps, mut losses) = (0.0, 0, Vec::new());
        while !episode.is_done() {
            let state = env.encode(&episode);
            let q = online.forward(&state)?;
            let action = select_action(&q, episode.feasible(), epsilon, rng)?;
            let t = env.step(&mut episode, action)?;
            total += t.reward;
            steps += 1;
            buffer.push(Experience {
                state,
                action,
                reward: t.reward / scale,
                next_state: env.encode(&episode),
                terminal: t.terminal,
                next_feasible: episode.feasible().to_vec(),
            });
            if buffer.len() < warmup {
                continue;
            }
            let batch = buffer.sample(config.batch_size, rng).expect("warm buffer");
            let targets = ddqn_targets(&target, &batch, config.gamma)?;
            let samples: Vec<Sample> = batch
                .iter()
                .zip(targets)
                .map(|(e, y)| Sample {
                    input: e.state.to_vec(),
                    action: e.action,
                    target: y,
                })
                .collect();
            match online.train_step(&mut opt, &samples) {
                Ok(loss) => losses.push(loss),
                Err(NeuralError::NonFinite(_)) => {
                    progress.record(total, epsilon, &losses, steps);
                    return Ok((Policy::Network(online), true, updates));
                }
                Err(e) => return Err(e.into()),
            }
            updates += 1;
            if updates.is_multiple_of(config.target_sync as u64) {
                target.copy_from(&online)?;
            }
        }
        progress.record(total, epsilon, &losses, steps);
        epsilon = next_epsilon(epsilon, config);
    }
    Ok((Policy::Network(online), false, updates))
}

fn train_deep_sarsa(
    env: &Environment<'_>,
    config: &AgentConfig,
    rng: &mut ChaCha8Rng,
    progress: &mut Progress<'_>,
) -> Result<(Policy, bool, u64), AgentError> {
    let scale = reward_scale(env);
    let mut net = fresh_network(env, config)?;
    let mut opt = Adam::new(&net, config.learning_rate);
    let mut epsilon = config.epsilon_start;
    let mut updates = 0u64;

    for _ in 0..config.episodes {
        let mut episode = env.reset(rng);
        let (mut total, mut steps, mut losses) = (0.0, 0, Vec::new());
        let mut state = env.encode(&episode);
        let mut action = select_action(&net.forward(&state)?, episode.feasible(), epsilon, rng)?;
        loop {
            let t = env.step(&mut episode, action)?;
            total += t.reward;
            steps += 1;
            let next_state = env.encode(&episode);
            let (target, next_action) = if t.terminal {
                (t.reward / scale, None)
            } else {
                let q = net.forward(&next_state)?;
                let a = select_action(&q, episode.feasible(), epsilon, rng)?;
                (t.reward / scale + config.gamma * q[a], Some(a))
            };
            let sample = Sample {
                input: state.to_vec(),
                action,
                target,
            };
            match net.train_step(&mut opt, &[sample]) {
                Ok(loss) => losses.push(loss),
                Err(NeuralError::NonFinite(_)) => {
                    progress.record(total, epsilon, &losses, steps);
                    return Ok((Policy::Network(net), true, updates));
                }
                Err(e) => return Err(e.into()),
            }
            updates += 1;
            match next_action {
                Some(a) => {
                    action = a;
                    state = next_state;
                }
                None => break,
            }
        }
        progress.record(total, epsilon, &losses, steps);
        epsilon = next_epsilon(epsilon, config);
    }
    Ok((Policy::Network(net), false, updates))
}

fn train_tabular(
    env: &Environment<'_>,
    config: &AgentConfig,
    rng: &mut ChaCha8Rng,
    progress: &mut Progress<'_>,
) -> Result<(Policy, bool, u64), AgentError> {
    let mut table: QTable<TabularState> = QTable::new(env.action_count());
    let mut epsilon = config.epsilon_start;
    let mut updates = 0u64;
    let sarsa = config.kind == AgentKind::Sarsa;
    let lr = config.tabular_learning_rate;

    for _ in 0..config.episodes {
        let mut episode = env.reset(rng);
        let (mut total, mut steps) = (0.0, 0);
        let mut losses = Vec::new();
        let mut state = TabularState::of(env, &episode);
        let mut action = select_action(&table.row(&state), episode.feasible(), epsilon, rng)?;
        loop {
            let t = env.step(&mut episode, action)?;
            total += t.reward;
            steps += 1;
            let next = TabularState::of(env, &episode);
            let mut next_action = None;
            let bootstrap = if t.terminal {
                Bootstrap::Terminal
            } else if sarsa {
                let a = select_action(&table.row(&next), episode.feasible(), epsilon, rng)?;
                next_action = Some(a);
                Bootstrap::Action(a)
            } else {
                Bootstrap::Max(episode.feasible())
            };
            let td = tabular_update(&mut table, &state, action, t.reward, &next, bootstrap, lr, config.gamma);
            losses.push(td * td);
            updates += 1;
            if t.terminal {
                break;
            }
            action = match next_action {
                Some(a) => a,
                None => select_action(&table.row(&next), episode.feasible(), epsilon, rng)?,
            };
            state = next;
        }
        progress.record(total, epsilon, &losses, steps);
        epsilon = next_epsilon(epsilon, config);
    }
    Ok((Policy::Table(table), false, updates))
}

fn train_random(
    env: &Environment<'_>,
    config: &AgentConfig,
    rng: &mut ChaCha8Rng,
    progress: &mut Progress<'_>,
) -> Result<(Policy, bool, u64), AgentError> {
    for _ in 0..config.episodes {
        let (total, steps) = random_rollout(env, rng)?;
        progress.record(total, 1.0, &[], steps);
    }
    Ok((Policy::Random, false, 0))
}

fn random_rollout<R: Rng>(env: &Environment<'_>, rng: &mut R) -> Result<(f64, usize), AgentError> {
    let mut episode = env.reset(rng);
    let (mut total, mut steps) = (0.0, 0);
    while !episode.is_done() {
        let a = random_policy(episode.feasible(), rng)?;
        total += env.step(&mut episode, a)?.reward;
        steps += 1;
    }
    Ok((total, steps))
}

/// Mean episode reward of `policy` acting greedily (the random policy acts
/// uniformly) over seeded rollouts.
pub fn evaluate(
    policy: &Policy,
    env: &Environment<'_>,
    rollouts: usize,
    seed: u64,
) -> Result<Evaluation, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rewards = Vec::with_capacity(rollouts);
    for _ in 0..rollouts {
        let reward = match policy {
            Policy::Random => random_rollout(env, &mut rng)?.0,
            _ => {
                let mut episode = env.reset(&mut rng);
                let mut total = 0.0;
                while !episode.is_done() {
                    let q = policy.q_values(env, &episode)?.expect("valued policy");
                    let a = greedy(&q, episode.feasible());
                    total += env.step(&mut episode, a)?.reward;
                }
                total
            }
        };
        rewards.push(reward);
    }
    let mean_reward = if rewards.is_empty() {
        0.0
    } else {
        rewards.iter().sum::<f64>() / rewards.len() as f64
    };
    Ok(Evaluation {
        mean_reward,
        rewards,
    })
}
