//! Reconstruction environment and the learning agents that act in it.

mod env;
mod replay;
mod tabular;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::FeasibilityRules;
use crate::metrics::{BenefitConfig, MetricsError};
use crate::neural::{Network, NeuralError};

pub use env::{EnvState, Environment, Episode, Transition};
pub use replay::{Experience, ReplayBuffer};
pub use tabular::{tabular_update, Bootstrap, QTable};
pub use train::{ddqn_targets, evaluate, train, EpisodeRecord, Evaluation, TrainingRun};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("nothing to plan: every item is intact")]
    NothingToPlan,
    #[error("action `{0}` is not feasible in this state")]
    InfeasibleAction(String),
    #[error("no feasible action to choose from")]
    NoFeasibleAction,
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "ddqn")]
    Ddqn,
    #[serde(rename = "qlearn")]
    QLearning,
    #[serde(rename = "sarsa")]
    Sarsa,
    #[serde(rename = "deep-sarsa")]
    DeepSarsa,
    #[serde(rename = "random")]
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::QLearning,
        AgentKind::Sarsa,
        AgentKind::DeepSarsa,
        AgentKind::Ddqn,
        AgentKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Ddqn => "ddqn",
            AgentKind::QLearning => "qlearn",
            AgentKind::Sarsa => "sarsa",
            AgentKind::DeepSarsa => "deep-sarsa",
            AgentKind::Random => "random",
        }
    }

    pub fn is_learning(self) -> bool {
        self != AgentKind::Random
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "ddqn" | "dqn" => Ok(AgentKind::Ddqn),
            "qlearn" | "q-learning" | "qlearning" => Ok(AgentKind::QLearning),
            "sarsa" => Ok(AgentKind::Sarsa),
            "deep-sarsa" | "deepsarsa" => Ok(AgentKind::DeepSarsa),
            "random" => Ok(AgentKind::Random),
            _ => Err(AgentError::InvalidConfig(format!("unknown agent `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Per-episode multiplicative decay: `eps *= 1 - epsilon_decay`.
    pub epsilon_decay: f64,
    /// Adam step size for the networks.
    pub learning_rate: f64,
    /// Step size for the tabular agents.
    pub tabular_learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub episodes: usize,
    /// Gradient updates between target-network refreshes.
    pub target_sync: usize,
    /// Transitions stored before updates start; defaults to the batch size.
    pub warmup: Option<usize>,
    pub seed: u64,
    pub benefit: BenefitConfig,
    pub rules: FeasibilityRules,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            kind: AgentKind::Ddqn,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_min: 1e-7,
            epsilon_decay: 0.0003,
            learning_rate: 0.001,
            tabular_learning_rate: 0.1,
            batch_size: 32,
            replay_capacity: 2000,
            episodes: 15_000,
            target_sync: 100,
            warmup: None,
            seed: 0,
            benefit: BenefitConfig::default(),
            rules: FeasibilityRules::default(),
        }
    }
}

impl AgentConfig {
    pub fn with_kind(kind: AgentKind) -> Self {
        AgentConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.epsilon_min > 0.0
            && self.epsilon_min <= self.epsilon_start
            && self.epsilon_start <= 1.0)
        {
            return bad(format!(
                "epsilon range [{}, {}] must satisfy 0 < min <= start <= 1",
                self.epsilon_min, self.epsilon_start
            ));
        }
        if !(0.0..1.0).contains(&self.epsilon_decay) {
            return bad(format!("epsilon decay {} outside [0, 1)", self.epsilon_decay));
        }
        for (name, lr) in [
            ("learning rate", self.learning_rate),
            ("tabular learning rate", self.tabular_learning_rate),
        ] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("{name} {lr} must be finite and non-negative"));
            }
        }
        if self.episodes == 0 {
            return bad("episodes must be positive".into());
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad(format!(
                "batch size {} must be positive and fit the replay capacity {}",
                self.batch_size, self.replay_capacity
            ));
        }
        if self.target_sync == 0 {
            return bad("target sync interval must be positive".into());
        }
        Ok(())
    }

    /// Exploration rate used during `episode` (0-based).
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let mut eps = self.epsilon_start;
        for _ in 0..episode {
            eps = next_epsilon(eps, self);
            if eps == self.epsilon_min {
                break;
            }
        }
        eps
    }
}

pub(crate) fn next_epsilon(eps: f64, config: &AgentConfig) -> f64 {
    (eps * (1.0 - config.epsilon_decay)).max(config.epsilon_min)
}

/// Epsilon-greedy choice restricted to `feasible`; greedy ties go to the
/// smallest index.
pub fn select_action<R: Rng>(
    q_values: &[f64],
    feasible: &[usize],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, AgentError> {
    if feasible.is_empty() {
        return Err(AgentError::NoFeasibleAction);
    }
    if rng.gen::<f64>() < epsilon {
        return Ok(*feasible.choose(rng).unwrap());
    }
    Ok(greedy(q_values, feasible))
}

pub(crate) fn greedy(q_values: &[f64], feasible: &[usize]) -> usize {
    let mut best = (feasible[0], q_values[feasible[0]]);
    for &a in &feasible[1..] {
        let q = q_values[a];
        if q > best.1 || (q == best.1 && a < best.0) {
            best = (a, q);
        }
    }
    best.0
}

/// Uniform choice among feasible actions.
pub fn random_policy<R: Rng>(feasible: &[usize], rng: &mut R) -> Result<usize, AgentError> {
    feasible
        .choose(rng)
        .copied()
        .ok_or(AgentError::NoFeasibleAction)
}

/// Tabular state: location plus ten-bucket budget and time fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TabularState {
    pub location: Option<usize>,
    pub budget_bucket: u8,
    pub time_bucket: u8,
}

const BUCKETS: f64 = 10.0;

impl TabularState {
    pub fn of(env: &Environment<'_>, episode: &Episode) -> Self {
        let bucket = |left: f64, total: f64| {
            if total <= 0.0 {
                0
            } else {
                ((left / total) * BUCKETS).floor().clamp(0.0, BUCKETS - 1.0) as u8
            }
        };
        TabularState {
            location: episode.state.location,
            budget_bucket: bucket(episode.state.remaining_budget, env.budget()),
            time_bucket: bucket(episode.state.remaining_time, env.horizon()),
        }
    }
}

/// A trained (or untrained) decision rule.
#[derive(Debug, Clone)]
pub enum Policy {
    Network(Network),
    Table(QTable<TabularState>),
    Random,
}

impl Policy {
    /// Action values in the current state; `None` for the random policy.
    pub fn q_values(&self, env: &Environment<'_>, episode: &Episode) -> Result<Option<Vec<f64>>, AgentError> {
        Ok(match self {
            Policy::Network(net) => Some(net.forward(&env.encode(episode))?),
            Policy::Table(table) => Some(table.row(&TabularState::of(env, episode))),
            Policy::Random => None,
        })
    }

    /// Epsilon-greedy action; the random policy ignores epsilon.
    pub fn act<R: Rng>(
        &self,
        env: &Environment<'_>,
        episode: &Episode,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<usize, AgentError> {
        match self.q_values(env, episode)? {
            Some(q) => select_action(&q, episode.feasible(), epsilon, rng),
            None => random_policy(episode.feasible(), rng),
        }
    }

    /// Feasible actions ordered by value, best first; ties by index. The
    /// random policy returns a shuffled order.
    pub fn rank<R: Rng>(
        &self,
        env: &Environment<'_>,
        episode: &Episode,
        rng: &mut R,
    ) -> Result<Vec<usize>, AgentError> {
        let mut actions = episode.feasible().to_vec();
        match self.q_values(env, episode)? {
            Some(q) => actions.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b))),
            None => actions.shuffle(rng),
        }
        Ok(actions)
    }
}
