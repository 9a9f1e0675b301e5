//! Reconstruction environment: the agent picks one damaged item per step
//! and is rewarded with its social benefit.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::constraints::{feasible_indices, FeasibilityRules};
use crate::instance::Instance;
use crate::metrics::IntactSet;

use super::AgentError;

/// Observable state: where the crew is and what is left to spend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    /// Item index of the current location; `None` is the start sentinel.
    pub location: Option<usize>,
    pub remaining_budget: f64,
    pub remaining_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: usize,
    pub reward: f64,
    pub next_state: EnvState,
    pub terminal: bool,
}

/// Mutable per-episode bookkeeping.
#[derive(Debug, Clone)]
pub struct Episode {
    pub state: EnvState,
    taken: Vec<bool>,
    plan: Vec<usize>,
    /// Benefit of rebuilt roads not yet paid out.
    banked: f64,
    feasible: Vec<usize>,
}

impl Episode {
    pub fn plan(&self) -> &[usize] {
        &self.plan
    }

    pub fn taken(&self) -> &[bool] {
        &self.taken
    }

    pub fn feasible(&self) -> &[usize] {
        &self.feasible
    }

    pub fn is_done(&self) -> bool {
        self.feasible.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Environment<'a> {
    instance: &'a Instance,
    budget: f64,
    horizon: f64,
    rules: FeasibilityRules,
    damaged_total: usize,
}

impl<'a> Environment<'a> {
    pub fn new(
        instance: &'a Instance,
        budget: f64,
        horizon: f64,
        rules: FeasibilityRules,
    ) -> Result<Self, AgentError> {
        if !(budget.is_finite() && budget >= 0.0 && horizon.is_finite() && horizon >= 0.0) {
            return Err(AgentError::InvalidConfig(format!(
                "budget {budget} and horizon {horizon} must be finite and non-negative"
            )));
        }
        let damaged_total = instance.damaged_items().count();
        if damaged_total == 0 {
            return Err(AgentError::NothingToPlan);
        }
        Ok(Environment {
            instance,
            budget,
            horizon,
            rules,
            damaged_total,
        })
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn rules(&self) -> FeasibilityRules {
        self.rules
    }

    /// Size of the action space: every item, damaged or not.
    pub fn action_count(&self) -> usize {
        self.instance.len()
    }

    fn feasible_for(&self, taken: &[bool], budget: f64, time: f64) -> Vec<usize> {
        feasible_indices(self.instance, taken, budget, time, self.rules)
    }

    /// Full budget and time; the location is drawn among the feasible first
    /// actions and is observational only.
    pub fn reset<R: Rng>(&self, rng: &mut R) -> Episode {
        let taken = vec![false; self.instance.len()];
        let feasible = self.feasible_for(&taken, self.budget, self.horizon);
        let location = feasible.choose(rng).copied();
        self.reset_at(location, taken, feasible)
    }

    /// Reset with an explicit start location.
    pub fn reset_from(&self, location: Option<usize>) -> Episode {
        let taken = vec![false; self.instance.len()];
        let feasible = self.feasible_for(&taken, self.budget, self.horizon);
        self.reset_at(location, taken, feasible)
    }

    fn reset_at(&self, location: Option<usize>, taken: Vec<bool>, feasible: Vec<usize>) -> Episode {
        Episode {
            state: EnvState {
                location,
                remaining_budget: self.budget,
                remaining_time: self.horizon,
            },
            taken,
            plan: Vec::new(),
            banked: 0.0,
            feasible,
        }
    }

    /// Builds the first-step feasible set without drawing a location.
    pub fn initial_feasible(&self) -> Vec<usize> {
        self.feasible_for(&vec![false; self.instance.len()], self.budget, self.horizon)
    }

    /// Takes `action`. Roads pay nothing now; their benefit is added to the
    /// next building, or to the last step if the episode ends first.
    pub fn step(&self, episode: &mut Episode, action: usize) -> Result<Transition, AgentError> {
        if !episode.feasible.contains(&action) {
            return Err(AgentError::InfeasibleAction(
                self.instance.index().id(action).to_string(),
            ));
        }
        let benefit = match self.instance.benefit().config().intact_set {
            IntactSet::Frozen => self.instance.benefit().frozen()[action],
            IntactSet::Incremental => {
                let intact: Vec<bool> = (0..self.instance.len())
                    .map(|i| !self.instance.is_damaged(i) || episode.taken[i])
                    .collect();
                self.instance.benefit().benefits_for(&intact)?[action]
            }
        };
        let before = episode.state;
        let mut reward = if self.instance.is_road(action) {
            episode.banked += benefit;
            0.0
        } else {
            let r = benefit + episode.banked;
            episode.banked = 0.0;
            r
        };
        episode.taken[action] = true;
        episode.plan.push(action);
        episode.state = EnvState {
            location: Some(action),
            remaining_budget: (before.remaining_budget - self.instance.cost(action)).max(0.0),
            remaining_time: (before.remaining_time - self.instance.time(action)).max(0.0),
        };
        episode.feasible = self.feasible_for(
            &episode.taken,
            episode.state.remaining_budget,
            episode.state.remaining_time,
        );
        let terminal = episode.feasible.is_empty();
        if terminal {
            reward += episode.banked;
            episode.banked = 0.0;
        }
        Ok(Transition {
            state: before,
            action,
            reward,
            next_state: episode.state,
            terminal,
        })
    }

    /// Network input: normalised location, budget and time fractions, and
    /// the fraction of damaged items already rebuilt.
    pub fn encode(&self, episode: &Episode) -> [f64; 4] {
        let n = self.instance.len() as f64;
        let s = episode.state;
        let fraction = |left: f64, total: f64| if total > 0.0 { left / total } else { 0.0 };
        [
            s.location.map_or(0.0, |l| (l + 1) as f64 / n),
            fraction(s.remaining_budget, self.budget),
            fraction(s.remaining_time, self.horizon),
            episode.plan.len() as f64 / self.damaged_total as f64,
        ]
    }
}
