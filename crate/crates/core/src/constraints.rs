//! Plan feasibility: budget, duration, political priority and physical
//! dependencies, plus the per-step feasible-action filter used by agents.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::city::{Dataset, ItemId};
use crate::instance::Instance;
use crate::metrics::BenefitConfig;

/// Absolute slack allowed on budget and time comparisons.
const TOLERANCE: f64 = 1e-9;
/// Fraction of the remaining priority scale required at each cycle.
const THRESHOLD_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("item `{0}` appears twice in the plan")]
    DuplicateItem(String),
    #[error("item `{0}` is already intact")]
    AlreadyIntact(String),
    #[error("cycle {cycle} outside 1..={max_priority}")]
    CycleOutOfRange { cycle: u32, max_priority: u8 },
}

/// Mean-priority threshold for a reconstruction cycle; it relaxes by 0.8 per
/// cycle from `0.8 * max_priority`.
pub fn threshold_for_cycle(cycle: u32, max_priority: u8) -> Result<f64, ConstraintError> {
    if cycle == 0 || cycle > max_priority as u32 {
        return Err(ConstraintError::CycleOutOfRange {
            cycle,
            max_priority,
        });
    }
    Ok((max_priority as u32 - cycle + 1) as f64 * THRESHOLD_FRACTION)
}

/// Optional tightening of the feasibility rules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityRules {
    /// When set, every single item must carry at least this priority.
    #[serde(default)]
    pub priority_floor: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceCheck {
    pub pass: bool,
    /// Limit minus usage; negative when exceeded.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityCheck {
    pub pass: bool,
    /// Mean priority minus threshold; absent for an empty plan.
    pub margin: Option<f64>,
    /// Items under the strict per-item floor, when one is configured.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub below_floor: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyCheck {
    pub pass: bool,
    /// `(blocked, blocker)` pairs where the blocker is missing or comes later.
    pub violations: Vec<(ItemId, ItemId)>,
}

/// Outcome of checking one plan against all constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub feasible: bool,
    pub cost: ResourceCheck,
    pub duration: ResourceCheck,
    pub priority: PriorityCheck,
    pub dependencies: DependencyCheck,
}

/// Resolves plan ids to item indices, rejecting unknown, repeated and
/// already intact items.
pub fn resolve_plan<S: AsRef<str>>(instance: &Instance, plan: &[S]) -> Result<Vec<usize>, ConstraintError> {
    let mut seen = HashSet::new();
    plan.iter()
        .map(|id| {
            let id = id.as_ref();
            let i = instance
                .resolve(id)
                .ok_or_else(|| ConstraintError::UnknownItem(id.to_owned()))?;
            if !seen.insert(i) {
                return Err(ConstraintError::DuplicateItem(id.to_owned()));
            }
            if !instance.is_damaged(i) {
                return Err(ConstraintError::AlreadyIntact(id.to_owned()));
            }
            Ok(i)
        })
        .collect()
}

/// Checks a plan given as item indices.
pub fn check_indices(
    instance: &Instance,
    plan: &[usize],
    budget: f64,
    horizon: f64,
    threshold: f64,
    rules: FeasibilityRules,
) -> Verdict {
    let cost: f64 = plan.iter().map(|&i| instance.cost(i)).sum();
    let time: f64 = plan.iter().map(|&i| instance.time(i)).sum();
    let cost = ResourceCheck {
        pass: cost <= budget + TOLERANCE,
        slack: budget - cost,
    };
    let duration = ResourceCheck {
        pass: time <= horizon + TOLERANCE,
        slack: horizon - time,
    };

    let margin = (!plan.is_empty()).then(|| {
        plan.iter().map(|&i| instance.priority(i) as f64).sum::<f64>() / plan.len() as f64
            - threshold
    });
    let below_floor: Vec<ItemId> = match rules.priority_floor {
        Some(floor) => plan
            .iter()
            .filter(|&&i| instance.priority(i) < floor)
            .map(|&i| instance.index().id(i).clone())
            .collect(),
        None => Vec::new(),
    };
    let priority = PriorityCheck {
        pass: margin.is_none_or(|m| m >= -TOLERANCE) && below_floor.is_empty(),
        margin,
        below_floor,
    };

    let mut position = vec![usize::MAX; instance.len()];
    for (k, &i) in plan.iter().enumerate() {
        position[i] = k;
    }
    let mut violations = Vec::new();
    for (k, &v) in plan.iter().enumerate() {
        for &b in instance.blockers(v) {
            if position[b] >= k {
                violations.push((instance.index().id(v).clone(), instance.index().id(b).clone()));
            }
        }
    }
    let dependencies = DependencyCheck {
        pass: violations.is_empty(),
        violations,
    };

    Verdict {
        feasible: cost.pass && duration.pass && priority.pass && dependencies.pass,
        cost,
        duration,
        priority,
        dependencies,
    }
}

/// Checks an ordered plan against budget, horizon (sum of durations),
/// mean-priority threshold and dependencies.
pub fn check_plan<S: AsRef<str>>(
    dataset: &Dataset,
    plan: &[S],
    budget: f64,
    horizon: f64,
    threshold: f64,
) -> Result<Verdict, ConstraintError> {
    let instance = Instance::new(dataset, BenefitConfig::default())
        .expect("one-level benefits always evaluate");
    let plan = resolve_plan(&instance, plan)?;
    Ok(check_indices(
        &instance,
        &plan,
        budget,
        horizon,
        threshold,
        FeasibilityRules::default(),
    ))
}

/// Items that may be appended to a partial plan: damaged, not yet taken,
/// affordable, fitting the remaining time, and with every damaged blocker
/// already taken.
pub fn feasible_indices(
    instance: &Instance,
    taken: &[bool],
    remaining_budget: f64,
    remaining_time: f64,
    rules: FeasibilityRules,
) -> Vec<usize> {
    instance
        .damaged_items()
        .filter(|&i| !taken[i])
        .filter(|&i| instance.cost(i) <= remaining_budget + TOLERANCE)
        .filter(|&i| instance.time(i) <= remaining_time + TOLERANCE)
        .filter(|&i| rules.priority_floor.is_none_or(|f| instance.priority(i) >= f))
        .filter(|&i| instance.blockers(i).iter().all(|&b| taken[b]))
        .collect()
}

/// Set form of [`feasible_indices`] over item ids.
pub fn feasible_actions<S: AsRef<str>>(
    dataset: &Dataset,
    partial_plan: &[S],
    remaining_budget: f64,
    remaining_time: f64,
) -> Result<BTreeSet<ItemId>, ConstraintError> {
    let instance = Instance::new(dataset, BenefitConfig::default())
        .expect("one-level benefits always evaluate");
    let plan = resolve_plan(&instance, partial_plan)?;
    let mut taken = vec![false; instance.len()];
    for i in plan {
        taken[i] = true;
    }
    Ok(feasible_indices(
        &instance,
        &taken,
        remaining_budget,
        remaining_time,
        FeasibilityRules::default(),
    )
    .into_iter()
    .map(|i| instance.index().id(i).clone())
    .collect())
}
