//! Training plus plan extraction, parallel grouping and cycle bookkeeping.

mod bundled;
mod cycle;
mod generate;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    evaluate, train, AgentConfig, AgentError, AgentKind, Environment, Episode, EpisodeRecord, Evaluation,
    Policy,
};
use crate::city::{Dataset, DatasetError, DependencyGraph, ItemId, MAX_PRIORITY};
use crate::constraints::{check_indices, threshold_for_cycle, ConstraintError, FeasibilityRules, Verdict};
use crate::instance::Instance;
use crate::metrics::{IntactSet, MetricsError, PlanEvaluation};

pub use bundled::{six_unit_instance, twenty_unit_instance};
pub use cycle::{CycleRecord, Lineage, LineageError, PlanExport, PlanExportItem};
pub use generate::{generate_instance, GeneratorConfig};

/// Plans up to this many items are ordered by exact subset search.
const EXACT_ORDER_LIMIT: usize = 16;
/// Salt separating the extraction stream from the training stream.
const EXTRACT_SALT: u64 = 0x5851_f42d_4c95_7f2d;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("nothing to plan: every item is intact")]
    NothingToPlan,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Agent(AgentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl From<AgentError> for PlannerError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::NothingToPlan => PlannerError::NothingToPlan,
            other => PlannerError::Agent(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub agent: AgentKind,
    pub seed: u64,
    pub cycle: u32,
    pub episodes: usize,
}

/// One feasible, ordered reconstruction plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub id: String,
    pub items: Vec<ItemId>,
    pub evaluation: PlanEvaluation,
    pub verdict: Verdict,
    pub threshold: f64,
    pub budget: f64,
    pub horizon: f64,
    pub parallel_sublists: Vec<Vec<ItemId>>,
    /// Sum over groups of the longest duration in the group.
    pub parallel_makespan: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanRequest {
    pub budget: f64,
    pub horizon: f64,
    pub alternatives: usize,
    pub agent: AgentConfig,
    /// Reorder the chosen items to maximise the time-weighted benefit.
    pub reorder: bool,
    /// Rollouts used to compare the trained agent with the random one.
    pub eval_rollouts: usize,
}

impl Default for PlanRequest {
    fn default() -> Self {
        PlanRequest {
            budget: 100_000.0,
            horizon: 60.0,
            alternatives: 2,
            agent: AgentConfig::default(),
            reorder: true,
            eval_rollouts: 100,
        }
    }
}

/// Trained agent against the random baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub agent: Evaluation,
    pub random: Evaluation,
}

impl Verification {
    pub fn agent_beats_random(&self) -> bool {
        self.agent.mean_reward > self.random.mean_reward
    }
}

/// Why no plan could be emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub budget: f64,
    pub horizon: f64,
    pub threshold: f64,
    pub damaged_items: usize,
    pub feasible_first_actions: usize,
    pub cheapest_unblocked_cost: Option<f64>,
    pub shortest_unblocked_time: Option<f64>,
    pub highest_damaged_priority: Option<u8>,
    /// Human-readable names of the constraints that bind.
    pub binding: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PlanningOutcome {
    /// Best first.
    pub plans: Vec<Plan>,
    pub history: Vec<EpisodeRecord>,
    pub diverged: bool,
    pub verification: Option<Verification>,
    /// Present when `plans` is empty.
    pub diagnostics: Option<Diagnostics>,
    pub policy: Policy,
}

/// Threshold used for a dataset's cycle; cycles past the priority scale
/// keep the last value.
pub fn cycle_threshold(cycle: u32) -> f64 {
    threshold_for_cycle(cycle.clamp(1, MAX_PRIORITY as u32), MAX_PRIORITY)
        .expect("clamped cycle in range")
}

/// Trains `config` on `dataset` and extracts up to `k` plans.
pub fn train_and_plan(
    dataset: &Dataset,
    budget: f64,
    horizon: f64,
    config: &AgentConfig,
    k: usize,
) -> Result<PlanningOutcome, PlannerError> {
    let request = PlanRequest {
        budget,
        horizon,
        alternatives: k,
        agent: config.clone(),
        ..Default::default()
    };
    plan_with(dataset, &request, &mut |_| {})
}

/// Full pipeline with an episode progress callback.
pub fn plan_with(
    dataset: &Dataset,
    request: &PlanRequest,
    progress: &mut dyn FnMut(&EpisodeRecord),
) -> Result<PlanningOutcome, PlannerError> {
    if request.alternatives == 0 {
        return Err(PlannerError::InvalidRequest("alternatives must be at least 1".into()));
    }
    let instance = Instance::new(dataset, request.agent.benefit)?;
    let env = Environment::new(&instance, request.budget, request.horizon, request.agent.rules)?;
    let run = train(&env, &request.agent, progress)?;
    let verification = if request.eval_rollouts > 0 {
        let seed = request.agent.seed ^ EXTRACT_SALT;
        Some(Verification {
            agent: evaluate(&run.policy, &env, request.eval_rollouts, seed)?,
            random: evaluate(&Policy::Random, &env, request.eval_rollouts, seed)?,
        })
    } else {
        None
    };
    let plans = extract_plans(&env, &run.policy, request, dataset.cycle())?;
    let diagnostics = plans
        .is_empty()
        .then(|| diagnose(&instance, request.budget, request.horizon, cycle_threshold(dataset.cycle())));
    Ok(PlanningOutcome {
        plans,
        history: run.history,
        diverged: run.diverged,
        verification,
        diagnostics,
        policy: run.policy,
    })
}

/// Greedy rollouts that branch on the ranked first actions until `k`
/// distinct feasible plans are found, best benefit first. When the branches
/// yield fewer than `k` item sets, the remainder is filled with feasible
/// one-item-shorter variants of the plans already found.
pub fn extract_plans(
    env: &Environment<'_>,
    policy: &Policy,
    request: &PlanRequest,
    cycle: u32,
) -> Result<Vec<Plan>, PlannerError> {
    let instance = env.instance();
    let threshold = cycle_threshold(cycle);
    let mut rng = ChaCha8Rng::seed_from_u64(request.agent.seed ^ EXTRACT_SALT);
    let start = env.reset(&mut rng);

    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut consider = |items: Vec<usize>| -> Result<Option<Candidate>, PlannerError> {
        let items = if request.reorder {
            best_order(instance, &items, env.horizon())?
        } else {
            items
        };
        let mut key = items.clone();
        key.sort_unstable();
        if !seen.insert(key) {
            return Ok(None);
        }
        let verdict = check_indices(instance, &items, env.budget(), env.horizon(), threshold, env.rules());
        if !verdict.feasible {
            return Ok(None);
        }
        let evaluation = instance.benefit().evaluate_indices(&items, env.horizon())?;
        Ok(Some((items, evaluation, verdict)))
    };

    let mut found: Vec<Candidate> = Vec::new();
    let k = request.alternatives;
    let mut take = |plan: &[usize], found: &mut Vec<Candidate>| -> Result<bool, PlannerError> {
        if let Some(items) = repair_priority(instance, plan, threshold) {
            found.extend(consider(items)?);
        }
        Ok(found.len() == k)
    };
    branch_rollouts(env, &start, policy, &mut rng, &mut |plan| take(plan, &mut found))?;

    // Rollouts ignore priorities. If too few survive the repair, retry with
    // every action held to the threshold itself.
    let floor = threshold.ceil().min(MAX_PRIORITY as f64) as u8;
    if found.len() < k && env.rules().priority_floor.is_none_or(|f| f < floor) {
        let strict = Environment::new(
            instance,
            env.budget(),
            env.horizon(),
            FeasibilityRules {
                priority_floor: Some(floor),
            },
        )?;
        let start = strict.reset_from(start.state.location);
        branch_rollouts(&strict, &start, policy, &mut rng, &mut |plan| take(plan, &mut found))?;
    }

    if found.len() < request.alternatives {
        let mut variants = Vec::new();
        for (items, ..) in &found {
            for (pos, &v) in items.iter().enumerate() {
                let waited_on = items.iter().any(|&i| instance.blockers(i).contains(&v));
                if waited_on || items.len() < 2 {
                    continue;
                }
                let mut shorter = items.clone();
                shorter.remove(pos);
                variants.extend(consider(shorter)?);
            }
        }
        variants.sort_by(|a, b| b.1.social_benefit.total_cmp(&a.1.social_benefit));
        variants.truncate(request.alternatives - found.len());
        found.extend(variants);
    }
    found.sort_by(|a, b| b.1.social_benefit.total_cmp(&a.1.social_benefit));

    Ok(found
        .into_iter()
        .enumerate()
        .map(|(rank, (items, evaluation, verdict))| {
            let ids: Vec<ItemId> = items.iter().map(|&i| instance.index().id(i).clone()).collect();
            let parallel_sublists = parallel_sublists(&ids, instance.dependencies());
            let parallel_makespan = parallel_sublists
                .iter()
                .map(|g| {
                    g.iter()
                        .map(|id| instance.time(instance.resolve(id.as_str()).unwrap()))
                        .fold(0.0, f64::max)
                })
                .sum();
            Plan {
                id: format!("c{cycle}-p{}", rank + 1),
                items: ids,
                evaluation,
                verdict,
                threshold,
                budget: env.budget(),
                horizon: env.horizon(),
                parallel_sublists,
                parallel_makespan,
                provenance: Provenance {
                    agent: request.agent.kind,
                    seed: request.agent.seed,
                    cycle,
                    episodes: request.agent.episodes,
                },
            }
        })
        .collect())
}

type Candidate = (Vec<usize>, PlanEvaluation, Verdict);

/// Greedy rollout from each first action in ranked order; stops when
/// `visit` returns true.
fn branch_rollouts(
    env: &Environment<'_>,
    start: &Episode,
    policy: &Policy,
    rng: &mut ChaCha8Rng,
    visit: &mut dyn FnMut(&[usize]) -> Result<bool, PlannerError>,
) -> Result<(), PlannerError> {
    for first in policy.rank(env, start, rng)? {
        let mut episode = start.clone();
        env.step(&mut episode, first)?;
        while !episode.is_done() {
            let a = policy.act(env, &episode, 0.0, rng)?;
            env.step(&mut episode, a)?;
        }
        if visit(episode.plan())? {
            break;
        }
    }
    Ok(())
}

/// Raises the plan's mean priority to `threshold` by dropping items, each
/// together with everything in the plan that waits on it. A removal that
/// reaches the threshold is preferred, losing the least benefit; otherwise
/// the one leaving the highest mean. `None` if nothing survives.
fn repair_priority(instance: &Instance, plan: &[usize], threshold: f64) -> Option<Vec<usize>> {
    let frozen = instance.benefit().frozen();
    let mean = |items: &[usize]| {
        items.iter().map(|&i| instance.priority(i) as f64).sum::<f64>() / items.len() as f64
    };
    let mut items = plan.to_vec();
    while !items.is_empty() && mean(&items) < threshold - 1e-9 {
        let mut best: Option<(bool, f64, f64, Vec<usize>)> = None;
        for &v in &items {
            let mut dropped: HashSet<usize> = HashSet::from([v]);
            loop {
                let before = dropped.len();
                for &i in &items {
                    if instance.blockers(i).iter().any(|b| dropped.contains(b)) {
                        dropped.insert(i);
                    }
                }
                if dropped.len() == before {
                    break;
                }
            }
            let rest: Vec<usize> = items.iter().copied().filter(|i| !dropped.contains(i)).collect();
            if rest.is_empty() {
                continue;
            }
            let m = mean(&rest);
            let lost: f64 = dropped.iter().map(|&i| frozen[i]).sum();
            let reaches = m >= threshold - 1e-9;
            let better = match &best {
                None => true,
                Some((r, bm, bl, _)) => match (reaches, *r) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => lost < *bl,
                    (false, false) => m > *bm || (m == *bm && lost < *bl),
                },
            };
            if better {
                best = Some((reaches, m, lost, rest));
            }
        }
        items = best?.3;
    }
    (!items.is_empty()).then_some(items)
}

/// Order of the same items with the highest time-weighted benefit that
/// keeps every blocker ahead of what it blocks. Exact for small plans,
/// benefit-per-month greedy otherwise; never worse than the input order.
fn best_order(instance: &Instance, plan: &[usize], horizon: f64) -> Result<Vec<usize>, MetricsError> {
    if instance.benefit().config().intact_set == IntactSet::Incremental || plan.len() < 2 {
        return Ok(plan.to_vec());
    }
    let n = plan.len();
    let benefit: Vec<f64> = plan.iter().map(|&i| instance.benefit().frozen()[i]).collect();
    let time: Vec<f64> = plan.iter().map(|&i| instance.time(i)).collect();
    // bit masks of in-plan blockers
    let pos = |item: usize| plan.iter().position(|&p| p == item);
    let preds: Vec<u32> = plan
        .iter()
        .map(|&i| {
            instance
                .blockers(i)
                .iter()
                .filter_map(|&b| pos(b))
                .fold(0u32, |m, p| m | (1 << p))
        })
        .collect();

    let candidate = if n <= EXACT_ORDER_LIMIT {
        exact_order(&benefit, &time, &preds, horizon)
    } else {
        ratio_order(&benefit, &time, &preds)
    };
    let candidate: Vec<usize> = candidate.into_iter().map(|k| plan[k]).collect();
    let score = |order: &[usize]| instance.benefit().evaluate_indices(order, horizon).map(|e| e.social_benefit);
    Ok(if score(&candidate)? > score(plan)? {
        candidate
    } else {
        plan.to_vec()
    })
}

fn exact_order(benefit: &[f64], time: &[f64], preds: &[u32], horizon: f64) -> Vec<usize> {
    let n = benefit.len();
    let full = (1usize << n) - 1;
    let mut best = vec![f64::NEG_INFINITY; full + 1];
    let mut choice = vec![usize::MAX; full + 1];
    let mut elapsed = vec![0.0; full + 1];
    best[0] = 0.0;
    for mask in 0..=full {
        if best[mask] == f64::NEG_INFINITY {
            continue;
        }
        if mask != 0 {
            let low = mask.trailing_zeros() as usize;
            elapsed[mask] = elapsed[mask & (mask - 1)] + time[low];
        }
        for v in 0..n {
            let bit = 1 << v;
            if mask & bit != 0 || (preds[v] as usize) & !mask != 0 {
                continue;
            }
            let next = mask | bit;
            let value = best[mask] + benefit[v] * (horizon - elapsed[mask] - time[v]).max(0.0);
            if value > best[next] {
                best[next] = value;
                choice[next] = v;
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut mask = full;
    while mask != 0 {
        let v = choice[mask];
        order.push(v);
        mask &= !(1 << v);
    }
    order.reverse();
    order
}

fn ratio_order(benefit: &[f64], time: &[f64], preds: &[u32]) -> Vec<usize> {
    let n = benefit.len();
    let ratio = |v: usize| if time[v] > 0.0 { benefit[v] / time[v] } else { f64::INFINITY };
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !done[v])
            .filter(|&v| (0..n).all(|p| preds[v] & (1 << p) == 0 || done[p]))
            .max_by(|&a, &b| ratio(a).total_cmp(&ratio(b)).then(b.cmp(&a)))
            .expect("acyclic precedence");
        done[v] = true;
        order.push(v);
    }
    order
}

/// Splits a plan into consecutive groups; a new group starts whenever an
/// item depends, directly or transitively, on something already in the
/// current group.
pub fn parallel_sublists(plan: &[ItemId], graph: &DependencyGraph) -> Vec<Vec<ItemId>> {
    let mut groups: Vec<Vec<ItemId>> = Vec::new();
    for id in plan {
        let blockers = graph.transitive_blockers(id.as_str());
        match groups.last_mut() {
            Some(group) if !group.iter().any(|g| blockers.contains(g)) => group.push(id.clone()),
            _ => groups.push(vec![id.clone()]),
        }
    }
    groups
}

fn diagnose(instance: &Instance, budget: f64, horizon: f64, threshold: f64) -> Diagnostics {
    let unblocked: Vec<usize> = instance
        .damaged_items()
        .filter(|&i| instance.blockers(i).is_empty())
        .collect();
    let cheapest = unblocked.iter().map(|&i| instance.cost(i)).reduce(f64::min);
    let shortest = unblocked.iter().map(|&i| instance.time(i)).reduce(f64::min);
    let highest = instance.damaged_items().map(|i| instance.priority(i)).max();
    let feasible = unblocked
        .iter()
        .filter(|&&i| instance.cost(i) <= budget && instance.time(i) <= horizon)
        .count();
    let mut binding = Vec::new();
    if cheapest.is_some_and(|c| c > budget) {
        binding.push("budget".to_owned());
    }
    if shortest.is_some_and(|t| t > horizon) {
        binding.push("horizon".to_owned());
    }
    if unblocked.is_empty() {
        binding.push("dependencies".to_owned());
    }
    if highest.is_some_and(|p| (p as f64) < threshold) || binding.is_empty() {
        binding.push("priority".to_owned());
    }
    Diagnostics {
        budget,
        horizon,
        threshold,
        damaged_items: instance.damaged_items().count(),
        feasible_first_actions: feasible,
        cheapest_unblocked_cost: cheapest,
        shortest_unblocked_time: shortest,
        highest_damaged_priority: highest,
        binding,
    }
}
