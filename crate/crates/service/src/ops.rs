//! Operations shared by the CLI and the HTTP API. Both front ends only
//! serialize what these return.

use std::fs;
use std::path::{Path, PathBuf};

use rebuild_core::agents::{AgentConfig, EpisodeRecord};
use rebuild_core::bench::{moving_average, MOVING_AVERAGE_WINDOW};
use rebuild_core::city::{Dataset, DependencyEdge, RoadEdge, Unit};
use rebuild_core::planner::{
    cycle_threshold, plan_with, Diagnostics, Lineage, Plan, PlanRequest, PlanningOutcome, Verification,
};
use serde::{Deserialize, Serialize};

use crate::error::{ErrorKind, ServiceError};

/// Current snapshot as served to clients.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetView {
    pub cycle: u32,
    pub threshold: f64,
    pub damaged_items: usize,
    pub units: Vec<Unit>,
    pub roads: Vec<RoadEdge>,
    pub dependencies: Vec<DependencyEdge>,
}

impl DatasetView {
    pub fn of(dataset: &Dataset) -> Self {
        DatasetView {
            cycle: dataset.cycle(),
            threshold: cycle_threshold(dataset.cycle()),
            damaged_items: dataset.damaged_count(),
            units: dataset.units().cloned().collect(),
            roads: dataset.roads().to_vec(),
            dependencies: dataset.dependencies().to_vec(),
        }
    }
}

/// Body of a training request. Missing fields take the planner defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRequest {
    pub budget: f64,
    pub horizon: f64,
    pub alternatives: usize,
    pub config: AgentConfig,
}

impl Default for TrainRequest {
    fn default() -> Self {
        let plan = PlanRequest::default();
        TrainRequest {
            budget: plan.budget,
            horizon: plan.horizon,
            alternatives: plan.alternatives,
            config: plan.agent,
        }
    }
}

impl TrainRequest {
    pub fn validate(&self) -> Result<(), ServiceError> {
        for (name, v) in [("budget", self.budget), ("horizon", self.horizon)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ServiceError::validation(
                    "invalid_request",
                    format!("{name} must be a positive number, got {v}"),
                ));
            }
        }
        if self.alternatives == 0 {
            return Err(ServiceError::validation("invalid_request", "alternatives must be at least 1"));
        }
        self.config.validate()?;
        Ok(())
    }

    pub fn to_plan_request(&self) -> PlanRequest {
        PlanRequest {
            budget: self.budget,
            horizon: self.horizon,
            alternatives: self.alternatives,
            agent: self.config.clone(),
            ..Default::default()
        }
    }
}

/// What a training run added to the lineage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub cycle: u32,
    pub threshold: f64,
    pub plans: Vec<Plan>,
    pub plan_files: Vec<PathBuf>,
    pub diverged: bool,
    pub verification: Option<Verification>,
    pub diagnostics: Option<Diagnostics>,
    pub episodes: usize,
    pub final_reward: Option<f64>,
}

pub fn train(
    dataset: &Dataset,
    request: &TrainRequest,
    progress: &mut dyn FnMut(&EpisodeRecord),
) -> Result<PlanningOutcome, ServiceError> {
    request.validate()?;
    Ok(plan_with(dataset, &request.to_plan_request(), progress)?)
}

/// Stores the plans of `outcome`, trained on cycle `cycle`, in the lineage.
pub fn record_outcome(
    lineage: &mut Lineage,
    cycle: u32,
    outcome: PlanningOutcome,
) -> Result<TrainSummary, ServiceError> {
    if lineage.cycle() != cycle {
        return Err(ServiceError::new(
            ErrorKind::Conflict,
            "stale_cycle",
            format!(
                "training ran on cycle {cycle}, but the lineage has moved to cycle {}",
                lineage.cycle()
            ),
        ));
    }
    let plans = lineage.add_candidates(outcome.plans)?;
    let plan_files = plans
        .iter()
        .map(|p| lineage.root().join("plans").join(format!("{}.json", p.id)))
        .collect();
    Ok(TrainSummary {
        cycle,
        threshold: cycle_threshold(cycle),
        plans,
        plan_files,
        diverged: outcome.diverged,
        verification: outcome.verification,
        diagnostics: outcome.diagnostics,
        episodes: outcome.history.len(),
        final_reward: outcome.history.last().map(|r| r.reward),
    })
}

/// One row of the cycle history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleView {
    pub cycle: u32,
    pub threshold: f64,
    pub candidates: Vec<String>,
    pub selected: Option<String>,
    pub before_snapshot: String,
    pub after_snapshot: Option<String>,
}

pub fn cycles(lineage: &Lineage) -> Vec<CycleView> {
    lineage
        .records()
        .iter()
        .map(|r| CycleView {
            cycle: r.cycle,
            threshold: r.threshold,
            candidates: r.candidates.iter().map(|p| p.id.clone()).collect(),
            selected: r.selected.clone(),
            before_snapshot: r.before_snapshot.clone(),
            after_snapshot: r.after_snapshot.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanList {
    pub cycle: u32,
    pub plans: Vec<Plan>,
}

pub fn plans(lineage: &Lineage, cycle: Option<u32>) -> PlanList {
    let cycle = cycle.unwrap_or(lineage.cycle());
    PlanList {
        cycle,
        plans: lineage.plans(Some(cycle)).into_iter().cloned().collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Applied {
    pub plan: String,
    pub cycle: u32,
    pub dataset: DatasetView,
}

pub fn apply(lineage: &mut Lineage, plan_id: &str) -> Result<Applied, ServiceError> {
    let next = lineage.select_and_advance(plan_id)?;
    Ok(Applied {
        plan: plan_id.to_owned(),
        cycle: next.cycle(),
        dataset: DatasetView::of(next),
    })
}

/// Reward curve point with its trailing moving average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub reward: f64,
    pub moving_average: f64,
    pub epsilon: f64,
    pub loss: Option<f64>,
}

pub fn curve(history: &[EpisodeRecord]) -> Vec<CurvePoint> {
    let rewards: Vec<f64> = history.iter().map(|r| r.reward).collect();
    let avg = moving_average(&rewards, MOVING_AVERAGE_WINDOW);
    history
        .iter()
        .zip(avg)
        .map(|(r, m)| CurvePoint {
            episode: r.episode,
            reward: r.reward,
            moving_average: m,
            epsilon: r.epsilon,
            loss: r.loss,
        })
        .collect()
}

/// Starts a lineage in `dir`, replacing an existing one when `force` is set.
pub fn init_lineage(dir: &Path, dataset: Dataset, force: bool) -> Result<Lineage, ServiceError> {
    if force {
        for entry in ["manifest.json", "snapshots", "plans"] {
            let path = dir.join(entry);
            let removed = if path.is_dir() {
                fs::remove_dir_all(&path)
            } else {
                fs::remove_file(&path)
            };
            match removed {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(ServiceError::internal(format!("{}: {e}", path.display()))),
            }
        }
    }
    Ok(Lineage::create(dir, dataset)?)
}
