//! Reconstruction cycles persisted as a directory of snapshots, plan
//! exports and a manifest.
//!
//! Layout under the data directory:
//!
//! ```text
//! manifest.json              lineage history (CycleRecord list)
//! snapshots/cycle-<n>.dataset canonical dataset text, one per cycle
//! plans/<plan-id>.json       plan export documents
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::city::{load_dataset, save_dataset, snapshot_file_name, Dataset, DatasetError, ItemId};

use super::{cycle_threshold, Plan};

const MANIFEST: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LineageError {
    #[error("a lineage already exists at {0}")]
    Exists(PathBuf),
    #[error("no lineage at {0}")]
    Missing(PathBuf),
    #[error("corrupt lineage manifest: {0}")]
    Corrupt(String),
    #[error("unknown plan `{0}`")]
    UnknownPlan(String),
    #[error("plan `{0}` was already applied")]
    AlreadyApplied(String),
    #[error("plan `{plan}` belongs to cycle {plan_cycle}, but the lineage is at cycle {current}")]
    StalePlan {
        plan: String,
        plan_cycle: u32,
        current: u32,
    },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LineageError + '_ {
    move |source| LineageError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u32,
    pub threshold: f64,
    pub candidates: Vec<Plan>,
    pub selected: Option<String>,
    /// Snapshot paths relative to the data directory.
    pub before_snapshot: String,
    pub after_snapshot: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    records: Vec<CycleRecord>,
}

/// One dataset history with a single writer.
#[derive(Debug)]
pub struct Lineage {
    root: PathBuf,
    records: Vec<CycleRecord>,
    current: Dataset,
}

impl Lineage {
    /// Starts a lineage from `dataset`; fails if `root` already holds one.
    pub fn create(root: impl AsRef<Path>, dataset: Dataset) -> Result<Self, LineageError> {
        let root = root.as_ref().to_owned();
        if root.join(MANIFEST).exists() {
            return Err(LineageError::Exists(root));
        }
        for dir in ["snapshots", "plans"] {
            let d = root.join(dir);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        let before = snapshot_path(dataset.cycle());
        save_dataset(&dataset, root.join(&before))?;
        let lineage = Lineage {
            records: vec![CycleRecord {
                cycle: dataset.cycle(),
                threshold: cycle_threshold(dataset.cycle()),
                candidates: Vec::new(),
                selected: None,
                before_snapshot: before,
                after_snapshot: None,
            }],
            root,
            current: dataset,
        };
        lineage.write_manifest()?;
        Ok(lineage)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self, LineageError> {
        let root = root.as_ref().to_owned();
        let path = root.join(MANIFEST);
        if !path.exists() {
            return Err(LineageError::Missing(root));
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| LineageError::Corrupt(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(LineageError::Corrupt(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        let head = manifest
            .records
            .last()
            .ok_or_else(|| LineageError::Corrupt("no cycle records".into()))?;
        let current = load_dataset(root.join(&head.before_snapshot))?;
        if current.cycle() != head.cycle {
            return Err(LineageError::Corrupt(format!(
                "snapshot cycle {} does not match record cycle {}",
                current.cycle(),
                head.cycle
            )));
        }
        Ok(Lineage {
            root,
            records: manifest.records,
            current,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn current(&self) -> &Dataset {
        &self.current
    }

    pub fn cycle(&self) -> u32 {
        self.current.cycle()
    }

    pub fn threshold(&self) -> f64 {
        self.head().threshold
    }

    pub fn records(&self) -> &[CycleRecord] {
        &self.records
    }

    fn head(&self) -> &CycleRecord {
        self.records.last().expect("lineage has a record")
    }

    /// Candidates of `cycle`, or of the current cycle.
    pub fn plans(&self, cycle: Option<u32>) -> Vec<&Plan> {
        let cycle = cycle.unwrap_or(self.cycle());
        self.records
            .iter()
            .filter(|r| r.cycle == cycle)
            .flat_map(|r| r.candidates.iter())
            .collect()
    }

    pub fn find_plan(&self, id: &str) -> Option<(&CycleRecord, &Plan)> {
        self.records
            .iter()
            .find_map(|r| r.candidates.iter().find(|p| p.id == id).map(|p| (r, p)))
    }

    /// Records plans for the current cycle, assigning lineage-unique ids
    /// `c<cycle>-p<n>`, and writes their export files.
    pub fn add_candidates(&mut self, plans: Vec<Plan>) -> Result<Vec<Plan>, LineageError> {
        let cycle = self.cycle();
        for p in &plans {
            if p.provenance.cycle != cycle {
                return Err(LineageError::StalePlan {
                    plan: p.id.clone(),
                    plan_cycle: p.provenance.cycle,
                    current: cycle,
                });
            }
        }
        let head = self.records.last_mut().expect("lineage has a record");
        let mut added = Vec::with_capacity(plans.len());
        for mut plan in plans {
            plan.id = format!("c{cycle}-p{}", head.candidates.len() + 1);
            head.candidates.push(plan.clone());
            added.push(plan);
        }
        for plan in &added {
            let path = self.root.join("plans").join(format!("{}.json", plan.id));
            let doc = serde_json::to_string_pretty(&PlanExport::new(plan, &self.current))
                .expect("plan export serializes");
            fs::write(&path, doc).map_err(io_err(&path))?;
        }
        self.write_manifest()?;
        Ok(added)
    }

    /// Applies a current-cycle candidate, persists the new snapshot and
    /// opens the next cycle.
    pub fn select_and_advance(&mut self, plan_id: &str) -> Result<&Dataset, LineageError> {
        let cycle = self.cycle();
        let (record, plan) = self
            .find_plan(plan_id)
            .ok_or_else(|| LineageError::UnknownPlan(plan_id.to_owned()))?;
        if record.selected.as_deref() == Some(plan_id) {
            return Err(LineageError::AlreadyApplied(plan_id.to_owned()));
        }
        if record.cycle != cycle {
            return Err(LineageError::StalePlan {
                plan: plan_id.to_owned(),
                plan_cycle: record.cycle,
                current: cycle,
            });
        }
        let next = self.current.apply_plan(&plan.items)?;
        let after = snapshot_path(next.cycle());
        save_dataset(&next, self.root.join(&after))?;

        let head = self.records.last_mut().expect("lineage has a record");
        head.selected = Some(plan_id.to_owned());
        head.after_snapshot = Some(after.clone());
        self.records.push(CycleRecord {
            cycle: next.cycle(),
            threshold: cycle_threshold(next.cycle()),
            candidates: Vec::new(),
            selected: None,
            before_snapshot: after,
            after_snapshot: None,
        });
        self.current = next;
        self.write_manifest()?;
        Ok(&self.current)
    }

    fn write_manifest(&self) -> Result<(), LineageError> {
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            records: self.records.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let tmp = self.root.join(format!("{MANIFEST}.tmp"));
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        let path = self.root.join(MANIFEST);
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }
}

fn snapshot_path(cycle: u32) -> String {
    format!("snapshots/{}", snapshot_file_name(cycle))
}

/// Plan document laid out like a reconstruction table: one row per item
/// and the plan totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    pub id: String,
    pub cycle: u32,
    pub threshold: f64,
    pub budget: f64,
    pub horizon: f64,
    pub agent: String,
    pub items: Vec<PlanExportItem>,
    pub social_benefit: f64,
    pub mean_priority: Option<f64>,
    pub total_cost: f64,
    pub total_duration: f64,
    pub parallel_makespan: f64,
    pub parallel_sublists: Vec<Vec<ItemId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExportItem {
    pub id: ItemId,
    pub kind: String,
    pub cost: f64,
    pub time: f64,
    pub priority: u8,
    pub benefit: f64,
    pub completion_time: f64,
}

impl PlanExport {
    pub fn new(plan: &Plan, dataset: &Dataset) -> Self {
        let items = plan
            .items
            .iter()
            .enumerate()
            .map(|(k, id)| {
                let view = dataset.item(id.as_str());
                PlanExportItem {
                    id: id.clone(),
                    kind: view.as_ref().map_or("unknown", |v| v.kind.label()).to_owned(),
                    cost: view.as_ref().map_or(0.0, |v| v.cost),
                    time: view.as_ref().map_or(0.0, |v| v.time),
                    priority: view.as_ref().map_or(0, |v| v.priority),
                    benefit: plan.evaluation.item_benefits[k],
                    completion_time: plan.evaluation.completion_times[k],
                }
            })
            .collect();
        PlanExport {
            id: plan.id.clone(),
            cycle: plan.provenance.cycle,
            threshold: plan.threshold,
            budget: plan.budget,
            horizon: plan.horizon,
            agent: plan.provenance.agent.to_string(),
            items,
            social_benefit: plan.evaluation.social_benefit,
            mean_priority: plan.evaluation.mean_priority,
            total_cost: plan.evaluation.total_cost,
            total_duration: plan.evaluation.total_duration,
            parallel_makespan: plan.parallel_makespan,
            parallel_sublists: plan.parallel_sublists.clone(),
        }
    }
}
