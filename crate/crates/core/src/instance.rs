//! Index-based view of one dataset snapshot, shared by the constraint
//! checks, the environment and the planner.

use crate::city::{build_dependency_graph, Dataset, DependencyGraph, ItemIndex, ItemView};
use crate::metrics::{BenefitConfig, BenefitModel, MetricsError};

#[derive(Debug, Clone)]
pub struct Instance {
    dataset: Dataset,
    benefit: BenefitModel,
    dependencies: DependencyGraph,
    /// Damaged direct blockers of each item.
    blockers: Vec<Vec<usize>>,
    damaged: Vec<bool>,
}

impl Instance {
    pub fn new(dataset: &Dataset, config: BenefitConfig) -> Result<Self, MetricsError> {
        let benefit = BenefitModel::new(dataset, config)?;
        let dependencies = build_dependency_graph(dataset);
        let index = benefit.index();
        let damaged: Vec<bool> = index.items().iter().map(|i| i.status.is_damaged()).collect();
        let blockers = index
            .items()
            .iter()
            .map(|item| {
                let mut b: Vec<usize> = dependencies
                    .blockers_of(item.id.as_str())
                    .filter_map(|id| index.get(id.as_str()))
                    .filter(|&i| damaged[i])
                    .collect();
                b.sort_unstable();
                b
            })
            .collect();
        Ok(Instance {
            dataset: dataset.clone(),
            benefit,
            dependencies,
            blockers,
            damaged,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn index(&self) -> &ItemIndex {
        self.benefit.index()
    }

    pub fn benefit(&self) -> &BenefitModel {
        &self.benefit
    }

    pub fn dependencies(&self) -> &DependencyGraph {
        &self.dependencies
    }

    pub fn len(&self) -> usize {
        self.damaged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.damaged.is_empty()
    }

    pub fn item(&self, i: usize) -> &ItemView {
        self.index().item(i)
    }

    pub fn is_damaged(&self, i: usize) -> bool {
        self.damaged[i]
    }

    pub fn damaged_items(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.damaged[i])
    }

    pub fn blockers(&self, i: usize) -> &[usize] {
        &self.blockers[i]
    }

    pub fn cost(&self, i: usize) -> f64 {
        self.item(i).effective_cost()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.item(i).effective_time()
    }

    pub fn priority(&self, i: usize) -> u8 {
        self.item(i).priority
    }

    pub fn is_road(&self, i: usize) -> bool {
        self.item(i).is_road()
    }

    pub fn resolve(&self, id: &str) -> Option<usize> {
        self.index().get(id)
    }
}
