//! Multi-task inverse constraint learning at tabular scale.
//!
//! Each epoch solves every task against the current unsafe mask, averages
//! the learner visitation over all epochs so far, and replaces the
//! constraint with the closed-form classifier between that mixture and the
//! expert visitation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ControlAffineModel;
use crate::error::{Error, Result};
use crate::grid::{BoolMask, Grid3, ScalarField};
use crate::reachability::BrtResult;
use crate::tasks::{aggregate_density, soft_cvi, visitation_exact, MdpParams, TabularMdp, Task, VisitationField};

pub const DEFAULT_THRESHOLD: f64 = 0.6;
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Learned constraint with values in `[-1, 1]`; unsafe where value exceeds
/// the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintField {
    pub values: ScalarField,
    pub threshold: f64,
}

impl ConstraintField {
    pub fn new(values: ScalarField, threshold: f64) -> Result<Self> {
        if values.values().iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Numeric("constraint values must lie in [-1, 1]".into()));
        }
        Ok(Self { values, threshold })
    }

    /// Zero everywhere: nothing is unsafe.
    pub fn flat(grid: Grid3, threshold: f64) -> Self {
        Self { values: ScalarField::constant(grid, 0.0), threshold }
    }

    pub fn grid(&self) -> &Grid3 {
        self.values.grid()
    }

    pub fn unsafe_mask(&self) -> BoolMask {
        self.values.superlevel_set(self.threshold)
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self { values: self.values.clone(), threshold }
    }
}

/// Per-cell `(p − q)/(p + q + ε)` on unit-mass densities, with cells seen
/// by neither side (both below `ε`) set to 0.
pub fn optimal_classifier(
    learner: &VisitationField,
    expert: &VisitationField,
    epsilon: f64,
    threshold: f64,
) -> Result<ConstraintField> {
    learner.density.grid().ensure_same(expert.density.grid())?;
    if !(epsilon > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    let p = learner.normalized();
    let q = expert.normalized();
    let values: Vec<f64> = p
        .iter()
        .zip(&q)
        .map(|(&p, &q)| {
            if p < epsilon && q < epsilon {
                0.0
            } else {
                ((p - q) / (p + q + epsilon)).clamp(-1.0, 1.0)
            }
        })
        .collect();
    ConstraintField::new(ScalarField::new(*learner.density.grid(), values)?, threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclConfig {
    pub epochs: usize,
    pub tasks: Vec<Task>,
    pub epsilon: f64,
    pub penalty: f64,
    pub temperature: f64,
    pub threshold: f64,
}

impl IclConfig {
    pub fn new(tasks: Vec<Task>, params: &MdpParams) -> Self {
        Self {
            epochs: 5,
            tasks,
            epsilon: DEFAULT_EPSILON,
            penalty: params.penalty,
            temperature: params.temperature,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("need at least one task".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.penalty > 0.0) || !(self.temperature > 0.0) {
            return Err(Error::Config("penalty and temperature must be positive".into()));
        }
        Ok(())
    }
}

/// What one epoch produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub unsafe_cells: usize,
    /// Learner mass (this epoch, summed over tasks) inside the previous unsafe mask.
    pub learner_mass_in_constraint: f64,
    pub learner_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IclHistory {
    pub expert_density: VisitationField,
    pub learner_densities: Vec<VisitationField>,
    pub constraints: Vec<ConstraintField>,
    pub metrics: Vec<EpochMetrics>,
}

impl IclHistory {
    pub fn new(expert_density: VisitationField) -> Self {
        Self { expert_density, learner_densities: Vec::new(), constraints: Vec::new(), metrics: Vec::new() }
    }

    pub fn epochs(&self) -> usize {
        self.constraints.len()
    }

    pub fn final_constraint(&self) -> Option<&ConstraintField> {
        self.constraints.last()
    }

    /// Uniform average of the stored learner densities.
    pub fn learner_mixture(&self) -> Result<VisitationField> {
        let sum = aggregate_density(&self.learner_densities)?;
        let n = self.learner_densities.len() as f64;
        Ok(VisitationField { density: sum.density.map(|v| v / n) })
    }

    /// Cells where learner mixture plus expert density reach `min_density`.
    pub fn visited_support(&self, min_density: f64) -> Result<BoolMask> {
        let learner = self.learner_mixture()?;
        let total = learner.density.zip_with(&self.expert_density.density, |a, b| a + b)?;
        BoolMask::new(*total.grid(), total.values().iter().map(|&v| v >= min_density).collect())
    }
}

/// Soft-optimal visitation of every task under `constraint`, summed.
pub fn solve_tasks(
    mdp: &TabularMdp,
    tasks: &[Task],
    constraint: &BoolMask,
    penalty: f64,
    temperature: f64,
) -> Result<VisitationField> {
    let fields = tasks
        .par_iter()
        .map(|task| {
            let start = mdp.start_index(task)?;
            if constraint.get(start) {
                return Err(Error::Infeasible { task: task.id, reason: "start cell is constrained".into() });
            }
            let sol = soft_cvi(mdp, task, constraint, penalty, temperature)?;
            if all_actions_penalized(mdp, constraint, start) {
                return Err(Error::Infeasible { task: task.id, reason: "every action from the start is penalized".into() });
            }
            visitation_exact(mdp, &sol.policy, task)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_density(&fields)
}

fn all_actions_penalized(mdp: &TabularMdp, constraint: &BoolMask, start: usize) -> bool {
    (0..mdp.actions.len()).all(|a| mdp.kernel.row(start, a).iter().any(|&t| constraint.get(t as usize)))
}

/// One outer iteration (`epoch ≥ 1`); appends to `history`.
pub fn icl_round(history: &mut IclHistory, config: &IclConfig, mdp: &TabularMdp, epoch: usize) -> Result<()> {
    if epoch == 0 || epoch != history.epochs() + 1 {
        return Err(Error::Config(format!("epoch {epoch} does not follow {} stored epochs", history.epochs())));
    }
    let current = match history.final_constraint() {
        Some(c) => c.clone(),
        None => ConstraintField::flat(mdp.grid, config.threshold),
    };
    let mask = current.unsafe_mask();
    let learner = solve_tasks(mdp, &config.tasks, &mask, config.penalty, config.temperature)?;
    let metrics = EpochMetrics {
        epoch,
        unsafe_cells: 0,
        learner_mass_in_constraint: learner.mass_in(&mask),
        learner_mass: learner.mass(),
    };
    history.learner_densities.push(learner);
    let mixture = history.learner_mixture()?;
    let constraint = optimal_classifier(&mixture, &history.expert_density, config.epsilon, config.threshold)?;
    history.metrics.push(EpochMetrics { unsafe_cells: constraint.unsafe_mask().count(), ..metrics });
    history.constraints.push(constraint);
    Ok(())
}

/// Full pipeline: experts solve against the true failure mask, then
/// `config.epochs` rounds of learning. Every start must lie outside `brt`.
pub fn run_mt_icl(
    config: &IclConfig,
    model: &ControlAffineModel,
    grid: &Grid3,
    params: &MdpParams,
    failure: &BoolMask,
    brt: &BrtResult,
) -> Result<IclHistory> {
    config.validate()?;
    grid.ensure_same(failure.grid())?;
    let mdp = TabularMdp::new(*grid, *model, *params)?;
    let offending = starts_inside(&mdp, &config.tasks, &brt.unsafe_set)?;
    if !offending.is_empty() {
        return Err(Error::Config(format!("task starts inside the tube: {offending:?}")));
    }
    let expert = solve_tasks(&mdp, &config.tasks, failure, config.penalty, config.temperature)?;
    run_icl_with_expert(config, &mdp, expert)
}

/// Ids of tasks whose start cell lies in `tube`.
pub fn starts_inside(mdp: &TabularMdp, tasks: &[Task], tube: &BoolMask) -> Result<Vec<usize>> {
    mdp.grid.ensure_same(tube.grid())?;
    let mut ids = Vec::new();
    for task in tasks {
        if tube.get(mdp.start_index(task)?) {
            ids.push(task.id);
        }
    }
    Ok(ids)
}

/// The learning loop alone, for an expert density computed elsewhere
/// (for instance from logged demonstrations).
pub fn run_icl_with_expert(config: &IclConfig, mdp: &TabularMdp, expert: VisitationField) -> Result<IclHistory> {
    config.validate()?;
    mdp.grid.ensure_same(expert.density.grid())?;
    let mut history = IclHistory::new(expert);
    for epoch in 1..=config.epochs {
        icl_round(&mut history, config, mdp, epoch)?;
    }
    Ok(history)
}
