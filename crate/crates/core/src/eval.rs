//! Scoring learned constraints and comparing tubes across models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ControlAffineModel;
use crate::error::{Error, Result};
use crate::grid::{set_metrics, BoolMask, Grid3, ScalarField};
use crate::icl::ConstraintField;
use crate::reachability::{brt_of_set, solve_brt, BrtResult, Obstacle, SolverSettings};
use crate::reachability::failure_sdf;
use crate::tasks::{expected_return, soft_cvi, visitation_exact, MdpParams, TabularMdp, Task};

/// Which cells a report counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    FullGrid,
    VisitedSupport,
}

/// Confusion-matrix scores with "unsafe" as the positive class. Ratios whose
/// denominator is zero are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub restriction: Restriction,
}

impl ClassificationReport {
    pub fn support(&self) -> usize {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classification_report(
    predicted: &BoolMask,
    labels: &BoolMask,
    restriction: Option<&BoolMask>,
) -> Result<ClassificationReport> {
    predicted.grid().ensure_same(labels.grid())?;
    if let Some(r) = restriction {
        predicted.grid().ensure_same(r.grid())?;
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for idx in 0..predicted.bits().len() {
        if restriction.is_some_and(|r| !r.get(idx)) {
            continue;
        }
        match (predicted.get(idx), labels.get(idx)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(ClassificationReport {
        accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
        precision,
        recall,
        f1,
        iou: ratio(tp, tp + fp + fn_),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        restriction: if restriction.is_some() { Restriction::VisitedSupport } else { Restriction::FullGrid },
    })
}

/// Samples per axis used for level-set volumes.
pub const VOLUME_SAMPLES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestingPair {
    pub smaller: String,
    pub larger: String,
    pub frac_smaller_in_larger: f64,
    /// Cell-count ratio `|larger| / |smaller|`.
    pub cell_volume_ratio: f64,
    /// Ratio of the measures of `{V < 0}` under trilinear interpolation.
    pub level_set_volume_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestingReport {
    pub names: Vec<String>,
    pub cell_counts: Vec<usize>,
    pub level_set_volumes: Vec<f64>,
    pub pairs: Vec<NestingPair>,
}

impl NestingReport {
    /// Every adjacent pair contained to at least `min_containment`.
    pub fn nested(&self, min_containment: f64) -> bool {
        self.pairs.iter().all(|p| p.frac_smaller_in_larger >= min_containment)
    }

    pub fn level_set_volumes_increasing(&self) -> bool {
        self.level_set_volumes.windows(2).all(|w| w[1] > w[0])
    }

    pub fn cell_counts_increasing(&self) -> bool {
        self.cell_counts.windows(2).all(|w| w[1] > w[0])
    }
}

/// Containment and volume growth along a chain of tubes, most agile first.
pub fn nesting_report(brts: &[(&str, &BrtResult)]) -> Result<NestingReport> {
    let first = brts.first().ok_or_else(|| Error::Config("nesting needs at least one tube".into()))?;
    let grid = *first.1.value.grid();
    for (_, b) in brts {
        grid.ensure_same(b.value.grid())?;
    }
    let volumes = brts
        .iter()
        .map(|(_, b)| b.value.sublevel_volume(0.0, VOLUME_SAMPLES))
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<usize> = brts.iter().map(|(_, b)| b.unsafe_set.count()).collect();
    let mut pairs = Vec::new();
    for i in 1..brts.len() {
        let m = set_metrics(&brts[i - 1].1.unsafe_set, &brts[i].1.unsafe_set)?;
        pairs.push(NestingPair {
            smaller: brts[i - 1].0.to_string(),
            larger: brts[i].0.to_string(),
            frac_smaller_in_larger: m.frac_a_in_b,
            cell_volume_ratio: volume_ratio(counts[i] as f64, counts[i - 1] as f64),
            level_set_volume_ratio: volume_ratio(volumes[i], volumes[i - 1]),
        });
    }
    Ok(NestingReport {
        names: brts.iter().map(|(n, _)| n.to_string()).collect(),
        cell_counts: counts,
        level_set_volumes: volumes,
        pairs,
    })
}

fn volume_ratio(larger: f64, smaller: f64) -> f64 {
    if smaller == 0.0 {
        if larger == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        larger / smaller
    }
}

/// Pointwise minimum: the induced unsafe mask is the intersection.
pub fn intersect_constraints(constraints: &[ConstraintField]) -> Result<ConstraintField> {
    let first = constraints.first().ok_or_else(|| Error::Config("no constraints to intersect".into()))?;
    let mut values: ScalarField = first.values.clone();
    for c in &constraints[1..] {
        if c.threshold != first.threshold {
            return Err(Error::Config("constraints use different thresholds".into()));
        }
        values = values.zip_with(&c.values, f64::min)?;
    }
    ConstraintField::new(values, first.threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTask {
    pub task: usize,
    pub return_transferred: f64,
    pub return_own: f64,
    pub failure_mass_transferred: f64,
    pub failure_mass_own: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source: String,
    pub target: String,
    pub per_task: Vec<TransferTask>,
    /// Tasks whose start violates the transferred constraint.
    pub infeasible: Vec<usize>,
    /// `|g_a(C_b) ∩ BRT_a| / |BRT_a|`.
    pub containment_of_own: f64,
    pub lifted_cells: usize,
    pub own_cells: usize,
}

impl TransferReport {
    pub fn mean_return_transferred(&self) -> f64 {
        mean(self.per_task.iter().map(|t| t.return_transferred))
    }

    pub fn mean_return_own(&self) -> f64 {
        mean(self.per_task.iter().map(|t| t.return_own))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Plans for model `a` under a constraint learned on another model and
/// under `a`'s own tube, and lifts the foreign constraint through `a`'s
/// dynamics.
#[allow(clippy::too_many_arguments)]
pub fn transfer_experiment(
    source: &str,
    target: &str,
    model_a: &ControlAffineModel,
    constraint_b: &BoolMask,
    tasks: &[Task],
    obstacle: &Obstacle,
    params: &MdpParams,
    settings: &SolverSettings,
) -> Result<TransferReport> {
    let grid: Grid3 = *constraint_b.grid();
    let own = solve_brt(model_a, &failure_sdf(obstacle, &grid), settings)?;
    let failure = obstacle.failure_mask(&grid);
    let mdp = TabularMdp::new(grid, *model_a, *params)?;
    let mut infeasible = Vec::new();
    let mut feasible = Vec::new();
    for task in tasks {
        let start = mdp.start_index(task)?;
        if constraint_b.get(start) || own.unsafe_set.get(start) {
            infeasible.push(task.id);
        } else {
            feasible.push(*task);
        }
    }
    if feasible.is_empty() {
        return Err(Error::Infeasible {
            task: tasks.first().map_or(0, |t| t.id),
            reason: "no task is feasible under the transferred constraint".into(),
        });
    }
    let per_task = feasible
        .par_iter()
        .map(|task| {
            let run = |mask: &BoolMask| -> Result<(f64, f64)> {
                let sol = soft_cvi(&mdp, task, mask, params.penalty, params.temperature)?;
                let visits = visitation_exact(&mdp, &sol.policy, task)?;
                Ok((expected_return(&mdp, task, &visits), visits.mass_in(&failure)))
            };
            let (rt, ft) = run(constraint_b)?;
            let (ro, fo) = run(&own.unsafe_set)?;
            Ok(TransferTask {
                task: task.id,
                return_transferred: rt,
                return_own: ro,
                failure_mass_transferred: ft,
                failure_mass_own: fo,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lifted = brt_of_set(model_a, constraint_b, settings)?;
    let m = set_metrics(&own.unsafe_set, &lifted.unsafe_set)?;
    Ok(TransferReport {
        source: source.to_string(),
        target: target.to_string(),
        per_task,
        infeasible,
        containment_of_own: m.frac_a_in_b,
        lifted_cells: lifted.unsafe_set.count(),
        own_cells: own.unsafe_set.count(),
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { mean: f64::NAN, std: f64::NAN, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    Summary { mean, std: var.sqrt(), n }
}
