//! Dual state of the working-set QP.
//!
//! The dual objective over all workers is
//!   f(alpha) = 1/2 ||w||^2 + 1/(4c) * sum_i s_i^2 - sum_{i,y} alpha_{i,y} * loss_{i,y}
//! with w = sum alpha * phi and s_i the per-instance alpha sum. The matrices
//! behind it are never materialized; every entry caches its phi vector.

use crate::config::TrainConfig;
use crate::model::ModelVector;
use crate::sparse::SparseVec;
use crate::tasks::{StructureKey, StructuredTask, TaskError, TaskInstance};

/// One dual variable: a structure in some instance's working set.
#[derive(Clone, Debug)]
pub struct WorkingSetEntry {
    pub structure: StructureKey,
    /// joint(x, gold) - joint(x, structure), cached at insertion.
    pub phi: SparseVec,
    /// loss(gold, structure); zero iff the structure is gold.
    pub delta: f64,
    /// Dual value, kept >= 0 exactly (clamped, never approximately).
    pub alpha: f64,
    pub phi_sq_norm: f64,
    /// Consecutive outer iterations this entry has sat at alpha == 0.
    pub zero_iters: u32,
}

impl WorkingSetEntry {
    pub fn new(structure: StructureKey, phi: SparseVec, delta: f64) -> Self {
        let phi_sq_norm = phi.sq_norm();
        WorkingSetEntry {
            structure,
            phi,
            delta,
            alpha: 0.0,
            phi_sq_norm,
            zero_iters: 0,
        }
    }
}

/// Working set and alpha sum of a single instance.
#[derive(Clone, Debug)]
pub struct InstanceState {
    pub instance_id: usize,
    pub gold: StructureKey,
    pub entries: Vec<WorkingSetEntry>,
    /// s_i, maintained incrementally; reconciled against the entry sum in
    /// debug audits (drift tolerance 1e-9 relative).
    pub alpha_sum: f64,
}

impl InstanceState {
    pub fn find_entry(&self, key: &StructureKey) -> Option<usize> {
        self.entries.iter().position(|e| &e.structure == key)
    }

    pub fn recompute_alpha_sum(&self) -> f64 {
        self.entries.iter().map(|e| e.alpha).sum()
    }
}

/// One worker's shard of the dual problem.
#[derive(Clone, Debug)]
pub struct DualState {
    pub instances: Vec<InstanceState>,
    pub cfg: TrainConfig,
}

impl DualState {
    /// Empty working sets for a shard; instances[j] mirrors shard[j].
    pub fn new(shard: &[TaskInstance], cfg: TrainConfig) -> Self {
        DualState {
            instances: shard
                .iter()
                .map(|inst| InstanceState {
                    instance_id: inst.id,
                    gold: inst.gold.clone(),
                    entries: Vec::new(),
                    alpha_sum: 0.0,
                })
                .collect(),
            cfg,
        }
    }

    pub fn ws_size(&self) -> usize {
        self.instances.iter().map(|i| i.entries.len()).sum()
    }

    /// (sum_i s_i^2, sum alpha * loss) over this shard, in instance order
    /// then entry order. The distributed objective reduces these partials
    /// rank by rank, so the serial path must combine them the same way.
    pub fn objective_partials(&self) -> (f64, f64) {
        let mut ssq = 0.0;
        let mut lin = 0.0;
        for inst in &self.instances {
            ssq += inst.alpha_sum * inst.alpha_sum;
            for e in &inst.entries {
                lin += e.alpha * e.delta;
            }
        }
        (ssq, lin)
    }
}

/// Dual objective over all shards given the synchronized weights. Summation
/// order is fixed: worker rank, then instance, then entry.
pub fn dual_objective(states: &[DualState], w: &ModelVector) -> f64 {
    let mut ssq = 0.0;
    let mut lin = 0.0;
    for s in states {
        let (a, b) = s.objective_partials();
        ssq += a;
        lin += b;
    }
    let c = states.first().map(|s| s.cfg.c).unwrap_or(1.0);
    0.5 * w.sq_norm() + ssq / (4.0 * c) - lin
}

/// Partial derivative of the dual objective with respect to one entry's
/// alpha: w.phi + s_i/(2c) - loss.
pub fn dual_gradient_entry(entry: &WorkingSetEntry, alpha_sum: f64, w: &ModelVector, c: f64) -> f64 {
    w.dot_sparse(&entry.phi) + alpha_sum / (2.0 * c) - entry.delta
}

/// Rebuilds w = sum alpha * phi from scratch. Audit path; the driver keeps
/// w incrementally synchronized instead.
pub fn reconstruct_w(states: &[DualState], hash_bits: u32) -> ModelVector {
    let mut w = ModelVector::zeros(hash_bits);
    for s in states {
        for inst in &s.instances {
            for e in &inst.entries {
                w.add_scaled_sparse(&e.phi, e.alpha);
            }
        }
    }
    w
}

/// Primal objective 1/2 ||w||^2 + c * sum_i xi_i^2 where xi_i is the worst
/// margin violation of instance i (clamped at zero).
pub fn primal_objective<T: StructuredTask>(
    w: &ModelVector,
    data: &[TaskInstance],
    task: &T,
    c: f64,
) -> Result<f64, TaskError> {
    let mut slack_sq = 0.0;
    for inst in data {
        let (_, violation) = task.loss_augmented_argmax(w, inst);
        let xi = violation.max(0.0);
        slack_sq += xi * xi;
    }
    Ok(0.5 * w.sq_norm() + c * slack_sq)
}
