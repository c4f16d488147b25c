//! Structured tasks: joint features, losses, and inference.
//!
//! A task maps (input, structure) pairs into the hashed weight space and
//! supplies the loss-augmented decoder that drives working-set growth.

mod chain;
mod multiclass;

pub use chain::ChainTask;
pub use multiclass::MulticlassTask;

use crate::model::ModelVector;
use crate::sparse::SparseVec;
use thiserror::Error;

/// Largest structure space `enumerate_structures` will materialize.
pub const MAX_ENUMERATION: u64 = 100_000;

/// One input feature: an opaque identity plus a value. The identity bytes
/// feed the hashed key payload together with the label under consideration.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub id: Vec<u8>,
    pub value: f64,
}

impl Feature {
    pub fn new(id: impl Into<Vec<u8>>, value: f64) -> Self {
        Feature { id: id.into(), value }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskInput {
    /// Flat feature bag (multiclass).
    Bag(Vec<Feature>),
    /// Per-token feature bags (linear chain).
    Tokens(Vec<Vec<Feature>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskInstance {
    /// Global index of the instance in the corpus; shards keep it stable.
    pub id: usize,
    pub input: TaskInput,
    pub gold: StructureKey,
}

/// Canonical structure identity. Ordering on `Tags` is lexicographic over
/// positions, which is the tie-break order used everywhere.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StructureKey {
    Class(u32),
    Tags(Vec<u32>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("instance {id}: structure incompatible: {reason}")]
    IncompatibleStructure { id: usize, reason: String },
    #[error("loss undefined between structures of different shapes")]
    ShapeMismatch,
    #[error("structure space of size {size} exceeds enumeration limit {limit}")]
    EnumerationTooLarge { size: u64, limit: u64 },
}

pub trait StructuredTask {
    /// Joint feature map of (input, structure), hashed into 2^d dims.
    fn joint_features(&self, inst: &TaskInstance, y: &StructureKey) -> Result<SparseVec, TaskError>;

    /// joint(gold) - joint(y), computed directly from the positions where
    /// the two structures disagree.
    fn phi_diff(&self, inst: &TaskInstance, y: &StructureKey) -> Result<SparseVec, TaskError>;

    /// Structured loss between a gold structure and a candidate.
    fn loss(&self, gold: &StructureKey, y: &StructureKey) -> Result<f64, TaskError>;

    /// Most violated structure: argmax_y [ w.joint(x, y) + loss(gold, y) ],
    /// with the violation loss(gold, yhat) - w.phi_diff(yhat) returned
    /// alongside. The violation is always >= 0 because gold is a candidate.
    /// Ties go to the smallest class id / lexicographically smallest tags.
    fn loss_augmented_argmax(&self, w: &ModelVector, inst: &TaskInstance) -> (StructureKey, f64);

    /// Plain decoding: the same machinery with the loss term zeroed.
    fn predict(&self, w: &ModelVector, inst: &TaskInstance) -> StructureKey;

    /// All structures for this instance in deterministic (lexicographic)
    /// order. Errors if the space exceeds `MAX_ENUMERATION`.
    fn enumerate_structures(&self, inst: &TaskInstance) -> Result<Vec<StructureKey>, TaskError>;
}

/// Either concrete task behind one dispatchable type, so runner code does
/// not have to be generic over the task.
pub enum AnyTask {
    Multiclass(MulticlassTask),
    Chain(ChainTask),
}

impl StructuredTask for AnyTask {
    fn joint_features(&self, inst: &TaskInstance, y: &StructureKey) -> Result<SparseVec, TaskError> {
        match self {
            AnyTask::Multiclass(t) => t.joint_features(inst, y),
            AnyTask::Chain(t) => t.joint_features(inst, y),
        }
    }

    fn phi_diff(&self, inst: &TaskInstance, y: &StructureKey) -> Result<SparseVec, TaskError> {
        match self {
            AnyTask::Multiclass(t) => t.phi_diff(inst, y),
            AnyTask::Chain(t) => t.phi_diff(inst, y),
        }
    }

    fn loss(&self, gold: &StructureKey, y: &StructureKey) -> Result<f64, TaskError> {
        match self {
            AnyTask::Multiclass(t) => t.loss(gold, y),
            AnyTask::Chain(t) => t.loss(gold, y),
        }
    }

    fn loss_augmented_argmax(&self, w: &ModelVector, inst: &TaskInstance) -> (StructureKey, f64) {
        match self {
            AnyTask::Multiclass(t) => t.loss_augmented_argmax(w, inst),
            AnyTask::Chain(t) => t.loss_augmented_argmax(w, inst),
        }
    }

    fn predict(&self, w: &ModelVector, inst: &TaskInstance) -> StructureKey {
        match self {
            AnyTask::Multiclass(t) => t.predict(w, inst),
            AnyTask::Chain(t) => t.predict(w, inst),
        }
    }

    fn enumerate_structures(&self, inst: &TaskInstance) -> Result<Vec<StructureKey>, TaskError> {
        match self {
            AnyTask::Multiclass(t) => t.enumerate_structures(inst),
            AnyTask::Chain(t) => t.enumerate_structures(inst),
        }
    }
}

/// Test accuracy under a model: exact-match fraction for `Class` golds,
/// per-token fraction for `Tags` golds. NaN on an empty set.
pub fn accuracy<T: StructuredTask>(task: &T, w: &ModelVector, data: &[TaskInstance]) -> f64 {
    let mut correct = 0u64;
    let mut total = 0u64;
    for inst in data {
        let pred = task.predict(w, inst);
        match (&inst.gold, &pred) {
            (StructureKey::Class(g), StructureKey::Class(p)) => {
                total += 1;
                correct += (g == p) as u64;
            }
            (StructureKey::Tags(g), StructureKey::Tags(p)) => {
                total += g.len() as u64;
                correct += g.iter().zip(p).filter(|(a, b)| a == b).count() as u64;
            }
            _ => total += 1,
        }
    }
    if total == 0 {
        f64::NAN
    } else {
        correct as f64 / total as f64
    }
}
