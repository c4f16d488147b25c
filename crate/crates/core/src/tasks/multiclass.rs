//! Multiclass classification as a degenerate structured task.

use super::{Feature, StructureKey, StructuredTask, TaskError, TaskInput, TaskInstance, MAX_ENUMERATION};
use crate::hashing::{hash_feature, FeatureKey};
use crate::model::ModelVector;
use crate::sparse::SparseVec;

/// Classes are 0..num_classes; the joint map replicates the input bag per
/// class ("emit" namespace, payload = class LE bytes || feature id), and the
/// loss is 0/1.
pub struct MulticlassTask {
    num_classes: u32,
    hash_bits: u32,
}

impl MulticlassTask {
    pub fn new(num_classes: u32, hash_bits: u32) -> Self {
        assert!(num_classes >= 1);
        MulticlassTask { num_classes, hash_bits }
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    fn emit_index(&self, class: u32, feature: &Feature, scratch: &mut Vec<u8>) -> u32 {
        scratch.clear();
        scratch.extend_from_slice(&class.to_le_bytes());
        scratch.extend_from_slice(&feature.id);
        hash_feature(FeatureKey { namespace: "emit", payload: scratch }, self.hash_bits)
    }

    fn bag<'a>(&self, inst: &'a TaskInstance) -> Result<&'a [Feature], TaskError> {
        match &inst.input {
            TaskInput::Bag(f) => Ok(f),
            TaskInput::Tokens(_) => Err(TaskError::IncompatibleStructure {
                id: inst.id,
                reason: "expected a flat feature bag".into(),
            }),
        }
    }

    fn class_of(&self, inst: &TaskInstance, y: &StructureKey) -> Result<u32, TaskError> {
        match y {
            StructureKey::Class(c) if *c < self.num_classes => Ok(*c),
            StructureKey::Class(c) => Err(TaskError::IncompatibleStructure {
                id: inst.id,
                reason: format!("class {c} out of range 0..{}", self.num_classes),
            }),
            StructureKey::Tags(_) => Err(TaskError::IncompatibleStructure {
                id: inst.id,
                reason: "expected a class structure".into(),
            }),
        }
    }

    /// Raw (unaugmented) score of one class.
    fn class_score(&self, w: &ModelVector, bag: &[Feature], class: u32, scratch: &mut Vec<u8>) -> f64 {
        bag.iter()
            .map(|f| w.get(self.emit_index(class, f, scratch)) * f.value)
            .sum()
    }

    fn decode(&self, w: &ModelVector, inst: &TaskInstance, augment: bool) -> (u32, f64, f64) {
        let bag = self.bag(inst).expect("decode requires a feature bag");
        let gold = match &inst.gold {
            StructureKey::Class(c) => *c,
            _ => panic!("multiclass gold must be a class"),
        };
        let mut scratch = Vec::new();
        let mut best_class = 0u32;
        let mut best_score = f64::NEG_INFINITY;
        let mut gold_score = 0.0;
        for c in 0..self.num_classes {
            let raw = self.class_score(w, bag, c, &mut scratch);
            if c == gold {
                gold_score = raw;
            }
            let s = raw + if augment && c != gold { 1.0 } else { 0.0 };
            // strict > keeps the smallest class on ties
            if s > best_score {
                best_score = s;
                best_class = c;
            }
        }
        (best_class, best_score, gold_score)
    }
}

impl StructuredTask for MulticlassTask {
    fn joint_features(&self, inst: &TaskInstance, y: &StructureKey) -> Result<SparseVec, TaskError> {
        let bag = self.bag(inst)?;
        let c = self.class_of(inst, y)?;
        let mut scratch = Vec::new();
        let pairs = bag
            .iter()
            .map(|f| (self.emit_index(c, f, &mut scratch), f.value))
            .collect();
        Ok(SparseVec::from_unsorted(pairs))
    }

    fn phi_diff(&self, inst: &TaskInstance, y: &StructureKey) -> Result<SparseVec, TaskError> {
        let bag = self.bag(inst)?;
        let c = self.class_of(inst, y)?;
        let gold = self.class_of(inst, &inst.gold)?;
        if c == gold {
            return Ok(SparseVec::empty());
        }
        let mut scratch = Vec::new();
        let mut pairs = Vec::with_capacity(2 * bag.len());
        for f in bag {
            pairs.push((self.emit_index(gold, f, &mut scratch), f.value));
            pairs.push((self.emit_index(c, f, &mut scratch), -f.value));
        }
        Ok(SparseVec::from_unsorted(pairs))
    }

    fn loss(&self, gold: &StructureKey, y: &StructureKey) -> Result<f64, TaskError> {
        match (gold, y) {
            (StructureKey::Class(g), StructureKey::Class(c)) => Ok(if g == c { 0.0 } else { 1.0 }),
            _ => Err(TaskError::ShapeMismatch),
        }
    }

    fn loss_augmented_argmax(&self, w: &ModelVector, inst: &TaskInstance) -> (StructureKey, f64) {
        let (best, best_score, gold_score) = self.decode(w, inst, true);
        (StructureKey::Class(best), best_score - gold_score)
    }

    fn predict(&self, w: &ModelVector, inst: &TaskInstance) -> StructureKey {
        StructureKey::Class(self.decode(w, inst, false).0)
    }

    fn enumerate_structures(&self, _inst: &TaskInstance) -> Result<Vec<StructureKey>, TaskError> {
        if self.num_classes as u64 > MAX_ENUMERATION {
            return Err(TaskError::EnumerationTooLarge {
                size: self.num_classes as u64,
                limit: MAX_ENUMERATION,
            });
        }
        Ok((0..self.num_classes).map(StructureKey::Class).collect())
    }
}
