//! Structure search by full enumeration.

use bqstruct_core::model::ModelVector;
use bqstruct_core::tasks::{StructureKey, StructuredTask, TaskInstance};

/// Highest-scoring structure by exhaustive search, first maximum wins
/// (enumeration order is the tie-break order). With `augment` the score
/// includes the loss against the instance's reference structure.
pub fn brute_force_argmax<T: StructuredTask>(
    task: &T,
    w: &ModelVector,
    inst: &TaskInstance,
    augment: bool,
) -> (StructureKey, f64) {
    let mut best: Option<(StructureKey, f64)> = None;
    for key in task.enumerate_structures(inst).expect("enumerable task") {
        let mut score = w.dot_sparse(&task.joint_features(inst, &key).expect("joint"));
        if augment {
            score += task.loss(&inst.gold, &key).expect("loss");
        }
        match &best {
            Some((_, s)) if score <= *s => {}
            _ => best = Some((key, score)),
        }
    }
    best.expect("at least one structure")
}

/// The violation the trainer's growth step should see for `inst`: the
/// loss-augmented best score minus the reference structure's score.
pub fn brute_force_violation<T: StructuredTask>(
    task: &T,
    w: &ModelVector,
    inst: &TaskInstance,
) -> (StructureKey, f64) {
    let (key, score) = brute_force_argmax(task, w, inst, true);
    let gold_score = w.dot_sparse(&task.joint_features(inst, &inst.gold).expect("joint"));
    (key, score - gold_score)
}
