//! Random problem builders used across the test suites.

use bqstruct_core::config::TrainConfig;
use bqstruct_core::dual::{InstanceState, WorkingSetEntry};
use bqstruct_core::model::ModelVector;
use bqstruct_core::tasks::{Feature, StructureKey, TaskInput, TaskInstance};
use bqstruct_core::{DualState, SparseVec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Small learnable multiclass dataset: every class has two indicative
/// features, every instance mixes in a few shared noise features.
pub fn gen_multiclass_problem(
    seed: u64,
    classes: u32,
    per_class: usize,
    noise_feats: usize,
) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for c in 0..classes {
        for _ in 0..per_class {
            let mut feats = vec![
                Feature::new(format!("ind{c}").into_bytes(), 1.0),
                Feature::new(
                    format!("ind{c}x").into_bytes(),
                    rng.random_range(0.5..1.5),
                ),
            ];
            for _ in 0..noise_feats {
                let pool = 4 * noise_feats.max(1);
                let nf = rng.random_range(0..pool);
                feats.push(Feature::new(
                    format!("noise{nf}").into_bytes(),
                    rng.random_range(-0.4..0.4),
                ));
            }
            out.push(TaskInstance {
                id: out.len(),
                input: TaskInput::Bag(feats),
                gold: StructureKey::Class(c),
            });
        }
    }
    out
}

/// Random sparse vector with indices below 2^hash_bits. Never empty.
pub fn random_sparse(rng: &mut ChaCha8Rng, hash_bits: u32, max_nnz: usize) -> SparseVec {
    let dim = 1u32 << hash_bits;
    let nnz = rng.random_range(1..=max_nnz.max(1));
    let items: Vec<(u32, f64)> = (0..nnz)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (rng.random_range(0..dim), sign * rng.random_range(0.2..1.0))
        })
        .collect();
    SparseVec::from_unsorted(items)
}

/// Random working-set snapshot across `workers` shards. Roughly a third of
/// the entries sit exactly at alpha = 0 so bound behavior gets exercised.
pub fn random_dual_states(
    seed: u64,
    workers: usize,
    instances_per: usize,
    entries_per: usize,
    cfg: &TrainConfig,
) -> Vec<DualState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_id = 0usize;
    (0..workers)
        .map(|_| {
            let instances = (0..instances_per)
                .map(|_| {
                    let entries: Vec<WorkingSetEntry> = (0..entries_per)
                        .map(|e| {
                            let mut entry = WorkingSetEntry::new(
                                StructureKey::Class(e as u32 + 1),
                                random_sparse(&mut rng, cfg.hash_bits, 6),
                                rng.random_range(0.5..2.0),
                            );
                            if !rng.random_bool(1.0 / 3.0) {
                                entry.alpha = rng.random_range(0.01..0.3);
                            }
                            entry
                        })
                        .collect();
                    let state = InstanceState {
                        instance_id: next_id,
                        gold: StructureKey::Class(0),
                        alpha_sum: entries.iter().map(|e| e.alpha).sum(),
                        entries,
                    };
                    next_id += 1;
                    state
                })
                .collect();
            DualState { instances, cfg: cfg.clone() }
        })
        .collect()
}

pub fn random_model(seed: u64, hash_bits: u32) -> ModelVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ModelVector::zeros(hash_bits);
    for v in w.as_mut_slice() {
        *v = rng.random_range(-0.5..0.5);
    }
    w
}
