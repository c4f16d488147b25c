//! Reference methods the trainer is compared against: the distributed
//! perceptron with iterative parameter mixing, and one-shot averaging of
//! independently trained models.

use crate::comm::Communicator;
use crate::config::TrainConfig;
use crate::driver::{train, DriverError};
use crate::model::ModelVector;
use crate::tasks::{StructuredTask, TaskInstance};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixingWeights {
    /// every worker contributes 1/K
    Uniform,
    /// workers contribute in proportion to their shard size
    ShardSize,
}

#[derive(Clone, Debug)]
pub struct PerceptronConfig {
    pub rounds: usize,
    pub epochs_per_round: usize,
    /// mix each pass's running average instead of its final weights
    pub averaged: bool,
    pub mixing: MixingWeights,
    pub hash_bits: u32,
    pub rng_seed: u64,
}

impl PerceptronConfig {
    pub fn new(hash_bits: u32) -> Self {
        PerceptronConfig {
            rounds: 10,
            epochs_per_round: 1,
            averaged: false,
            mixing: MixingWeights::Uniform,
            hash_bits,
            rng_seed: 42,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid mixing weights: {reason}")]
pub struct MixingError {
    pub reason: String,
}

/// Convex combination of models. Weights must be non-negative and sum to 1
/// within 1e-9.
pub fn mix_parameters(
    models: &[ModelVector],
    weights: &[f64],
) -> Result<ModelVector, MixingError> {
    if models.is_empty() {
        return Err(MixingError { reason: "no models".into() });
    }
    if models.len() != weights.len() {
        return Err(MixingError {
            reason: format!("{} models but {} weights", models.len(), weights.len()),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(MixingError { reason: "weights must be non-negative".into() });
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(MixingError { reason: format!("weights sum to {total}, not 1") });
    }
    let mut out = ModelVector::zeros(models[0].hash_bits());
    for (m, &mu) in models.iter().zip(weights) {
        assert_eq!(m.len(), out.len(), "mixed models must share dimensions");
        out.add_scaled_dense(m.as_slice(), mu);
    }
    Ok(out)
}

/// One pass of perceptron updates over `order`ed instances, starting and
/// ending in `w`. When `avg` is given it receives sum_t t * g_t, which
/// turns into the pass's running average without storing snapshots:
///   avg = w_end + ((w_end - w_start) - u) / T
pub fn perceptron_local_pass<T: StructuredTask>(
    task: &T,
    shard: &[TaskInstance],
    order: &[usize],
    w: &mut ModelVector,
    mut avg: Option<&mut ModelVector>,
) -> Result<usize, DriverError> {
    let mut mistakes = 0usize;
    for (step, &idx) in order.iter().enumerate() {
        let inst = &shard[idx];
        let guess = task.predict(w, inst);
        if guess == inst.gold {
            continue;
        }
        mistakes += 1;
        let g = task.phi_diff(inst, &guess).map_err(DriverError::Task)?;
        w.add_scaled_sparse(&g, 1.0);
        if let Some(u) = avg.as_deref_mut() {
            u.add_scaled_sparse(&g, (step + 1) as f64);
        }
    }
    Ok(mistakes)
}

/// Distributed perceptron: every round each worker runs local passes from
/// the shared model, then the models are mixed by a weighted allreduce.
/// `on_round` sees the round index, the global mistake count of that
/// round's passes, and the mixed model.
pub fn train_distributed_perceptron<T, C, F>(
    task: &T,
    shard: &[TaskInstance],
    cfg: &PerceptronConfig,
    comm: &C,
    mut on_round: F,
) -> Result<ModelVector, DriverError>
where
    T: StructuredTask,
    C: Communicator + ?Sized,
    F: FnMut(usize, usize, &ModelVector),
{
    let mut counts = [shard.len() as f64];
    comm.allreduce_sum_scalars(&mut counts)?;
    let global_count = counts[0];
    let mut w = ModelVector::zeros(cfg.hash_bits);
    if global_count == 0.0 {
        return Ok(w);
    }
    let mu = match cfg.mixing {
        MixingWeights::Uniform => 1.0 / comm.size() as f64,
        MixingWeights::ShardSize => shard.len() as f64 / global_count,
    };

    for round in 0..cfg.rounds {
        // one order covering every epoch, so the average's step indices run
        // through the whole round
        let mut order = Vec::with_capacity(shard.len() * cfg.epochs_per_round);
        for epoch in 0..cfg.epochs_per_round {
            let mut perm: Vec<usize> = (0..shard.len()).collect();
            perm.shuffle(&mut pass_rng(cfg.rng_seed, comm.rank(), round, epoch));
            order.extend_from_slice(&perm);
        }
        let w_start = cfg.averaged.then(|| w.clone());
        let mut u = cfg.averaged.then(|| ModelVector::zeros(cfg.hash_bits));
        let mistakes = perceptron_local_pass(task, shard, &order, &mut w, u.as_mut())?;
        let steps = order.len();
        if let (Some(w_start), Some(u)) = (w_start, u) {
            if steps > 0 {
                // replace w by the pass average before mixing
                let t = steps as f64;
                let mut avg = w.clone();
                avg.add_scaled_dense(w.as_slice(), 1.0 / t);
                avg.add_scaled_dense(w_start.as_slice(), -1.0 / t);
                avg.add_scaled_dense(u.as_slice(), -1.0 / t);
                w = avg;
            }
        }

        w.scale(mu);
        comm.allreduce_sum_vec(w.as_mut_slice())
            .map_err(DriverError::Comm)?;
        let mut round_stats = [mistakes as f64];
        comm.allreduce_sum_scalars(&mut round_stats)?;
        on_round(round, round_stats[0] as usize, &w);
    }
    Ok(w)
}

/// Trains one model per worker in isolation (single-worker settings, theta
/// of 1) and averages them once at the end.
pub fn train_simple_average<T, C>(
    task: &T,
    shard: &[TaskInstance],
    cfg: &TrainConfig,
    comm: &C,
) -> Result<ModelVector, DriverError>
where
    T: StructuredTask,
    C: Communicator + ?Sized,
{
    let mut counts = [shard.len() as f64];
    comm.allreduce_sum_scalars(&mut counts)?;
    if counts[0] == 0.0 {
        return Ok(ModelVector::zeros(cfg.hash_bits));
    }

    let mut solo_cfg = cfg.clone();
    solo_cfg.workers = 1;
    solo_cfg.theta = 1.0;
    let solo_comms = crate::comm::inproc::InProcCluster::handles(1);
    let out = train(task, shard, &solo_cfg, &solo_comms[0])?;

    let mut w = out.model;
    w.scale(1.0 / comm.size() as f64);
    comm.allreduce_sum_vec(w.as_mut_slice())?;
    Ok(w)
}

fn pass_rng(seed: u64, rank: usize, round: usize, epoch: usize) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(rank as u64).to_le_bytes());
    bytes[16..24].copy_from_slice(&(round as u64).to_le_bytes());
    bytes[24..28].copy_from_slice(&(epoch as u32).to_le_bytes());
    bytes[28..32].copy_from_slice(b"perc");
    ChaCha8Rng::from_seed(bytes)
}
