//! Direction subproblem solver.
//!
//! Each outer iteration minimizes g(d) = grad_f(alpha)'d + 1/2 d'Hd over
//! d >= -alpha, where H = theta * Qbar + A/(2c) + lambda * I and Qbar keeps
//! only same-partition blocks of the Gram matrix. Qbar is block diagonal, so
//! the subproblem decomposes per worker and is solved by dual coordinate
//! descent with no communication.

use crate::config::TrainConfig;
use crate::dual::DualState;
use crate::model::ModelVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Coordinate updates whose projected gradient is at most this are skipped.
const PG_SKIP: f64 = 1e-12;
/// An epoch sweep stops the solve early once its max projected gradient
/// falls below this fraction of the first outer iteration's max.
const SWEEP_STOP_RATIO: f64 = 0.1;

/// Direction and its cached images. `d[i][e]` lines up with
/// `dual.instances[i].entries[e]`; entries added later start a fresh solve
/// at zero.
#[derive(Clone, Debug)]
pub struct DirectionState {
    pub d: Vec<Vec<f64>>,
    /// local part of the weight-space image, sum of d * phi over this shard
    pub local_dw: ModelVector,
    /// per-instance sums t_i = sum_y d_{i,y}
    pub t_sums: Vec<f64>,
    /// g(d); non-positive, strictly negative whenever d != 0
    pub g_value: f64,
}

impl DirectionState {
    pub fn zeros(dual: &DualState, hash_bits: u32) -> Self {
        DirectionState {
            d: dual.instances.iter().map(|i| vec![0.0; i.entries.len()]).collect(),
            local_dw: ModelVector::zeros(hash_bits),
            t_sums: vec![0.0; dual.instances.len()],
            g_value: 0.0,
        }
    }
}

/// Per-worker solver memory that survives across outer iterations. The
/// projected-gradient baseline recorded on the first solve scales the
/// early-stop threshold of every later sweep.
#[derive(Clone, Debug, Default)]
pub struct SubsolverMemory {
    pub pg_baseline: Option<f64>,
}

/// Ridge term: lambda_scale * (theta * max ||phi||^2 + 1/(2c)), the scale of
/// the surrogate diagonal, so conditioning does not depend on feature scale.
pub fn effective_lambda(dual: &DualState, cfg: &TrainConfig) -> f64 {
    let max_sq = dual
        .instances
        .iter()
        .flat_map(|i| i.entries.iter())
        .map(|e| e.phi_sq_norm)
        .fold(0.0, f64::max);
    cfg.lambda_scale * (cfg.theta * max_sq + 1.0 / (2.0 * cfg.c))
}

/// One coordinate step on entry (i, e). Returns (applied delta, projected
/// gradient). The feasibility bound alpha + d >= 0 is kept exact: when the
/// bound binds, d is assigned -alpha rather than incremented.
pub fn coordinate_update(
    dir: &mut DirectionState,
    dual: &DualState,
    i: usize,
    e: usize,
    w: &ModelVector,
    cfg: &TrainConfig,
    lambda: f64,
) -> (f64, f64) {
    let inst = &dual.instances[i];
    let entry = &inst.entries[e];
    let two_c = 2.0 * cfg.c;
    let d_cur = dir.d[i][e];

    let grad_f = w.dot_sparse(&entry.phi) + inst.alpha_sum / two_c - entry.delta;
    let g = grad_f
        + cfg.theta * dir.local_dw.dot_sparse(&entry.phi)
        + dir.t_sums[i] / two_c
        + lambda * d_cur;
    let h = cfg.theta * entry.phi_sq_norm + 1.0 / two_c + lambda;

    let slack = entry.alpha + d_cur; // >= 0
    let pg = if slack <= 0.0 && g > 0.0 { 0.0 } else { g };
    if pg.abs() <= PG_SKIP {
        return (0.0, pg);
    }

    let unconstrained = -g / h;
    let new_d = if unconstrained < -slack { -entry.alpha } else { d_cur + unconstrained };
    let delta = new_d - d_cur;
    if delta == 0.0 {
        return (0.0, pg);
    }

    dir.d[i][e] = new_d;
    dir.local_dw.add_scaled_sparse(&entry.phi, delta);
    dir.t_sums[i] += delta;
    let dg = g * delta + 0.5 * h * delta * delta;
    debug_assert!(dg <= 1e-12, "coordinate step must not increase g: dg = {dg}");
    dir.g_value += dg;
    (delta, pg)
}

/// Solves the direction subproblem by randomized coordinate descent: up to
/// `inner_epochs` sweeps over all working-set coordinates, one seeded
/// permutation per sweep.
pub fn solve_direction(
    dual: &DualState,
    w: &ModelVector,
    cfg: &TrainConfig,
    worker_rank: usize,
    outer_iter: usize,
    memory: &mut SubsolverMemory,
) -> DirectionState {
    let mut dir = DirectionState::zeros(dual, cfg.hash_bits);
    let mut coords: Vec<(usize, usize)> = dual
        .instances
        .iter()
        .enumerate()
        .flat_map(|(i, inst)| (0..inst.entries.len()).map(move |e| (i, e)))
        .collect();
    if coords.is_empty() {
        return dir;
    }

    let lambda = effective_lambda(dual, cfg);
    let mut rng = permutation_rng(cfg.rng_seed, worker_rank, outer_iter);
    let mut solve_max_pg = 0.0f64;

    for _epoch in 0..cfg.inner_epochs {
        coords.shuffle(&mut rng);
        let mut sweep_max_pg = 0.0f64;
        let mut updates = 0usize;
        for &(i, e) in &coords {
            let (delta, pg) = coordinate_update(&mut dir, dual, i, e, w, cfg, lambda);
            sweep_max_pg = sweep_max_pg.max(pg.abs());
            updates += (delta != 0.0) as usize;
        }
        solve_max_pg = solve_max_pg.max(sweep_max_pg);
        if updates == 0 {
            break;
        }
        if let Some(base) = memory.pg_baseline {
            if sweep_max_pg < SWEEP_STOP_RATIO * base {
                break;
            }
        }
    }
    if memory.pg_baseline.is_none() {
        memory.pg_baseline = Some(solve_max_pg);
    }

    debug_assert!(dir.g_value <= 1e-12, "g(d) must be non-positive");
    debug_assert!(audit_local_dw(&dir, dual, cfg.hash_bits) <= 1e-6, "local_dw drifted from sum d*phi");
    dir
}

fn permutation_rng(seed: u64, rank: usize, outer_iter: usize) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(rank as u64).to_le_bytes());
    bytes[16..24].copy_from_slice(&(outer_iter as u64).to_le_bytes());
    bytes[24..32].copy_from_slice(b"dirsweep");
    ChaCha8Rng::from_seed(bytes)
}

/// Max-norm gap between the incrementally maintained local_dw and a from-
/// scratch recomputation. Debug audit only.
fn audit_local_dw(dir: &DirectionState, dual: &DualState, hash_bits: u32) -> f64 {
    let mut fresh = ModelVector::zeros(hash_bits);
    for (i, inst) in dual.instances.iter().enumerate() {
        for (e, entry) in inst.entries.iter().enumerate() {
            fresh.add_scaled_sparse(&entry.phi, dir.d[i][e]);
        }
    }
    fresh
        .as_slice()
        .iter()
        .zip(dir.local_dw.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
