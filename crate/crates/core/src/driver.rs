//! Outer training loop.
//!
//! One iteration per worker:
//!   1. inference: grow the working set with each instance's most violated
//!      structure (every `inference_interval` iterations)
//!   2. learning: solve the local direction subproblem
//!   3. comm: allreduce the direction's weight-space image, then one scalar
//!      collective whose finalize hook computes the global step size on
//!      rank 0 and ships it back in a placeholder slot
//!   4. learning: apply the step, clamp, prune exhausted entries
//!   5. comm: scalar collective for the objective and working-set stats
//!
//! All per-iteration communication is one model-sized vector plus two small
//! scalar frames, independent of working-set size.

use crate::comm::{CommError, Communicator, ReduceMode};
use crate::config::{ConfigError, TrainConfig};
use crate::dual::DualState;
use crate::model::ModelVector;
use crate::subsolver::{solve_direction, SubsolverMemory};
use crate::tasks::{StructuredTask, TaskError, TaskInstance};
use std::time::Instant;

/// Relative objective change below this counts toward stall detection.
const REL_CHANGE_TOL: f64 = 1e-6;
/// Consecutive stalled iterations before declaring convergence.
const REL_CHANGE_STREAK: usize = 3;
/// Curvature denominators at or below this make the line search degenerate.
const CURVATURE_FLOOR: f64 = 1e-12;
/// Outer iterations an entry may sit at alpha == 0 before it is pruned.
const PRUNE_AFTER: u32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("communication failed: {0}")]
    Comm(#[from] CommError),
    #[error("inference failed: {0}")]
    Task(#[from] TaskError),
}

/// Per-iteration telemetry. Sizes and counts are global (summed over
/// workers); timings are this worker's.
#[derive(Clone, Debug)]
pub struct IterationStats {
    pub outer_iter: usize,
    /// dual objective after this iteration's update, identical on all ranks
    pub dual_obj: f64,
    pub step_size: f64,
    /// line search hit a zero-curvature direction (no progress possible)
    pub step_degenerate: bool,
    pub inference_ran: bool,
    pub ws_size: usize,
    pub ws_added: usize,
    pub converged: bool,
    pub time_inference_s: f64,
    pub time_learning_s: f64,
    pub time_comm_s: f64,
    pub wall_time_s: f64,
}

/// Mutable per-worker training state.
pub struct WorkerState {
    pub dual: DualState,
    pub w: ModelVector,
    pub memory: SubsolverMemory,
}

impl WorkerState {
    pub fn new(shard: &[TaskInstance], cfg: &TrainConfig) -> Self {
        WorkerState {
            dual: DualState::new(shard, cfg.clone()),
            w: ModelVector::zeros(cfg.hash_bits),
            memory: SubsolverMemory::default(),
        }
    }
}

pub struct TrainOutput {
    pub model: ModelVector,
    pub stats: Vec<IterationStats>,
    pub dual: DualState,
}

/// Adds each instance's most violated structure to its working set when the
/// violation beats the instance's current slack by `tol`. The reference
/// structure never enters. Returns how many entries were added locally.
pub fn grow_working_set<T: StructuredTask>(
    task: &T,
    shard: &[TaskInstance],
    dual: &mut DualState,
    w: &ModelVector,
    tol: f64,
) -> Result<usize, TaskError> {
    let two_c = 2.0 * dual.cfg.c;
    let mut added = 0;
    for (inst, state) in shard.iter().zip(dual.instances.iter_mut()) {
        let (key, violation) = task.loss_augmented_argmax(w, inst);
        if key == state.gold {
            continue;
        }
        let slack = state.alpha_sum / two_c;
        if violation <= slack + tol || state.find_entry(&key).is_some() {
            continue;
        }
        let phi = task.phi_diff(inst, &key)?;
        let delta = task.loss(&state.gold, &key)?;
        state.entries.push(crate::dual::WorkingSetEntry::new(key, phi, delta));
        added += 1;
    }
    Ok(added)
}

/// Everything the exact step-size formula needs. The quadratic along eta is
///   f(alpha + eta d) = f(alpha) + eta (w'dw + alpha'A d/(2c) - v'd)
///                      + eta^2/2 (dw'dw + d'A d/(2c))
/// minimized at eta*, then clipped to [0, cap] where cap keeps alpha + eta d
/// feasible.
#[derive(Clone, Copy, Debug)]
pub struct LineSearchInputs {
    pub w_dot_dw: f64,
    pub dw_sq: f64,
    /// sum over instances of s_i t_i / (2c), reduced
    pub alpha_a_d: f64,
    /// sum over instances of t_i^2 / (2c), reduced
    pub d_a_d: f64,
    /// sum of d * delta, reduced
    pub v_dot_d: f64,
    /// min over negative coordinates of alpha / (-d); +inf when none
    pub cap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchResult {
    pub eta: f64,
    pub degenerate: bool,
}

pub fn line_search(inp: &LineSearchInputs) -> LineSearchResult {
    let denom = inp.dw_sq + inp.d_a_d;
    if denom <= CURVATURE_FLOOR {
        return LineSearchResult { eta: 0.0, degenerate: true };
    }
    let eta_star = -(inp.w_dot_dw + inp.alpha_a_d - inp.v_dot_d) / denom;
    LineSearchResult { eta: eta_star.max(0.0).min(inp.cap), degenerate: false }
}

/// eta >= 0 always, so a negative wire value can carry the degenerate flag
/// through the scalar collective's placeholder slot.
fn encode_eta(r: LineSearchResult) -> f64 {
    if r.degenerate {
        -1.0
    } else {
        r.eta
    }
}

fn decode_eta(wire: f64) -> LineSearchResult {
    if wire < 0.0 {
        LineSearchResult { eta: 0.0, degenerate: true }
    } else {
        LineSearchResult { eta: wire, degenerate: false }
    }
}

pub fn outer_iteration<T, C>(
    task: &T,
    shard: &[TaskInstance],
    state: &mut WorkerState,
    comm: &C,
    cfg: &TrainConfig,
    outer_iter: usize,
) -> Result<IterationStats, DriverError>
where
    T: StructuredTask,
    C: Communicator + ?Sized,
{
    let iter_start = Instant::now();
    let mut time_inference = 0.0;
    let mut time_learning = 0.0;
    let mut time_comm = 0.0;

    // inference phase
    let inference_ran = outer_iter % cfg.inference_interval == 0;
    let mut added_local = 0usize;
    if inference_ran {
        let t = Instant::now();
        added_local =
            grow_working_set(task, shard, &mut state.dual, &state.w, cfg.ws_violation_tol)?;
        time_inference += t.elapsed().as_secs_f64();
    }

    // learning phase: direction
    let t = Instant::now();
    let mut dir = solve_direction(&state.dual, &state.w, cfg, comm.rank(), outer_iter, &mut state.memory);
    let two_c = 2.0 * cfg.c;
    let mut alpha_a_d = 0.0;
    let mut d_a_d = 0.0;
    let mut v_dot_d = 0.0;
    let mut cap = f64::INFINITY;
    for (i, inst) in state.dual.instances.iter().enumerate() {
        let t_i = dir.t_sums[i];
        alpha_a_d += inst.alpha_sum * t_i / two_c;
        d_a_d += t_i * t_i / two_c;
        for (e, entry) in inst.entries.iter().enumerate() {
            let d = dir.d[i][e];
            v_dot_d += d * entry.delta;
            if d < 0.0 {
                cap = cap.min(entry.alpha / (-d));
            }
        }
    }
    time_learning += t.elapsed().as_secs_f64();

    // comm phase: direction image, then the step-size collective
    let t = Instant::now();
    comm.allreduce_sum_vec(dir.local_dw.as_mut_slice())?;
    let dw = dir.local_dw; // global from here on
    time_comm += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let rank0_inputs = if comm.rank() == 0 {
        Some((state.w.dot_dense(dw.as_slice()), dw.sq_norm()))
    } else {
        None
    };
    time_learning += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut fields = [alpha_a_d, d_a_d, v_dot_d, cap, 0.0];
    let modes = [
        ReduceMode::Sum,
        ReduceMode::Sum,
        ReduceMode::Sum,
        ReduceMode::Min,
        ReduceMode::Sum,
    ];
    let finalize_fn;
    let finalize: Option<&dyn Fn(&mut [f64])> = match rank0_inputs {
        Some((w_dot_dw, dw_sq)) => {
            finalize_fn = move |vals: &mut [f64]| {
                let result = line_search(&LineSearchInputs {
                    w_dot_dw,
                    dw_sq,
                    alpha_a_d: vals[0],
                    d_a_d: vals[1],
                    v_dot_d: vals[2],
                    cap: vals[3],
                });
                vals[4] = encode_eta(result);
            };
            Some(&finalize_fn)
        }
        None => None,
    };
    comm.allreduce_scalars(&mut fields, &modes, finalize)?;
    time_comm += t.elapsed().as_secs_f64();

    // learning phase: apply the step and prune
    let t = Instant::now();
    let step = decode_eta(fields[4]);
    let eta = step.eta;
    for (i, inst) in state.dual.instances.iter_mut().enumerate() {
        for (e, entry) in inst.entries.iter_mut().enumerate() {
            let d = dir.d[i][e];
            if d != 0.0 {
                entry.alpha = (entry.alpha + eta * d).max(0.0);
            }
            entry.zero_iters = if entry.alpha == 0.0 { entry.zero_iters + 1 } else { 0 };
        }
        inst.entries.retain(|e| e.zero_iters < PRUNE_AFTER);
        inst.alpha_sum = inst.recompute_alpha_sum();
    }
    if eta != 0.0 {
        state.w.add_scaled_dense(dw.as_slice(), eta);
    }
    let (ssq, lin) = state.dual.objective_partials();
    time_learning += t.elapsed().as_secs_f64();

    // comm phase: objective and working-set stats
    let t = Instant::now();
    let mut stats_fields = [ssq, lin, added_local as f64, state.dual.ws_size() as f64];
    comm.allreduce_sum_scalars(&mut stats_fields)?;
    time_comm += t.elapsed().as_secs_f64();

    let dual_obj = 0.5 * state.w.sq_norm() + stats_fields[0] / (4.0 * cfg.c) - stats_fields[1];
    Ok(IterationStats {
        outer_iter,
        dual_obj,
        step_size: eta,
        step_degenerate: step.degenerate,
        inference_ran,
        ws_size: stats_fields[3] as usize,
        ws_added: stats_fields[2] as usize,
        converged: false,
        time_inference_s: time_inference,
        time_learning_s: time_learning,
        time_comm_s: time_comm,
        wall_time_s: iter_start.elapsed().as_secs_f64(),
    })
}

pub fn train<T, C>(
    task: &T,
    shard: &[TaskInstance],
    cfg: &TrainConfig,
    comm: &C,
) -> Result<TrainOutput, DriverError>
where
    T: StructuredTask,
    C: Communicator + ?Sized,
{
    train_observed(task, shard, cfg, comm, |_, _| {})
}

/// `train` with a per-iteration callback receiving the stats and the synced
/// model, called after the iteration's update on every rank.
pub fn train_observed<T, C, F>(
    task: &T,
    shard: &[TaskInstance],
    cfg: &TrainConfig,
    comm: &C,
    mut observer: F,
) -> Result<TrainOutput, DriverError>
where
    T: StructuredTask,
    C: Communicator + ?Sized,
    F: FnMut(&IterationStats, &ModelVector),
{
    cfg.validate()?;
    let mut state = WorkerState::new(shard, cfg);

    let mut count = [shard.len() as f64];
    comm.allreduce_sum_scalars(&mut count)?;
    if count[0] == 0.0 {
        return Ok(TrainOutput { model: state.w, stats: vec![], dual: state.dual });
    }

    let mut stats_log = Vec::new();
    let mut prev_obj: Option<f64> = None;
    let mut stall_streak = 0usize;
    for outer_iter in 0..cfg.outer_iters {
        let mut stats = outer_iteration(task, shard, &mut state, comm, cfg, outer_iter)?;

        let stalled = match prev_obj {
            Some(p) => {
                (stats.dual_obj - p).abs() <= REL_CHANGE_TOL * stats.dual_obj.abs().max(1.0)
            }
            None => false,
        };
        stall_streak = if stalled { stall_streak + 1 } else { 0 };
        prev_obj = Some(stats.dual_obj);

        let optimal =
            stats.inference_ran && stats.ws_added == 0 && stats.step_degenerate;
        stats.converged = optimal || stall_streak >= REL_CHANGE_STREAK;

        observer(&stats, &state.w);
        let done = stats.converged;
        stats_log.push(stats);
        if done {
            break;
        }
    }
    Ok(TrainOutput { model: state.w, stats: stats_log, dual: state.dual })
}
