//! Dense assembly of the trainer's dual problem and its direction
//! subproblem, plus from-scratch evaluations used as cross-checks.

use crate::boxqp::DenseBoxQp;
use bqstruct_core::dual::WorkingSetEntry;
use bqstruct_core::model::ModelVector;
use bqstruct_core::tasks::{StructuredTask, TaskInstance};
use bqstruct_core::{DualState, SparseVec};

/// Flattened coordinate order: worker-major, then instance, then entry.
/// Matches the order the trainer folds its objective partials in.
#[derive(Clone, Debug)]
pub struct DualLayout {
    pub coords: Vec<(usize, usize, usize)>,
}

pub fn layout(states: &[DualState]) -> DualLayout {
    let mut coords = Vec::new();
    for (s, st) in states.iter().enumerate() {
        for (i, inst) in st.instances.iter().enumerate() {
            for e in 0..inst.entries.len() {
                coords.push((s, i, e));
            }
        }
    }
    DualLayout { coords }
}

fn entry<'a>(states: &'a [DualState], c: (usize, usize, usize)) -> &'a WorkingSetEntry {
    &states[c.0].instances[c.1].entries[c.2]
}

pub fn sparse_dot(a: &SparseVec, b: &SparseVec) -> f64 {
    let mut bi = b.iter().peekable();
    let mut out = 0.0;
    for (i, x) in a.iter() {
        while let Some(&(j, _)) = bi.peek() {
            if j < i {
                bi.next();
            } else {
                break;
            }
        }
        if let Some(&(j, y)) = bi.peek() {
            if j == i {
                out += x * y;
            }
        }
    }
    out
}

/// Assembles min_{alpha >= 0} 1/2 a'(Q + A/(2c))a - delta'a as a dense QP.
pub fn assemble_dual(states: &[DualState], c: f64) -> (DenseBoxQp, DualLayout) {
    let lay = layout(states);
    let n = lay.coords.len();
    let mut q = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (j, &cj) in lay.coords.iter().enumerate() {
        let ej = entry(states, cj);
        b[j] = -ej.delta;
        for (k, &ck) in lay.coords.iter().enumerate() {
            let mut v = sparse_dot(&ej.phi, &entry(states, ck).phi);
            if (cj.0, cj.1) == (ck.0, ck.1) {
                v += 1.0 / (2.0 * c);
            }
            q[j][k] = v;
        }
    }
    let qp = DenseBoxQp { q, b, lb: vec![0.0; n] };
    (qp, lay)
}

/// Assembles the direction subproblem at the current iterate:
///   min_{d >= -alpha} grad'd + 1/2 d'(theta Qbar + A/(2c) + lambda I)d
/// where Qbar keeps only same-worker blocks of the Gram matrix and
/// `lambda[s]` is worker s's ridge term.
pub fn assemble_direction(
    states: &[DualState],
    w: &ModelVector,
    c: f64,
    theta: f64,
    lambda: &[f64],
) -> (DenseBoxQp, DualLayout) {
    let lay = layout(states);
    let n = lay.coords.len();
    let mut q = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    let mut lb = vec![0.0; n];
    for (j, &cj) in lay.coords.iter().enumerate() {
        let ej = entry(states, cj);
        let s_i = states[cj.0].instances[cj.1].alpha_sum;
        b[j] = w.dot_sparse(&ej.phi) + s_i / (2.0 * c) - ej.delta;
        lb[j] = -ej.alpha;
        for (k, &ck) in lay.coords.iter().enumerate() {
            let mut v = 0.0;
            if cj.0 == ck.0 {
                v += theta * sparse_dot(&ej.phi, &entry(states, ck).phi);
            }
            if (cj.0, cj.1) == (ck.0, ck.1) {
                v += 1.0 / (2.0 * c);
            }
            if j == k {
                v += lambda[cj.0];
            }
            q[j][k] = v;
        }
    }
    (DenseBoxQp { q, b, lb }, lay)
}

pub fn current_alphas(states: &[DualState], lay: &DualLayout) -> Vec<f64> {
    lay.coords.iter().map(|&c| entry(states, c).alpha).collect()
}

pub fn apply_alphas(states: &mut [DualState], lay: &DualLayout, x: &[f64]) {
    assert_eq!(lay.coords.len(), x.len());
    for (&(s, i, e), &v) in lay.coords.iter().zip(x) {
        states[s].instances[i].entries[e].alpha = v;
    }
    for st in states.iter_mut() {
        for inst in &mut st.instances {
            inst.alpha_sum = inst.recompute_alpha_sum();
        }
    }
}

/// Dual objective evaluated from first principles: build w(alpha) as a raw
/// dense vector, then 1/2 ||w||^2 + sum s_i^2/(4c) - sum alpha delta.
pub fn dual_value_reconstructed(states: &[DualState], hash_bits: u32, c: f64) -> f64 {
    let mut w = vec![0.0; 1usize << hash_bits];
    let mut ssq = 0.0;
    let mut lin = 0.0;
    for st in states {
        for inst in &st.instances {
            let mut s_i = 0.0;
            for e in &inst.entries {
                for (idx, v) in e.phi.iter() {
                    w[idx as usize] += e.alpha * v;
                }
                s_i += e.alpha;
                lin += e.alpha * e.delta;
            }
            ssq += s_i * s_i;
        }
    }
    let norm: f64 = w.iter().map(|x| x * x).sum();
    0.5 * norm + ssq / (4.0 * c) - lin
}

/// Central finite differences of an arbitrary scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

/// Inserts every non-reference structure of every instance into the working
/// set, turning the restricted dual into the full dual.
pub fn force_add_all_structures<T: StructuredTask>(
    task: &T,
    shard: &[TaskInstance],
    dual: &mut DualState,
) {
    for (inst, state) in shard.iter().zip(dual.instances.iter_mut()) {
        for key in task.enumerate_structures(inst).expect("enumerable task") {
            if key == state.gold || state.find_entry(&key).is_some() {
                continue;
            }
            let phi = task.phi_diff(inst, &key).expect("phi_diff");
            let delta = task.loss(&state.gold, &key).expect("loss");
            state.entries.push(WorkingSetEntry::new(key, phi, delta));
        }
    }
}
