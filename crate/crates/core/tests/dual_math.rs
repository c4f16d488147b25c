//! The incremental dual bookkeeping must agree with dense from-scratch
//! evaluations of the same objective.

use bqstruct_core::config::TrainConfig;
use bqstruct_core::dual::{
    dual_gradient_entry, dual_objective, primal_objective, reconstruct_w,
};
use bqstruct_core::tasks::MulticlassTask;
use bqstruct_core::DualState;
use bqstruct_oracle::brute::brute_force_violation;
use bqstruct_oracle::dual_ref::{
    apply_alphas, assemble_dual, current_alphas, dual_value_reconstructed, fd_gradient,
    force_add_all_structures, layout,
};
use bqstruct_oracle::gen::{gen_multiclass_problem, random_dual_states, random_model};

fn test_cfg() -> TrainConfig {
    let mut cfg = TrainConfig::for_workers(1);
    cfg.hash_bits = 10;
    cfg
}

#[test]
fn objective_matches_dense_qp_and_reconstruction() {
    for seed in [3u64, 17, 92] {
        let cfg = test_cfg();
        let states = random_dual_states(seed, 3, 2, 3, &cfg);
        let w = reconstruct_w(&states, cfg.hash_bits);
        let f_incr = dual_objective(&states, &w);

        let (qp, lay) = assemble_dual(&states, cfg.c);
        let f_qp = qp.objective(&current_alphas(&states, &lay));
        let f_rec = dual_value_reconstructed(&states, cfg.hash_bits, cfg.c);

        let tol = 1e-10 * f_incr.abs().max(1.0);
        assert!((f_incr - f_qp).abs() < tol, "seed {seed}: {f_incr} vs qp {f_qp}");
        assert!((f_incr - f_rec).abs() < tol, "seed {seed}: {f_incr} vs rec {f_rec}");
    }
}

#[test]
fn gradient_matches_finite_differences_of_definition() {
    let cfg = test_cfg();
    let mut states = random_dual_states(11, 2, 2, 3, &cfg);
    let lay = layout(&states);
    let x0 = current_alphas(&states, &lay);
    let c = cfg.c;
    let bits = cfg.hash_bits;

    let f = |x: &[f64]| {
        let mut probe = states.clone();
        apply_alphas(&mut probe, &lay, x);
        dual_value_reconstructed(&probe, bits, c)
    };
    let fd = fd_gradient(f, &x0, 1e-5);

    let w = reconstruct_w(&states, bits);
    for (j, &(s, i, e)) in lay.coords.iter().enumerate() {
        let inst = &states[s].instances[i];
        let g = dual_gradient_entry(&inst.entries[e], inst.alpha_sum, &w, c);
        assert!(
            (g - fd[j]).abs() < 1e-6,
            "coord {j}: analytic {g} vs fd {}",
            fd[j]
        );
    }
    // keep the borrow checker honest about states living this long
    apply_alphas(&mut states, &lay, &x0);
}

#[test]
fn scalar_problem_frozen_optimum() {
    // one entry, unit phi, loss 1, c = 0.1: alpha* = 1/6, f* = -1/12
    let cfg = test_cfg();
    let mut states = random_dual_states(1, 1, 1, 1, &cfg);
    let lay = layout(&states);
    {
        let e = &mut states[0].instances[0].entries[0];
        e.phi = bqstruct_core::SparseVec::from_unsorted(vec![(0, 1.0)]);
        e.phi_sq_norm = 1.0;
        e.delta = 1.0;
    }
    apply_alphas(&mut states, &lay, &[0.0]);

    let (qp, _) = assemble_dual(&states, cfg.c);
    let x = qp.solve(500);
    assert!((x[0] - 1.0 / 6.0).abs() < 1e-12);
    assert!((qp.objective(&x) - (-1.0 / 12.0)).abs() < 1e-14);

    apply_alphas(&mut states, &lay, &x);
    let w = reconstruct_w(&states, cfg.hash_bits);
    assert!((dual_objective(&states, &w) - (-1.0 / 12.0)).abs() < 1e-14);
}

#[test]
fn primal_matches_brute_force_slacks() {
    let data = gen_multiclass_problem(5, 3, 4, 2);
    let task = MulticlassTask::new(3, 10);
    let w = random_model(23, 10);
    let c = 0.1;

    let mut slack_sq = 0.0;
    for inst in &data {
        let (_, viol) = brute_force_violation(&task, &w, inst);
        slack_sq += viol.max(0.0) * viol.max(0.0);
    }
    let manual = 0.5 * w.sq_norm() + c * slack_sq;
    let got = primal_objective(&w, &data, &task, c).unwrap();
    assert!((got - manual).abs() < 1e-12, "{got} vs {manual}");
}

#[test]
fn full_dual_optimum_closes_the_gap() {
    // saturate the working set, solve the dense dual, and check strong
    // duality: primal(w(alpha*)) ~ -f(alpha*)
    let data = gen_multiclass_problem(7, 3, 3, 2);
    let task = MulticlassTask::new(3, 10);
    let cfg = test_cfg();
    let mut dual = DualState::new(&data, cfg.clone());
    force_add_all_structures(&task, &data, &mut dual);

    let mut states = vec![dual];
    let (qp, lay) = assemble_dual(&states, cfg.c);
    let x = qp.solve(4000);
    apply_alphas(&mut states, &lay, &x);
    let w = reconstruct_w(&states, cfg.hash_bits);

    let f_star = dual_objective(&states, &w);
    let p_star = primal_objective(&w, &data, &task, cfg.c).unwrap();
    let gap = (p_star + f_star).abs();
    assert!(
        gap <= 1e-6 * f_star.abs().max(1.0),
        "gap {gap} with primal {p_star}, dual {f_star}"
    );
}

#[test]
fn reconstruction_is_linear_in_alpha() {
    let cfg = test_cfg();
    let mut states = random_dual_states(31, 2, 2, 2, &cfg);
    let lay = layout(&states);
    let x: Vec<f64> = current_alphas(&states, &lay);
    let w1 = reconstruct_w(&states, cfg.hash_bits);

    let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    apply_alphas(&mut states, &lay, &doubled);
    let w2 = reconstruct_w(&states, cfg.hash_bits);

    let mut expect = w1.clone();
    expect.scale(2.0);
    let diff: f64 = w2
        .as_slice()
        .iter()
        .zip(expect.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-12);
}
