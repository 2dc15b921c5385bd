//! Linearization, Jacobian, and configuration-optimizer checks against
//! exact re-solves, finite differences, and random-configuration draws.

mod common;

use cmdp_core::mdp::{chain_value, value_iteration};
use cmdp_core::scenario::builtin;
use cmdp_core::tvcmdp::{
    budget_sweep, config_cost, jacobian, linearize, optimize_configuration, solve_tvcmdp,
    validate_plan, TvcScenario,
};
use common::*;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn paper_budgets() -> Vec<f64> {
    builtin::TVCMDP_BUDGETS.to_vec()
}

/// Admissible random direction with zero row sums: rows move toward a random
/// distribution, so `chain + s·d` stays stochastic for `s ∈ [0, 1]`.
fn random_direction(chain: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = chain.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        let mut q = Array1::from_iter((0..n).map(|_| rng.random::<f64>() + 1e-12));
        let sum = q.sum();
        q.mapv_inplace(|v| v / sum);
        for j in 0..n {
            d[(i, j)] = q[j] - chain[(i, j)];
        }
    }
    d
}

fn sup_abs(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

#[test]
fn linear_prediction_has_second_order_error() {
    // exact re-solve of the Bellman system as oracle, on both episode
    // kernels of the paper scenario under their optimal policies
    let scn = tvcmdp_paper_scenario();
    for k in 0..scn.episodes() {
        let mdp = scn.lower_mdp(k);
        let out = value_iteration(&mdp, 1e-12, 200_000).unwrap();
        let (chain, r_pi) = mdp.chain_under(&out.policy).unwrap();
        let lin = linearize(&chain, &r_pi, scn.gamma(), scn.mu0()).unwrap();
        let j0 = lin.n_vec.dot(scn.mu0());

        let mut rng = ChaCha8Rng::seed_from_u64(77 + k as u64);
        for dir in 0..5 {
            // per direction: error/eps^2 approaches the quadratic
            // coefficient, so the three sweep values stay in a x4 band
            let d = random_direction(&chain, &mut rng);
            let scale = sup_abs(&d);
            let mut ratios = Vec::new();
            for eps in [1e-2, 1e-3, 1e-4] {
                let x = d.mapv(|v| v * (eps / scale));
                let exact = chain_value(&(&chain + &x), &r_pi, scn.gamma())
                    .unwrap()
                    .dot(scn.mu0());
                let predicted: f64 = lin
                    .a_mat
                    .iter()
                    .zip(x.iter())
                    .map(|(a, x)| a * x)
                    .sum();
                let err = ((exact - j0) - predicted).abs();
                ratios.push(err / (eps * eps));
            }
            let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
            let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
            assert!(
                max / min.max(1e-12) <= 4.0 || max < 1e-9,
                "episode {k}, direction {dir}: error/eps^2 band too wide: [{min:.3e}, {max:.3e}]"
            );
        }
    }
}

#[test]
fn jacobian_matches_central_finite_differences() {
    let scn = tvcmdp_paper_scenario();
    let mdp = scn.lower_mdp(0);
    let out = value_iteration(&mdp, 1e-12, 200_000).unwrap();
    let (chain, r_pi) = mdp.chain_under(&out.policy).unwrap();
    let jac = jacobian(&chain, &r_pi, scn.gamma()).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let h = 1e-6;
    for _ in 0..20 {
        // row-sum-zero direction (not necessarily box-admissible; the
        // resolvent extends smoothly)
        let n = chain.nrows();
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            let mut row: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let mean = row.iter().sum::<f64>() / n as f64;
            for v in &mut row {
                *v -= mean;
            }
            for j in 0..n {
                d[(i, j)] = row[j];
            }
        }
        let plus = chain_value(&(&chain + &d.mapv(|v| v * h)), &r_pi, scn.gamma()).unwrap();
        let minus = chain_value(&(&chain - &d.mapv(|v| v * h)), &r_pi, scn.gamma()).unwrap();
        let fd = (&plus - &minus) / (2.0 * h);
        let analytic = jac.apply(&d);
        for i in 0..n {
            let rel = (fd[i] - analytic[i]).abs() / analytic[i].abs().max(1e-6);
            assert!(rel <= 1e-4, "state {i}: fd {} vs analytic {}", fd[i], analytic[i]);
        }
    }
}

#[test]
fn jacobian_reproduces_the_linear_gain() {
    // <A, x> must equal mu0-weighted directional derivatives from the tensor
    let scn = tvcmdp_paper_scenario();
    let mdp = scn.lower_mdp(1);
    let out = value_iteration(&mdp, 1e-12, 200_000).unwrap();
    let (chain, r_pi) = mdp.chain_under(&out.policy).unwrap();
    let lin = linearize(&chain, &r_pi, scn.gamma(), scn.mu0()).unwrap();
    let jac = jacobian(&chain, &r_pi, scn.gamma()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let x = random_direction(&chain, &mut rng);
        let via_a: f64 = lin.a_mat.iter().zip(x.iter()).map(|(a, x)| a * x).sum();
        let via_jac = jac.apply(&x).dot(scn.mu0());
        assert!(
            (via_a - via_jac).abs() <= 1e-10 * via_a.abs().max(1.0),
            "A-form {via_a} vs tensor {via_jac}"
        );
    }
}

fn optimal_policies(scn: &TvcScenario) -> Vec<cmdp_core::mdp::DetPolicy> {
    (0..scn.episodes())
        .map(|k| {
            value_iteration(&scn.lower_mdp(k), 1e-10, 200_000)
                .unwrap()
                .policy
        })
        .collect()
}

#[test]
fn optimizer_gain_is_monotone_in_budget() {
    let scn = tvcmdp_paper_scenario();
    let policies = optimal_policies(&scn);
    let mut prev = f64::NEG_INFINITY;
    for &b in &paper_budgets() {
        let plan = optimize_configuration(&scn.with_budget(b).unwrap(), &policies).unwrap();
        // nested feasible sets; slack only from the dual-gap tolerance
        let slack = 2e-5 * plan.predicted_gain.abs().max(1.0);
        assert!(
            plan.predicted_gain >= prev - slack,
            "gain dropped: {prev} -> {} at B = {b}",
            plan.predicted_gain
        );
        prev = plan.predicted_gain;
    }
}

#[test]
fn plans_pass_the_independent_feasibility_validator() {
    let scn = tvcmdp_paper_scenario();
    let policies = optimal_policies(&scn);
    for &b in &paper_budgets() {
        let scn_b = scn.with_budget(b).unwrap();
        let plan = optimize_configuration(&scn_b, &policies).unwrap();
        validate_plan(&scn_b, &policies, &plan).unwrap();
        assert!(!plan.stalled, "solver stalled at B = {b}");
        let gap = (plan.dual_bound - plan.predicted_gain) / plan.dual_bound.abs().max(1.0);
        assert!((-1e-12..=1e-5).contains(&gap), "dual gap {gap:.3e} at B = {b}");
    }
}

#[test]
fn solve_rounds_zero_budget_reproduces_baseline() {
    let scn = tvcmdp_paper_scenario().with_budget(0.0).unwrap();
    let sol = solve_tvcmdp(&scn, 1).unwrap();
    let mut baseline = 0.0;
    for k in 0..scn.episodes() {
        let mdp = scn.lower_mdp(k);
        let out = value_iteration(&mdp, 1e-10, 200_000).unwrap();
        baseline += out.values.values().dot(mdp.mu0());
    }
    assert!((sol.objective - baseline).abs() <= 1e-8);
    assert!(sol.plan.xs.iter().all(|x| x.iter().all(|&v| v == 0.0)));
}

#[test]
fn exact_objective_never_regresses_with_more_rounds() {
    let scn = tvcmdp_paper_scenario();
    let mut prev = f64::NEG_INFINITY;
    for rounds in 1..=4 {
        let sol = solve_tvcmdp(&scn, rounds).unwrap();
        assert!(
            sol.objective >= prev - 1e-8,
            "objective regressed at rounds = {rounds}"
        );
        prev = sol.objective;
    }
}

#[test]
fn random_configurations_never_beat_the_optimized_plan() {
    let scn = tvcmdp_paper_scenario();
    let rows = budget_sweep(&scn, &paper_budgets(), 3, 10, 99).unwrap();
    for row in &rows {
        assert!(
            row.optimized >= row.random_mean - 1e-9,
            "random mean beat optimized at B = {}",
            row.budget
        );
        assert!(row.optimized >= row.baseline - 1e-9);
    }
}

#[test]
fn sweep_curve_is_nondecreasing() {
    let scn = tvcmdp_paper_scenario();
    let rows = budget_sweep(&scn, &paper_budgets(), 2, 3, 7).unwrap();
    for pair in rows.windows(2) {
        assert!(pair[1].optimized >= pair[0].optimized - 1e-9);
        assert_eq!(pair[0].baseline, pair[1].baseline);
    }
}

#[test]
fn config_cost_scales_with_beta() {
    let mut x = Array2::zeros((2, 2));
    x[(0, 0)] = 0.25;
    x[(0, 1)] = -0.25;
    let base = config_cost(&x, 3.0, 1.0);
    assert!((config_cost(&x, 3.0, 2.5) - 2.5 * base).abs() < 1e-12);
}
