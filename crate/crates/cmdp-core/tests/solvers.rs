//! Cross-checks of the lower and upper solvers against enumeration oracles.

mod common;

use cmdp_core::bilevel::{
    lower_solve_all, solve_bilevel, upper_reward, upper_value_iteration, UpperMdpSpec,
};
use cmdp_core::diagnostics::harness::random_lower_mdp;
use cmdp_core::mdp::{
    greedy_policy, policy_evaluation_closed, value_iteration, DetPolicy, Horizon,
    KernelPerAction,
};
use common::*;
use ndarray::{arr1, arr2, Array1, Array2};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn value_iteration_matches_enumeration_on_paper_scenario() {
    // episode-1 kernel of the time-varying scenario: 3 states x 3 actions
    let scn = tvcmdp_paper_scenario();
    let mdp = scn.lower_mdp(0);
    let out = value_iteration(&mdp, 1e-10, 100_000).unwrap();
    let oracle = enumerate_optimal_values(&mdp);
    assert!(sup_diff(out.values.values(), &oracle) <= 1e-6);
}

#[test]
fn closed_form_agrees_with_value_iteration_on_finance_kernel() {
    let upper = finance_scenario();
    let mdp = upper.lower_mdp(0).unwrap();
    let out = value_iteration(&mdp, 1e-12, 200_000).unwrap();
    let closed = policy_evaluation_closed(&mdp, &out.policy).unwrap();
    assert!(out.values.sup_diff(&closed) <= 1e-6);
}

#[test]
fn greedy_policy_is_enumeration_optimal_under_second_kernel() {
    let scn = tvcmdp_paper_scenario();
    let mdp = scn.lower_mdp(1);
    let out = value_iteration(&mdp, 1e-11, 100_000).unwrap();
    let pi = greedy_policy(&mdp, &out.values).unwrap();
    let v_pi = policy_evaluation_closed(&mdp, &pi).unwrap();
    let oracle = enumerate_optimal_values(&mdp);
    // the greedy policy's own value must attain the enumerated optimum
    assert!(sup_diff(v_pi.values(), &oracle) <= 1e-6);
}

#[test]
fn closed_form_matches_fixed_point_iteration() {
    // random MDPs, n <= 8, |A| <= 4, gamma <= 0.95
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        use rand::Rng;
        let n = rng.random_range(2..=8);
        let na = rng.random_range(1..=4);
        let gamma = 0.95 * rng.random::<f64>();
        let mdp = random_lower_mdp(&mut rng, n, na, gamma);
        let pi = DetPolicy::new((0..n).map(|_| rng.random_range(0..na)).collect());
        let closed = policy_evaluation_closed(&mdp, &pi).unwrap();

        // independent route: iterate v <- r + gamma P v to numerical rest
        let (chain, r_pi) = mdp.chain_under(&pi).unwrap();
        let mut v = Array1::<f64>::zeros(n);
        for _ in 0..20_000 {
            let next = &r_pi + &(chain.dot(&v) * gamma);
            let gap = common::sup_diff(&next, &v);
            v = next;
            if gap <= 1e-14 {
                break;
            }
        }
        assert!(
            common::sup_diff(closed.values(), &v) <= 1e-7,
            "seed {seed}: closed form and fixed point disagree"
        );
    }
}

#[test]
fn value_iteration_gaps_contract() {
    let scn = tvcmdp_paper_scenario();
    for k in 0..scn.episodes() {
        let mdp = scn.lower_mdp(k);
        // test-side Bellman loop capturing the gap sequence
        let mut v = Array1::<f64>::zeros(mdp.n());
        let mut prev_gap: Option<f64> = None;
        for _ in 0..200 {
            let mut next = Array1::from_elem(mdp.n(), f64::NEG_INFINITY);
            for a in 0..mdp.num_actions() {
                let pv = mdp.kernel().mat(a).dot(&v);
                for s in 0..mdp.n() {
                    let q = mdp.reward()[(s, a)] + mdp.gamma() * pv[s];
                    if q > next[s] {
                        next[s] = q;
                    }
                }
            }
            let gap = common::sup_diff(&next, &v);
            if let Some(pg) = prev_gap {
                assert!(
                    gap <= mdp.gamma() * pg + 1e-12,
                    "gap {gap} vs contracted {pg}"
                );
            }
            prev_gap = Some(gap);
            v = next;
        }
    }
}

#[test]
fn values_respect_discounted_bound() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4200 + seed);
        use rand::Rng;
        let n = rng.random_range(2..=6);
        let na = rng.random_range(1..=3);
        let mdp = random_lower_mdp(&mut rng, n, na, 0.9);
        let bound = mdp.value_bound() + 1e-9;
        let out = value_iteration(&mdp, 1e-10, 100_000).unwrap();
        assert!(out.values.values().iter().all(|v| v.abs() <= bound));
        let pi = DetPolicy::new((0..n).map(|_| rng.random_range(0..na)).collect());
        let v = policy_evaluation_closed(&mdp, &pi).unwrap();
        assert!(v.values().iter().all(|v| v.abs() <= bound));
    }
}

#[test]
fn finance_returns_match_policy_enumeration() {
    let upper = finance_scenario();
    let (j, _) = lower_solve_all(&upper, 1e-10, 200_000).unwrap();
    for p in 0..upper.m() {
        let mdp = upper.lower_mdp(p).unwrap();
        let oracle = enumerate_optimal_return(&mdp); // 2^6 policies
        assert!(
            (j[p] - oracle).abs() <= 1e-6,
            "kernel {p}: J = {} vs oracle {oracle}",
            j[p]
        );
    }
}

#[test]
fn finance_upper_values_match_theta_enumeration() {
    let upper = finance_scenario();
    let (j, _) = lower_solve_all(&upper, 1e-10, 200_000).unwrap();
    let (w, theta) = upper_value_iteration(&upper, &j, 1e-10, 200_000).unwrap();
    let oracle = enumerate_upper_values(&upper, &j); // 3^3 policies
    assert!(sup_diff(&w, &oracle) <= 1e-6);
    // the greedy theta must itself attain the optimum
    let w_theta = evaluate_upper_policy(&upper, &j, &theta);
    assert!(sup_diff(&w_theta, &oracle) <= 1e-6);
}

#[test]
fn finance_upper_reward_formula() {
    let upper = finance_scenario();
    let (j, _) = lower_solve_all(&upper, 1e-10, 200_000).unwrap();
    // action 0 is "decrease_rate": Q row (0.7, 0.2, 0.1), cost 0.2
    let r = upper_reward(&upper, &j, 0, 0).unwrap();
    let want = 0.7 * j[0] + 0.2 * j[1] + 0.1 * j[2] - 0.2;
    assert!((r - want).abs() <= 1e-9, "R = {r}, formula gives {want}");
}

#[test]
fn solve_bilevel_is_deterministic() {
    let upper = finance_scenario();
    let a = solve_bilevel(&upper, 1e-10).unwrap();
    let b = solve_bilevel(&upper, 1e-10).unwrap();
    assert_eq!(a.w, b.w);
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.j_per_kernel, b.j_per_kernel);
}

#[test]
fn dominant_kernel_attracts_the_policy() {
    // kernel 1 dominates (higher rewards are reachable); b1 jumps to it at
    // zero cost, b0 stays put.
    let slow = KernelPerAction::from_mats(vec![arr2(&[[1.0, 0.0], [1.0, 0.0]])]).unwrap();
    let fast = KernelPerAction::from_mats(vec![arr2(&[[0.0, 1.0], [0.0, 1.0]])]).unwrap();
    let upper = UpperMdpSpec::new(
        vec![slow, fast],
        arr2(&[[0.0], [5.0]]),
        None,
        0.9,
        arr1(&[0.5, 0.5]),
        Horizon::Infinite,
        vec!["stay".into(), "jump".into()],
        vec![
            arr2(&[[1.0, 0.0], [1.0, 0.0]]),
            arr2(&[[0.0, 1.0], [0.0, 1.0]]),
        ],
        Array2::zeros((2, 2)),
        0.9,
        Horizon::Infinite,
    )
    .unwrap();
    let solution = solve_bilevel(&upper, 1e-10).unwrap();
    assert!(solution.j_per_kernel[1] > solution.j_per_kernel[0]);
    assert_eq!(solution.theta, vec![1, 1], "both states should jump");
    // enumeration confirms the greedy policy is optimal
    let oracle = enumerate_upper_values(&upper, &solution.j_per_kernel);
    let w_theta = evaluate_upper_policy(&upper, &solution.j_per_kernel, &solution.theta);
    assert!(sup_diff(&w_theta, &oracle) <= 1e-6);
}

#[test]
fn blockworld_values_decrease_on_the_monotone_prefix() {
    let upper = blockworld_scenario(101);
    let solution = solve_bilevel(&upper, 1e-10).unwrap();
    let j = &solution.j_per_kernel;

    // maximal prefix on which J is nonincreasing in the slip probability
    let mut prefix = 0;
    while prefix + 1 < upper.m() && j[prefix + 1] <= j[prefix] + 1e-12 {
        prefix += 1;
    }
    assert!(
        prefix >= 40,
        "expected a long monotone prefix, got {prefix} points"
    );
    // W inherits the monotonicity there
    for p in 0..prefix {
        assert!(
            solution.w[p + 1] <= solution.w[p] + 1e-9,
            "W must be nonincreasing on the J-monotone prefix: index {p}"
        );
    }
    // low slip beats high slip overall
    assert!(j[0] > j[upper.m() - 1]);
    assert!(solution.w[0] > solution.w[upper.m() - 1]);
}

#[test]
fn theta_is_invariant_under_uniform_return_shifts() {
    let upper = finance_scenario();
    let (j, _) = lower_solve_all(&upper, 1e-10, 200_000).unwrap();
    let (_, theta) = upper_value_iteration(&upper, &j, 1e-10, 200_000).unwrap();
    for shift in [1.0, 10.0, -5.0, 123.456] {
        let shifted = &j + shift;
        let (_, theta_shifted) = upper_value_iteration(&upper, &shifted, 1e-10, 200_000).unwrap();
        assert_eq!(theta, theta_shifted, "shift {shift} changed theta");
    }
}
