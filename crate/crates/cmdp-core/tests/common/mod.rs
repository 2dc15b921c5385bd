//! Shared test oracles, independent of the solver paths they check.
#![allow(dead_code)] // each test binary uses its own subset

use cmdp_core::linalg;
use cmdp_core::mdp::{policy_evaluation_closed, DetPolicy, LowerMdpSpec};
use cmdp_core::bilevel::UpperMdpSpec;
use cmdp_core::scenario::{builtin, Scenario};
use cmdp_core::tvcmdp::TvcScenario;
use ndarray::{Array1, Array2};

/// Odometer over all `base^len` index vectors.
pub fn index_vectors(len: usize, base: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = base.pow(len as u32);
    (0..total).map(move |mut code| {
        let mut v = vec![0usize; len];
        for slot in v.iter_mut() {
            *slot = code % base;
            code /= base;
        }
        v
    })
}

/// Brute-force optimal values: the pointwise max of the closed-form values
/// of every deterministic policy.
pub fn enumerate_optimal_values(mdp: &LowerMdpSpec) -> Array1<f64> {
    let mut best = Array1::from_elem(mdp.n(), f64::NEG_INFINITY);
    for choice in index_vectors(mdp.n(), mdp.num_actions()) {
        let v = policy_evaluation_closed(mdp, &DetPolicy::new(choice)).unwrap();
        for (b, &x) in best.iter_mut().zip(v.values().iter()) {
            if x > *b {
                *b = x;
            }
        }
    }
    best
}

/// Brute-force optimal initial return `max_π μ0ᵀ V^π`.
pub fn enumerate_optimal_return(mdp: &LowerMdpSpec) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for choice in index_vectors(mdp.n(), mdp.num_actions()) {
        let v = policy_evaluation_closed(mdp, &DetPolicy::new(choice)).unwrap();
        best = best.max(v.values().dot(mdp.mu0()));
    }
    best
}

/// Closed-form evaluation of one stationary higher-order policy:
/// `(I - λ Q^Θ) W = R^Θ` with `R^Θ(p) = Q(·|p, Θ(p))·J - C(p, Θ(p))`,
/// written out independently of the production solvers.
pub fn evaluate_upper_policy(upper: &UpperMdpSpec, j: &Array1<f64>, theta: &[usize]) -> Array1<f64> {
    let m = upper.m();
    let mut coeff = Array2::eye(m);
    let mut r_theta = Array1::zeros(m);
    for p in 0..m {
        let q_row = upper.q()[theta[p]].row(p);
        for p2 in 0..m {
            coeff[(p, p2)] -= upper.lambda() * q_row[p2];
        }
        r_theta[p] = q_row.dot(j) - upper.cost()[(p, theta[p])];
    }
    linalg::solve(&coeff, &r_theta).unwrap()
}

/// Brute-force optimal higher-order values: pointwise max over all
/// stationary deterministic upper policies.
pub fn enumerate_upper_values(upper: &UpperMdpSpec, j: &Array1<f64>) -> Array1<f64> {
    let mut best = Array1::from_elem(upper.m(), f64::NEG_INFINITY);
    for theta in index_vectors(upper.m(), upper.num_b()) {
        let w = evaluate_upper_policy(upper, j, &theta);
        for (b, &x) in best.iter_mut().zip(w.iter()) {
            if x > *b {
                *b = x;
            }
        }
    }
    best
}

pub fn tvcmdp_paper_scenario() -> TvcScenario {
    match builtin::tvcmdp_paper().to_scenario().unwrap() {
        Scenario::Tvcmdp(scn) => scn,
        _ => unreachable!(),
    }
}

pub fn finance_scenario() -> UpperMdpSpec {
    match builtin::bilevel_paper().to_scenario().unwrap() {
        Scenario::Bilevel(upper) => upper,
        _ => unreachable!(),
    }
}

pub fn blockworld_scenario(points: usize) -> UpperMdpSpec {
    match builtin::blockworld(points).to_scenario().unwrap() {
        Scenario::Bilevel(upper) => upper,
        _ => unreachable!(),
    }
}

pub fn sup_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    linalg::sup_diff(a.view(), b.view())
}
