//! Error quantities and bounds for estimated and imprecisely configured
//! kernels, with a randomized verification harness.
//!
//! Three inequalities are computed and checked empirically (never re-derived):
//!
//! 1. estimation error: if every row of `P̂` is within total variation `δ_g`
//!    of `P`, then `‖V^π_P - V^π_P̂‖_∞ ≤ γ δ_g V_max / (1-γ)`, for a fixed
//!    policy and for the respective optimal policies;
//! 2. propagated reward error: with configuration error `δ_c` on top,
//!    `‖R_Q^Θ - R̂_Q^Θ‖_∞ ≤ γ (δ_g + δ_c) V_max ‖μ0‖_∞ / (1-γ)`;
//! 3. bi-level error: with the upper kernel off by `Δ` per row,
//!    `‖W^Θ_Q - W^Θ_Q̂‖_∞ ≤ γ (δ_g+δ_c) V_max ‖μ0‖_∞ / ((1-γ)(1-λ))
//!     + (2Δ ‖μ0‖_∞ V_max + 2λΔ W_max) / (1-λ)`.
//!
//! `V_max` and `W_max` use absolute maxima (`max|r|/(1-γ)`,
//! `R_max/(1-λ)` with `R_max` the largest `|R|` across both reward tables of
//! the pair) so the bounds also hold with negative rewards.

use crate::bilevel::{
    kernel_distance, lower_solve_all, upper_reward_table, BilevelError, UpperMdpSpec,
};
use crate::linalg;
use crate::mdp::{
    policy_evaluation_closed, value_iteration, DetPolicy, KernelPerAction, LowerMdpSpec, MdpError,
};
use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Mdp(#[from] MdpError),

    #[error(transparent)]
    Bilevel(#[from] BilevelError),

    #[error("length mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("catalogs differ in size: {left} vs {right}")]
    CatalogMismatch { left: usize, right: usize },

    #[error("paired specs must share {0}")]
    MismatchedSpecs(&'static str),

    #[error("no lemma {0}; valid lemmas are 1, 2, 3")]
    UnknownLemma(u8),
}

/// Total-variation distance `½ Σ |p_i - q_i|` between two distributions.
pub fn tv_distance(p: ArrayView1<f64>, q: ArrayView1<f64>) -> Result<f64, DiagnosticsError> {
    if p.len() != q.len() {
        return Err(DiagnosticsError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(linalg::tv_unchecked(p, q))
}

/// Max over paired catalog entries of the max row TV distance.
pub fn catalog_distance(
    a: &[KernelPerAction],
    b: &[KernelPerAction],
) -> Result<f64, DiagnosticsError> {
    if a.len() != b.len() {
        return Err(DiagnosticsError::CatalogMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        worst = worst.max(kernel_distance(x, y)?);
    }
    Ok(worst)
}

/// Max over `(P, b)` of the row TV distance between two upper kernels.
pub fn upper_kernel_distance(
    a: &[Array2<f64>],
    b: &[Array2<f64>],
) -> Result<f64, DiagnosticsError> {
    if a.len() != b.len() {
        return Err(DiagnosticsError::CatalogMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        if x.dim() != y.dim() {
            return Err(DiagnosticsError::DimensionMismatch {
                left: x.nrows(),
                right: y.nrows(),
            });
        }
        for (rx, ry) in x.rows().into_iter().zip(y.rows()) {
            worst = worst.max(linalg::tv_unchecked(rx, ry));
        }
    }
    Ok(worst)
}

/// Output of [`lemma1_check`].
#[derive(Debug, Clone, Copy)]
pub struct Lemma1Report {
    /// `‖V^π_P - V^π_P̂‖_∞` for the supplied fixed policy.
    pub observed_fixed: f64,
    /// `‖V^{π*(P)}_P - V^{π*(P̂)}_P̂‖_∞` for the respective optimal policies.
    pub observed_optimal: f64,
    pub bound: f64,
    pub delta_g: f64,
    pub v_max: f64,
}

impl Lemma1Report {
    pub fn observed(&self) -> f64 {
        self.observed_fixed.max(self.observed_optimal)
    }

    pub fn holds(&self) -> bool {
        self.observed() <= self.bound + 1e-12
    }
}

/// Computes the estimation-error gap and its bound for a ground-truth /
/// estimated kernel pair sharing `{S, A, r, γ, μ0}`.
pub fn lemma1_check(
    mdp_p: &LowerMdpSpec,
    mdp_phat: &LowerMdpSpec,
    pi: &DetPolicy,
) -> Result<Lemma1Report, DiagnosticsError> {
    if mdp_p.n() != mdp_phat.n() || mdp_p.num_actions() != mdp_phat.num_actions() {
        return Err(DiagnosticsError::MismatchedSpecs("state/action spaces"));
    }
    if mdp_p.gamma() != mdp_phat.gamma() {
        return Err(DiagnosticsError::MismatchedSpecs("gamma"));
    }
    let gamma = mdp_p.gamma();
    let delta_g = kernel_distance(mdp_p.kernel(), mdp_phat.kernel())?;
    let v_max = mdp_p.value_bound().max(mdp_phat.value_bound());

    let v_p = policy_evaluation_closed(mdp_p, pi)?;
    let v_phat = policy_evaluation_closed(mdp_phat, pi)?;
    let observed_fixed = v_p.sup_diff(&v_phat);

    let pi_star_p = value_iteration(mdp_p, crate::DEFAULT_TOL, crate::DEFAULT_MAX_ITER)?.policy;
    let pi_star_phat =
        value_iteration(mdp_phat, crate::DEFAULT_TOL, crate::DEFAULT_MAX_ITER)?.policy;
    let v_star_p = policy_evaluation_closed(mdp_p, &pi_star_p)?;
    let v_star_phat = policy_evaluation_closed(mdp_phat, &pi_star_phat)?;
    let observed_optimal = v_star_p.sup_diff(&v_star_phat);

    Ok(Lemma1Report {
        observed_fixed,
        observed_optimal,
        bound: gamma * delta_g * v_max / (1.0 - gamma),
        delta_g,
        v_max,
    })
}

/// Output of [`lemma2_check`].
#[derive(Debug, Clone, Copy)]
pub struct Lemma2Report {
    /// `‖R_Q^Θ - R̂_Q^Θ‖_∞`.
    pub observed: f64,
    pub bound: f64,
    /// Max row TV between the paired catalogs (plays the role of δ_g + δ_c).
    pub delta_sum: f64,
    pub v_max: f64,
}

impl Lemma2Report {
    pub fn holds(&self) -> bool {
        self.observed <= self.bound + 1e-12
    }
}

fn optimal_returns(
    upper: &UpperMdpSpec,
    catalog: &[KernelPerAction],
) -> Result<Array1<f64>, DiagnosticsError> {
    let swapped = upper.with_catalog(catalog.to_vec())?;
    let (j, _) = lower_solve_all(&swapped, crate::DEFAULT_TOL, crate::DEFAULT_MAX_ITER)?;
    Ok(j)
}

fn theta_reward(upper: &UpperMdpSpec, j: &Array1<f64>, theta: &[usize]) -> Array1<f64> {
    let table = upper_reward_table(upper, j);
    Array1::from_iter(theta.iter().enumerate().map(|(p, &b)| table[(p, b)]))
}

fn check_theta(upper: &UpperMdpSpec, theta: &[usize]) -> Result<(), DiagnosticsError> {
    if theta.len() != upper.m() {
        return Err(DiagnosticsError::DimensionMismatch {
            left: theta.len(),
            right: upper.m(),
        });
    }
    if theta.iter().any(|&b| b >= upper.num_b()) {
        return Err(DiagnosticsError::MismatchedSpecs("theta action indices"));
    }
    Ok(())
}

/// Computes the upper-reward gap `‖R_Q^Θ - R̂_Q^Θ‖_∞` for an ideal /
/// estimated catalog pair under the shared upper kernel and cost of `upper`.
pub fn lemma2_check(
    upper: &UpperMdpSpec,
    catalog_ideal: &[KernelPerAction],
    catalog_est: &[KernelPerAction],
    theta: &[usize],
) -> Result<Lemma2Report, DiagnosticsError> {
    if catalog_ideal.len() != catalog_est.len() || catalog_ideal.len() != upper.m() {
        return Err(DiagnosticsError::CatalogMismatch {
            left: catalog_ideal.len(),
            right: catalog_est.len(),
        });
    }
    check_theta(upper, theta)?;
    let delta_sum = catalog_distance(catalog_ideal, catalog_est)?;
    let j_ideal = optimal_returns(upper, catalog_ideal)?;
    let j_est = optimal_returns(upper, catalog_est)?;
    let r_ideal = theta_reward(upper, &j_ideal, theta);
    let r_est = theta_reward(upper, &j_est, theta);
    let observed = linalg::sup_diff(r_ideal.view(), r_est.view());
    let v_max = upper.value_bound();
    let mu_inf = linalg::sup_norm(upper.mu0().view());
    let gamma = upper.gamma();
    Ok(Lemma2Report {
        observed,
        bound: gamma * delta_sum * v_max * mu_inf / (1.0 - gamma),
        delta_sum,
        v_max,
    })
}

/// Output of [`lemma3_check`].
#[derive(Debug, Clone, Copy)]
pub struct Lemma3Report {
    /// `‖W^Θ_Q - W^Θ_Q̂‖_∞`, both solved in closed form.
    pub observed: f64,
    pub bound: f64,
    pub delta_sum: f64,
    /// Max row TV between the two upper kernels.
    pub big_delta: f64,
    pub v_max: f64,
    pub w_max: f64,
}

impl Lemma3Report {
    pub fn holds(&self) -> bool {
        self.observed <= self.bound + 1e-12
    }
}

/// Closed-form evaluation of a higher-order policy: solves
/// `(I - λ Q^Θ) W = R^Θ`.
pub fn evaluate_theta(
    upper: &UpperMdpSpec,
    j: &Array1<f64>,
    theta: &[usize],
) -> Result<Array1<f64>, DiagnosticsError> {
    check_theta(upper, theta)?;
    let m = upper.m();
    let mut q_theta = Array2::zeros((m, m));
    for p in 0..m {
        q_theta.row_mut(p).assign(&upper.q()[theta[p]].row(p));
    }
    let r_theta = theta_reward(upper, j, theta);
    let mut coeff = Array2::eye(m);
    coeff.scaled_add(-upper.lambda(), &q_theta);
    Ok(linalg::solve(&coeff, &r_theta).map_err(MdpError::from)?)
}

/// Computes the higher-order value gap for a pair of upper MDPs sharing the
/// cost, template, and state identification: `upper_q` carries the ideal
/// catalog and ground-truth kernel, `upper_qhat` the estimated catalog and
/// empirical kernel.
pub fn lemma3_check(
    upper_q: &UpperMdpSpec,
    upper_qhat: &UpperMdpSpec,
    theta: &[usize],
) -> Result<Lemma3Report, DiagnosticsError> {
    if upper_q.m() != upper_qhat.m() {
        return Err(DiagnosticsError::CatalogMismatch {
            left: upper_q.m(),
            right: upper_qhat.m(),
        });
    }
    if upper_q.num_b() != upper_qhat.num_b() {
        return Err(DiagnosticsError::MismatchedSpecs("model-changing actions"));
    }
    if upper_q.lambda() != upper_qhat.lambda() || upper_q.gamma() != upper_qhat.gamma() {
        return Err(DiagnosticsError::MismatchedSpecs("discount factors"));
    }
    check_theta(upper_q, theta)?;

    let delta_sum = catalog_distance(upper_q.catalog(), upper_qhat.catalog())?;
    let big_delta = upper_kernel_distance(upper_q.q(), upper_qhat.q())?;

    let (j_q, _) = lower_solve_all(upper_q, crate::DEFAULT_TOL, crate::DEFAULT_MAX_ITER)?;
    let (j_qhat, _) = lower_solve_all(upper_qhat, crate::DEFAULT_TOL, crate::DEFAULT_MAX_ITER)?;
    let w_q = evaluate_theta(upper_q, &j_q, theta)?;
    let w_qhat = evaluate_theta(upper_qhat, &j_qhat, theta)?;
    let observed = linalg::sup_diff(w_q.view(), w_qhat.view());

    let gamma = upper_q.gamma();
    let lambda = upper_q.lambda();
    let v_max = upper_q.value_bound().max(upper_qhat.value_bound());
    let mu_inf = linalg::sup_norm(upper_q.mu0().view());
    // R_max over both reward tables so W_max bounds ‖W‖_∞ on either side.
    let r_table_q = upper_reward_table(upper_q, &j_q);
    let r_table_qhat = upper_reward_table(upper_qhat, &j_qhat);
    let r_max = r_table_q
        .iter()
        .chain(r_table_qhat.iter())
        .map(|r| r.abs())
        .fold(0.0f64, f64::max);
    let w_max = r_max / (1.0 - lambda);

    let bound = gamma * delta_sum * v_max * mu_inf / ((1.0 - gamma) * (1.0 - lambda))
        + (2.0 * big_delta * mu_inf * v_max + 2.0 * lambda * big_delta * w_max) / (1.0 - lambda);
    Ok(Lemma3Report {
        observed,
        bound,
        delta_sum,
        big_delta,
        v_max,
        w_max,
    })
}

/// Per-instance summary across all three bounds, for a constructed triple
/// (ideal configured catalog, ground-truth catalog, estimated catalog).
#[derive(Debug, Clone, Copy)]
pub struct ErrorBoundsReport {
    pub delta_g: f64,
    pub delta_c: f64,
    pub big_delta: f64,
    pub v_max: f64,
    pub w_max: f64,
    pub lemma1_bound: f64,
    pub lemma2_bound: f64,
    pub lemma3_bound: f64,
    pub observed_value_gap: f64,
    pub observed_reward_gap: f64,
    pub observed_w_gap: f64,
}

impl ErrorBoundsReport {
    pub fn all_hold(&self) -> bool {
        self.observed_value_gap <= self.lemma1_bound + 1e-12
            && self.observed_reward_gap <= self.lemma2_bound + 1e-12
            && self.observed_w_gap <= self.lemma3_bound + 1e-12
    }
}

/// Runs all three checks on one constructed instance. `upper_q` holds the
/// ideal catalog `P_c` and kernel `Q`; `catalog_truth` is the ground truth
/// `P` (configuration error only); `upper_qhat` holds the estimates
/// `(P̂, Q̂)`.
pub fn error_bounds_report(
    upper_q: &UpperMdpSpec,
    catalog_truth: &[KernelPerAction],
    upper_qhat: &UpperMdpSpec,
    theta: &[usize],
    pi: &DetPolicy,
) -> Result<ErrorBoundsReport, DiagnosticsError> {
    let delta_c = catalog_distance(upper_q.catalog(), catalog_truth)?;
    let delta_g = catalog_distance(catalog_truth, upper_qhat.catalog())?;

    // Lemma 1 on the worst (ground-truth, estimated) catalog pair.
    let mut observed_value_gap = 0.0f64;
    let mut lemma1_bound = 0.0f64;
    for (truth, est) in catalog_truth.iter().zip(upper_qhat.catalog()) {
        let lower_for = |kernel: &KernelPerAction| {
            LowerMdpSpec::new(
                kernel.clone(),
                upper_q.shared_reward().clone(),
                upper_q.gamma(),
                upper_q.mu0().clone(),
                crate::mdp::Horizon::Infinite,
            )
        };
        let mdp_truth = lower_for(truth)?;
        let mdp_est = lower_for(est)?;
        let rep = lemma1_check(&mdp_truth, &mdp_est, pi)?;
        observed_value_gap = observed_value_gap.max(rep.observed());
        lemma1_bound = lemma1_bound.max(rep.bound);
    }

    let l2 = lemma2_check(upper_q, upper_q.catalog(), upper_qhat.catalog(), theta)?;
    let l3 = lemma3_check(upper_q, upper_qhat, theta)?;

    // Bounds restated with the split δ_g + δ_c as in the lemma statements.
    let gamma = upper_q.gamma();
    let lambda = upper_q.lambda();
    let mu_inf = linalg::sup_norm(upper_q.mu0().view());
    let lemma2_bound = gamma * (delta_g + delta_c) * l2.v_max * mu_inf / (1.0 - gamma);
    let lemma3_bound = gamma * (delta_g + delta_c) * l3.v_max * mu_inf
        / ((1.0 - gamma) * (1.0 - lambda))
        + (2.0 * l3.big_delta * mu_inf * l3.v_max + 2.0 * lambda * l3.big_delta * l3.w_max)
            / (1.0 - lambda);

    Ok(ErrorBoundsReport {
        delta_g,
        delta_c,
        big_delta: l3.big_delta,
        v_max: l3.v_max,
        w_max: l3.w_max,
        lemma1_bound,
        lemma2_bound,
        lemma3_bound,
        observed_value_gap,
        observed_reward_gap: l2.observed,
        observed_w_gap: l3.observed,
    })
}

pub mod harness {
    //! Randomized instance construction for the bound checks. Instances are
    //! generated per-index from a counter-based stream of the suite seed, so
    //! failures are reproducible and the suite parallelizes deterministically.

    use super::*;
    use crate::mdp::Horizon;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rayon::prelude::*;

    /// Summary of one lemma suite run.
    #[derive(Debug, Clone, Copy)]
    pub struct LemmaSuiteReport {
        pub lemma: u8,
        pub instances: usize,
        pub violations: usize,
        pub max_observed: f64,
        /// Minimum of `bound - observed` across instances.
        pub min_margin: f64,
        /// Maximum of `observed / bound` across instances with a positive
        /// bound (tightness tracking, informational).
        pub max_ratio: f64,
    }

    pub fn random_stochastic_matrix(rng: &mut impl Rng, n: usize) -> Array2<f64> {
        let mut mat = Array2::zeros((n, n));
        for mut row in mat.rows_mut() {
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = rng.random::<f64>() + 1e-9;
                sum += *v;
            }
            row.mapv_inplace(|v| v / sum);
        }
        mat
    }

    pub fn random_kernel(rng: &mut impl Rng, n: usize, num_actions: usize) -> KernelPerAction {
        let mats = (0..num_actions)
            .map(|_| random_stochastic_matrix(rng, n))
            .collect();
        KernelPerAction::from_mats(mats).expect("construction is valid")
    }

    /// Moves at most `max_tv` of each row's mass toward a random column:
    /// `row' = (1-ε) row + ε e_j` has `TV(row, row') = ε (1 - row_j) ≤ ε`.
    pub fn perturb_kernel(
        rng: &mut impl Rng,
        kernel: &KernelPerAction,
        max_tv: f64,
    ) -> KernelPerAction {
        let n = kernel.n();
        let mats = kernel
            .mats()
            .iter()
            .map(|mat| {
                let mut out = mat.clone();
                for mut row in out.rows_mut() {
                    let eps = rng.random::<f64>() * max_tv;
                    let j = rng.random_range(0..n);
                    row.mapv_inplace(|v| (1.0 - eps) * v);
                    row[j] += eps;
                }
                out
            })
            .collect();
        KernelPerAction::from_mats(mats).expect("perturbation preserves validity")
    }

    pub fn random_lower_mdp(
        rng: &mut impl Rng,
        n: usize,
        num_actions: usize,
        gamma: f64,
    ) -> LowerMdpSpec {
        let kernel = random_kernel(rng, n, num_actions);
        let reward = Array2::from_shape_fn((n, num_actions), |_| rng.random::<f64>());
        let mu0 = Array1::from_elem(n, 1.0 / n as f64);
        LowerMdpSpec::new(kernel, reward, gamma, mu0, Horizon::Infinite)
            .expect("construction is valid")
    }

    fn random_upper(
        rng: &mut impl Rng,
        m: usize,
        n: usize,
        num_actions: usize,
        num_b: usize,
        gamma: f64,
        lambda: f64,
    ) -> UpperMdpSpec {
        let catalog = (0..m).map(|_| random_kernel(rng, n, num_actions)).collect();
        let reward = Array2::from_shape_fn((n, num_actions), |_| rng.random::<f64>());
        let q = (0..num_b)
            .map(|_| random_stochastic_matrix(rng, m))
            .collect();
        let cost = Array2::from_shape_fn((m, num_b), |_| rng.random::<f64>() * 0.5);
        let labels = (0..num_b).map(|b| format!("b{b}")).collect();
        let mu0 = Array1::from_elem(n, 1.0 / n as f64);
        UpperMdpSpec::new(
            catalog,
            reward,
            None,
            gamma,
            mu0,
            Horizon::Infinite,
            labels,
            q,
            cost,
            lambda,
            Horizon::Infinite,
        )
        .expect("construction is valid")
    }

    fn instance_result(lemma: u8, rng: &mut ChaCha8Rng) -> Result<(f64, f64), DiagnosticsError> {
        const GAMMAS: [f64; 3] = [0.5, 0.9, 0.95];
        match lemma {
            1 => {
                let n = rng.random_range(2..=6);
                let num_actions = rng.random_range(1..=3);
                let gamma = GAMMAS[rng.random_range(0..GAMMAS.len())];
                let mdp_p = random_lower_mdp(rng, n, num_actions, gamma);
                let kernel_hat = perturb_kernel(rng, mdp_p.kernel(), 0.1);
                let mdp_phat = LowerMdpSpec::new(
                    kernel_hat,
                    mdp_p.reward().clone(),
                    gamma,
                    mdp_p.mu0().clone(),
                    Horizon::Infinite,
                )?;
                let pi = DetPolicy::new(
                    (0..n).map(|_| rng.random_range(0..num_actions)).collect(),
                );
                let rep = lemma1_check(&mdp_p, &mdp_phat, &pi)?;
                Ok((rep.observed(), rep.bound))
            }
            2 => {
                let m = rng.random_range(2..=4);
                let n = rng.random_range(2..=4);
                let num_actions = rng.random_range(1..=2);
                let num_b = rng.random_range(1..=3);
                let gamma = GAMMAS[rng.random_range(0..2)];
                let upper = random_upper(rng, m, n, num_actions, num_b, gamma, 0.9);
                let est: Vec<KernelPerAction> = upper
                    .catalog()
                    .iter()
                    .map(|k| perturb_kernel(rng, k, 0.1))
                    .collect();
                let theta: Vec<usize> =
                    (0..m).map(|_| rng.random_range(0..num_b)).collect();
                let rep = lemma2_check(&upper, upper.catalog(), &est, &theta)?;
                Ok((rep.observed, rep.bound))
            }
            3 => {
                const LAMBDAS: [f64; 3] = [0.5, 0.9, 0.95];
                let m = rng.random_range(2..=4);
                let n = rng.random_range(2..=4);
                let num_actions = rng.random_range(1..=2);
                let num_b = rng.random_range(1..=3);
                let gamma = GAMMAS[rng.random_range(0..2)];
                let lambda = LAMBDAS[rng.random_range(0..LAMBDAS.len())];
                let upper_q = random_upper(rng, m, n, num_actions, num_b, gamma, lambda);
                let catalog_hat: Vec<KernelPerAction> = upper_q
                    .catalog()
                    .iter()
                    .map(|k| perturb_kernel(rng, k, 0.08))
                    .collect();
                let q_hat: Vec<Array2<f64>> = upper_q
                    .q()
                    .iter()
                    .map(|q| {
                        let k = KernelPerAction::from_mats(vec![q.clone()]).expect("valid");
                        perturb_kernel(rng, &k, 0.08).mats()[0].clone()
                    })
                    .collect();
                let upper_qhat = upper_q.with_catalog_and_q(catalog_hat, q_hat)?;
                let theta: Vec<usize> =
                    (0..m).map(|_| rng.random_range(0..num_b)).collect();
                let rep = lemma3_check(&upper_q, &upper_qhat, &theta)?;
                Ok((rep.observed, rep.bound))
            }
            other => Err(DiagnosticsError::UnknownLemma(other)),
        }
    }

    /// Runs `instances` randomized checks of one lemma and summarizes the
    /// margins. Instance `i` uses stream `i` of the suite seed.
    pub fn run_lemma_suite(
        lemma: u8,
        instances: usize,
        seed: u64,
    ) -> Result<LemmaSuiteReport, DiagnosticsError> {
        if !(1..=3).contains(&lemma) {
            return Err(DiagnosticsError::UnknownLemma(lemma));
        }
        let results: Vec<Result<(f64, f64), DiagnosticsError>> = (0..instances)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                instance_result(lemma, &mut rng)
            })
            .collect();
        let mut report = LemmaSuiteReport {
            lemma,
            instances,
            violations: 0,
            max_observed: 0.0,
            min_margin: f64::INFINITY,
            max_ratio: 0.0,
        };
        for res in results {
            let (observed, bound) = res?;
            if observed > bound + 1e-12 {
                report.violations += 1;
            }
            report.max_observed = report.max_observed.max(observed);
            report.min_margin = report.min_margin.min(bound - observed);
            if bound > 1e-300 {
                report.max_ratio = report.max_ratio.max(observed / bound);
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Horizon;
    use ndarray::{arr1, arr2};

    #[test]
    fn tv_distance_basics() {
        let p = arr1(&[0.5, 0.5]);
        assert_eq!(tv_distance(p.view(), p.view()).unwrap(), 0.0);
        let a = arr1(&[1.0, 0.0]);
        let b = arr1(&[0.0, 1.0]);
        assert_eq!(tv_distance(a.view(), b.view()).unwrap(), 1.0);
        let c = arr1(&[0.75, 0.25]);
        assert!((tv_distance(p.view(), c.view()).unwrap() - 0.25).abs() < 1e-15);
        assert!(tv_distance(a.view(), arr1(&[1.0]).view()).is_err());
    }

    fn small_mdp(kernel: KernelPerAction) -> LowerMdpSpec {
        let n = kernel.n();
        let na = kernel.num_actions();
        let reward = Array2::from_shape_fn((n, na), |(s, a)| (s + a) as f64 * 0.3 + 0.1);
        LowerMdpSpec::new(
            kernel,
            reward,
            0.9,
            Array1::from_elem(n, 1.0 / n as f64),
            Horizon::Infinite,
        )
        .unwrap()
    }

    #[test]
    fn lemma1_identical_kernels_give_zero() {
        let kernel = KernelPerAction::from_mats(vec![arr2(&[[0.3, 0.7], [0.6, 0.4]])]).unwrap();
        let mdp = small_mdp(kernel);
        let rep = lemma1_check(&mdp, &mdp.clone(), &DetPolicy::new(vec![0, 0])).unwrap();
        assert_eq!(rep.observed(), 0.0);
        assert_eq!(rep.bound, 0.0);
        assert!(rep.holds());
    }

    #[test]
    fn lemma1_single_state_is_trivially_zero() {
        let kernel = KernelPerAction::from_mats(vec![arr2(&[[1.0]])]).unwrap();
        let mdp = small_mdp(kernel);
        let rep = lemma1_check(&mdp, &mdp.clone(), &DetPolicy::new(vec![0])).unwrap();
        assert_eq!(rep.observed(), 0.0);
    }

    #[test]
    fn suite_seeds_are_reproducible() {
        let a = harness::run_lemma_suite(1, 10, 42).unwrap();
        let b = harness::run_lemma_suite(1, 10, 42).unwrap();
        assert_eq!(a.max_observed, b.max_observed);
        assert_eq!(a.min_margin, b.min_margin);
    }
}
