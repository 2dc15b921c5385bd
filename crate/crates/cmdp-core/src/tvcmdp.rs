//! Time-varying configurable MDPs: linearized configuration gains, the
//! value/kernel Jacobian, exponential configuration costs, and the budgeted
//! configuration optimizer.
//!
//! For a fixed policy the state values respond to a chain perturbation `x`
//! as
//!
//! ```text
//! V(P^π + x) ≈ N + M x N,   M = γ(I - γP^π)^{-1},   N = (I - γP^π)^{-1} r^π
//! ```
//!
//! so the first-order gain of `x` on the initial return is `⟨A, x⟩` with
//! `A = Mᵀ μ0 Nᵀ`. Maximizing `Σ_k ⟨A_k, x_k⟩` under the exponential budget
//! `Σ_{k,i,j} (e^{α|x_{k,ij}|} - 1) ≤ B`, zero row sums, and the `[0,1]`
//! feasibility box is a separable convex program: the budget constraint is
//! dualized with a multiplier `μ` found by outer bisection, the zero-row-sum
//! constraints with per-row multipliers `ν_i` found by inner bisection, and
//! each scalar subproblem has the closed form
//! `x = clip(sign(g) · max(0, ln(|g|/(μα))/α), box)` with `g = A_ij - ν_i`.
//!
//! When the budget does not bind, the solution is the box-constrained linear
//! program, whose rows have an exact closed form: all mass of the perturbed
//! row moves onto the column with the largest `A` entry.

use crate::linalg;
use crate::mdp::{
    chain_value, expected_return, value_iteration, DetPolicy, Horizon, KernelPerAction,
    LowerMdpSpec, MdpError,
};
use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TvcError {
    #[error(transparent)]
    Mdp(#[from] MdpError),

    #[error("cost exponent alpha must be finite and >= 0, got {0}")]
    InvalidAlpha(f64),

    #[error("budget must be finite and >= 0, got {0}")]
    InvalidBudget(f64),

    #[error("rounds must be >= 1")]
    InvalidRounds,

    #[error("expected one policy per episode ({expected}), got {got}")]
    PolicyCount { expected: usize, got: usize },

    #[error("episode {episode}, row {row}: feasibility box admits no zero-sum perturbation")]
    InfeasibleBox { episode: usize, row: usize },

    #[error("configuration plan violates {what}: {detail}")]
    PlanInfeasible { what: &'static str, detail: String },
}

/// A time-varying configurable MDP: one kernel per episode over a shared
/// `{S, A, r, γ, μ0}` template, an exponential configuration cost
/// `Σ β(e^{α|x_ij|} - 1)`, and a total budget.
#[derive(Debug, Clone)]
pub struct TvcScenario {
    reward: Array2<f64>,
    gamma: f64,
    mu0: Array1<f64>,
    kernels: Vec<KernelPerAction>,
    cost_alpha: f64,
    cost_beta: f64,
    budget: f64,
}

impl TvcScenario {
    pub fn new(
        reward: Array2<f64>,
        gamma: f64,
        mu0: Array1<f64>,
        kernels: Vec<KernelPerAction>,
        cost_alpha: f64,
        cost_beta: f64,
        budget: f64,
    ) -> Result<Self, TvcError> {
        if kernels.is_empty() {
            return Err(TvcError::PolicyCount {
                expected: 1,
                got: 0,
            });
        }
        // Template validation (dims, gamma, mu0) against every episode kernel.
        for k in &kernels {
            LowerMdpSpec::new(
                k.clone(),
                reward.clone(),
                gamma,
                mu0.clone(),
                Horizon::Infinite,
            )?;
        }
        if !(cost_alpha >= 0.0) || !cost_alpha.is_finite() {
            return Err(TvcError::InvalidAlpha(cost_alpha));
        }
        if !(cost_beta >= 0.0) || !cost_beta.is_finite() {
            return Err(TvcError::InvalidAlpha(cost_beta));
        }
        if !(budget >= 0.0) {
            return Err(TvcError::InvalidBudget(budget));
        }
        let mu0 = crate::mdp::validate_mu0(mu0)?;
        Ok(Self {
            reward,
            gamma,
            mu0,
            kernels,
            cost_alpha,
            cost_beta,
            budget,
        })
    }

    pub fn episodes(&self) -> usize {
        self.kernels.len()
    }

    pub fn n(&self) -> usize {
        self.kernels[0].n()
    }

    pub fn kernels(&self) -> &[KernelPerAction] {
        &self.kernels
    }

    pub fn reward(&self) -> &Array2<f64> {
        &self.reward
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu0(&self) -> &Array1<f64> {
        &self.mu0
    }

    pub fn cost_alpha(&self) -> f64 {
        self.cost_alpha
    }

    pub fn cost_beta(&self) -> f64 {
        self.cost_beta
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn with_budget(&self, budget: f64) -> Result<Self, TvcError> {
        if !(budget >= 0.0) {
            return Err(TvcError::InvalidBudget(budget));
        }
        let mut scn = self.clone();
        scn.budget = budget;
        Ok(scn)
    }

    /// The lower-level MDP of episode `k`.
    pub fn lower_mdp(&self, k: usize) -> LowerMdpSpec {
        LowerMdpSpec::new(
            self.kernels[k].clone(),
            self.reward.clone(),
            self.gamma,
            self.mu0.clone(),
            Horizon::Infinite,
        )
        .expect("validated at construction")
    }
}

/// First-order model of the configured state values at one linearization
/// point.
#[derive(Debug, Clone)]
pub struct LinearModel {
    /// `M = γ (I - γP^π)^{-1}`.
    pub m_mat: Array2<f64>,
    /// `N = (I - γP^π)^{-1} r^π`, the unperturbed values.
    pub n_vec: Array1<f64>,
    /// Objective matrix `A = Mᵀ μ0 Nᵀ`, so the linearized gain of `x` is
    /// `⟨A, x⟩ = μ0ᵀ M x N`.
    pub a_mat: Array2<f64>,
}

/// `∂V_i / ∂P^π_{pq}` packed as `t[i][p][q] = M_ip · N_q`.
#[derive(Debug, Clone)]
pub struct JacobianTensor {
    t: Array3<f64>,
}

impl JacobianTensor {
    pub fn tensor(&self) -> &Array3<f64> {
        &self.t
    }

    pub fn get(&self, i: usize, p: usize, q: usize) -> f64 {
        self.t[(i, p, q)]
    }

    /// Directional derivative of every state value along a chain
    /// perturbation: `(dV)_i = Σ_pq t[i][p][q] x[p][q]`.
    pub fn apply(&self, x: &Array2<f64>) -> Array1<f64> {
        let n = self.t.dim().0;
        let mut out = Array1::zeros(n);
        for i in 0..n {
            let slice = self.t.index_axis(ndarray::Axis(0), i);
            out[i] = slice
                .iter()
                .zip(x.iter())
                .map(|(t, x)| t * x)
                .sum::<f64>();
        }
        out
    }
}

/// A configuration plan: one chain perturbation per episode plus cost
/// accounting. Costs here use the budget normalization `β = 1`; multiply by
/// the scenario's `β` for reporting via [`config_cost`].
#[derive(Debug, Clone)]
pub struct ConfigPlan {
    pub xs: Vec<Array2<f64>>,
    pub cost_per_episode: Vec<f64>,
    pub total_cost: f64,
    /// Linearized objective value `Σ_k ⟨A_k, x_k⟩`.
    pub predicted_gain: f64,
    /// Converged dual upper bound on the linearized objective.
    pub dual_bound: f64,
    /// Set when the bisections exhausted their caps with a relative dual gap
    /// above 1e-5; the plan is still the best feasible one found.
    pub stalled: bool,
}

impl ConfigPlan {
    fn zero(episodes: usize, n: usize) -> Self {
        Self {
            xs: vec![Array2::zeros((n, n)); episodes],
            cost_per_episode: vec![0.0; episodes],
            total_cost: 0.0,
            predicted_gain: 0.0,
            dual_bound: 0.0,
            stalled: false,
        }
    }
}

/// Builds the linearization `(M, N, A)` at a policy-collapsed chain.
pub fn linearize(
    chain: &Array2<f64>,
    r_pi: &Array1<f64>,
    gamma: f64,
    mu0: &Array1<f64>,
) -> Result<LinearModel, TvcError> {
    let n = r_pi.len();
    let mut coeff = Array2::eye(n);
    coeff.scaled_add(-gamma, chain);
    let mut rhs = Array2::zeros((n, n + 1));
    for i in 0..n {
        rhs[(i, i)] = gamma;
        rhs[(i, n)] = r_pi[i];
    }
    let solved = linalg::solve_multi(&coeff, &rhs).map_err(MdpError::from)?;
    let m_mat = solved.slice(ndarray::s![.., ..n]).to_owned();
    let n_vec = solved.column(n).to_owned();
    let weights = m_mat.t().dot(mu0);
    let mut a_mat = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            a_mat[(i, j)] = weights[i] * n_vec[j];
        }
    }
    Ok(LinearModel {
        m_mat,
        n_vec,
        a_mat,
    })
}

/// The Jacobian of the state values w.r.t. the collapsed chain,
/// `t[i][p][q] = M_ip N_q`.
pub fn jacobian(
    chain: &Array2<f64>,
    r_pi: &Array1<f64>,
    gamma: f64,
) -> Result<JacobianTensor, TvcError> {
    let n = r_pi.len();
    let uniform = Array1::from_elem(n, 1.0 / n as f64);
    let lin = linearize(chain, r_pi, gamma, &uniform)?;
    let mut t = Array3::zeros((n, n, n));
    for i in 0..n {
        for p in 0..n {
            for q in 0..n {
                t[(i, p, q)] = lin.m_mat[(i, p)] * lin.n_vec[q];
            }
        }
    }
    Ok(JacobianTensor { t })
}

/// Exponential configuration cost `Σ_ij β (e^{α|x_ij|} - 1)`.
pub fn config_cost(x: &Array2<f64>, alpha: f64, beta: f64) -> f64 {
    beta * x
        .iter()
        .map(|v| (alpha * v.abs()).exp() - 1.0)
        .sum::<f64>()
}

fn cost_beta1(xs: &[Array2<f64>], alpha: f64) -> f64 {
    xs.iter().map(|x| config_cost(x, alpha, 1.0)).sum()
}

// ── Budgeted configuration optimizer ───────────────────────────────────────

const BISECT_ITERS: usize = 200;
const MULTIPLIER_TOL: f64 = 1e-10;
const DUAL_GAP_TOL: f64 = 1e-5;

/// Closed-form maximizer of `g·x - μ(e^{α|x|} - 1)` clipped to `[lo, hi]`.
/// The objective is concave with a kink at zero, so clipping the
/// unconstrained maximizer is exact.
fn scalar_opt(g: f64, mu_alpha: f64, alpha: f64, lo: f64, hi: f64) -> f64 {
    let magnitude = g.abs() / mu_alpha;
    let x = if magnitude <= 1.0 {
        0.0
    } else {
        g.signum() * magnitude.ln() / alpha
    };
    x.clamp(lo, hi)
}

/// Exact solution of the box LP `max ⟨a, x⟩ s.t. Σx = 0, base + x ∈ [0,1]`:
/// the perturbed row becomes a point mass on the best column.
fn lp_row(a_row: ndarray::ArrayView1<f64>, base_row: ndarray::ArrayView1<f64>) -> Array1<f64> {
    let mut best = 0;
    for (j, &v) in a_row.iter().enumerate() {
        if v > a_row[best] {
            best = j;
        }
    }
    let mut x = base_row.to_owned();
    x.mapv_inplace(|v| -v);
    x[best] += 1.0;
    x
}

struct RowSolution {
    x: Array1<f64>,
    dual: f64,
}

/// Solves one row subproblem for a fixed budget multiplier `μ`:
/// `max Σ_j (a_j x_j) - μ Σ_j (e^{α|x_j|} - 1)` subject to `Σ x_j = 0` and
/// the feasibility box, via bisection on the row multiplier `ν`.
fn solve_row(
    a_row: ndarray::ArrayView1<f64>,
    base_row: ndarray::ArrayView1<f64>,
    mu: f64,
    alpha: f64,
) -> RowSolution {
    let n = a_row.len();
    let mu_alpha = mu * alpha;
    let lo: Vec<f64> = base_row.iter().map(|&p| -p).collect();
    let hi: Vec<f64> = base_row.iter().map(|&p| 1.0 - p).collect();
    let eval = |nu: f64| -> Array1<f64> {
        Array1::from_iter(
            (0..n).map(|j| scalar_opt(a_row[j] - nu, mu_alpha, alpha, lo[j], hi[j])),
        )
    };
    let pad = mu_alpha * alpha.exp() + 1.0;
    let a_min = a_row.iter().copied().fold(f64::INFINITY, f64::min);
    let a_max = a_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut nu_lo = a_min - pad; // all entries pushed to the upper box: sum >= 0
    let mut nu_hi = a_max + pad; // all entries pushed to the lower box: sum <= 0
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (nu_lo + nu_hi);
        if eval(mid).sum() > 0.0 {
            nu_lo = mid;
        } else {
            nu_hi = mid;
        }
        if nu_hi - nu_lo <= MULTIPLIER_TOL * 1e-4 * nu_hi.abs().max(1.0) {
            break;
        }
    }
    let nu = nu_hi;
    let mut x = eval(nu);

    // The scalar solutions may leave a residual row sum when the bisection
    // lands inside a box-transition window; absorb it into the entries with
    // the most box room (largest first) so the returned row is feasible.
    let mut residual = x.sum();
    if residual != 0.0 {
        let mut order: Vec<usize> = (0..n).collect();
        let room = |j: usize, r: f64| if r > 0.0 { x[j] - lo[j] } else { hi[j] - x[j] };
        order.sort_by(|&a, &b| {
            room(b, residual)
                .partial_cmp(&room(a, residual))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for j in order {
            if residual == 0.0 {
                break;
            }
            let take = if residual > 0.0 {
                residual.min(x[j] - lo[j])
            } else {
                residual.max(x[j] - hi[j])
            };
            x[j] -= take;
            residual -= take;
        }
    }

    // Row dual value at nu: a valid upper bound on the row optimum.
    let dual = (0..n)
        .map(|j| {
            let g = a_row[j] - nu;
            let xj = scalar_opt(g, mu_alpha, alpha, lo[j], hi[j]);
            g * xj - mu * ((alpha * xj.abs()).exp() - 1.0)
        })
        .sum();
    RowSolution { x, dual }
}

struct MuSolution {
    xs: Vec<Array2<f64>>,
    cost: f64,
    gain: f64,
    dual: f64,
}

fn solve_for_mu(a_mats: &[Array2<f64>], base_chains: &[Array2<f64>], mu: f64, alpha: f64) -> MuSolution {
    let mut xs = Vec::with_capacity(a_mats.len());
    let mut dual_rows = 0.0;
    for (a, base) in a_mats.iter().zip(base_chains) {
        let n = base.nrows();
        let mut x = Array2::zeros((n, n));
        for i in 0..n {
            let row = solve_row(a.row(i), base.row(i), mu, alpha);
            x.row_mut(i).assign(&row.x);
            dual_rows += row.dual;
        }
        xs.push(x);
    }
    let cost = cost_beta1(&xs, alpha);
    let gain = xs
        .iter()
        .zip(a_mats)
        .map(|(x, a)| x.iter().zip(a.iter()).map(|(x, a)| x * a).sum::<f64>())
        .sum();
    MuSolution {
        xs,
        cost,
        gain,
        dual: dual_rows,
    }
}

/// Core budgeted solve of the linearized configuration problem at fixed
/// linearization matrices. `base_chains` provide the `[0,1]` feasibility
/// boxes.
pub(crate) fn optimize_at(
    a_mats: &[Array2<f64>],
    base_chains: &[Array2<f64>],
    alpha: f64,
    budget: f64,
) -> Result<ConfigPlan, TvcError> {
    debug_assert_eq!(a_mats.len(), base_chains.len());
    for (k, base) in base_chains.iter().enumerate() {
        for (i, row) in base.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(-1e-9..=1.0 + 1e-9).contains(&p)) {
                return Err(TvcError::InfeasibleBox {
                    episode: k,
                    row: i,
                });
            }
        }
    }

    // Budget-slack case (including alpha = 0, where the cost vanishes):
    // the box LP solution is exact and dual-gap free.
    let lp_xs: Vec<Array2<f64>> = a_mats
        .iter()
        .zip(base_chains)
        .map(|(a, base)| {
            let n = base.nrows();
            let mut x = Array2::zeros((n, n));
            for i in 0..n {
                x.row_mut(i).assign(&lp_row(a.row(i), base.row(i)));
            }
            x
        })
        .collect();
    let lp_cost = cost_beta1(&lp_xs, alpha);
    let lp_gain: f64 = lp_xs
        .iter()
        .zip(a_mats)
        .map(|(x, a)| x.iter().zip(a.iter()).map(|(x, a)| x * a).sum::<f64>())
        .sum();
    if lp_cost <= budget || alpha == 0.0 {
        let cost_per_episode = lp_xs.iter().map(|x| config_cost(x, alpha, 1.0)).collect();
        return Ok(ConfigPlan {
            xs: lp_xs,
            cost_per_episode,
            total_cost: lp_cost,
            predicted_gain: lp_gain,
            dual_bound: lp_gain,
            stalled: false,
        });
    }
    if budget == 0.0 {
        let n = base_chains[0].nrows();
        return Ok(ConfigPlan::zero(a_mats.len(), n));
    }

    // Binding budget: outer bisection on the budget multiplier.
    let a_max = a_mats
        .iter()
        .flat_map(|a| a.iter())
        .map(|v| v.abs())
        .fold(0.0f64, f64::max);
    let mut mu_lo = 1e-12; // cost too high on this side (approaches the LP)
    let mut mu_hi = (2.0 * a_max + 1.0) / alpha;
    let mut best: Option<MuSolution> = None;
    let mut dual_bound = f64::INFINITY;
    for _ in 0..BISECT_ITERS {
        let mu = 0.5 * (mu_lo + mu_hi);
        let sol = solve_for_mu(a_mats, base_chains, mu, alpha);
        dual_bound = dual_bound.min(sol.dual + mu * budget);
        if sol.cost > budget {
            mu_lo = mu;
        } else {
            if best.as_ref().is_none_or(|b| sol.gain > b.gain) {
                best = Some(sol);
            }
            mu_hi = mu;
        }
        if mu_lo - mu_hi != 0.0 && (mu_hi - mu_lo).abs() <= MULTIPLIER_TOL * mu_hi.max(1.0) {
            break;
        }
    }
    let best = match best {
        Some(b) => b,
        // The feasible side was never reached inside the caps; fall back to
        // the largest multiplier, whose solution is maximally conservative.
        None => solve_for_mu(a_mats, base_chains, mu_hi, alpha),
    };
    let gap = (dual_bound - best.gain) / dual_bound.abs().max(1.0);
    let cost_per_episode = best.xs.iter().map(|x| config_cost(x, alpha, 1.0)).collect();
    Ok(ConfigPlan {
        total_cost: cost_beta1(&best.xs, alpha),
        cost_per_episode,
        predicted_gain: best.gain,
        dual_bound,
        stalled: gap > DUAL_GAP_TOL,
        xs: best.xs,
    })
}

/// Linearizes every episode at its unconfigured chain under the given
/// policies and solves the budgeted configuration problem.
pub fn optimize_configuration(
    scn: &TvcScenario,
    policies: &[DetPolicy],
) -> Result<ConfigPlan, TvcError> {
    if policies.len() != scn.episodes() {
        return Err(TvcError::PolicyCount {
            expected: scn.episodes(),
            got: policies.len(),
        });
    }
    let mut a_mats = Vec::with_capacity(scn.episodes());
    let mut base_chains = Vec::with_capacity(scn.episodes());
    for (k, pi) in policies.iter().enumerate() {
        let mdp = scn.lower_mdp(k);
        let (chain, r_pi) = mdp.chain_under(pi)?;
        let lin = linearize(&chain, &r_pi, scn.gamma(), scn.mu0())?;
        a_mats.push(lin.a_mat);
        base_chains.push(chain);
    }
    optimize_at(&a_mats, &base_chains, scn.cost_alpha(), scn.budget())
}

/// Re-checks a plan's Eq.-style feasibility from scratch: zero row sums,
/// the `[0,1]` box on the configured chains, and the budget (with `β = 1`).
pub fn validate_plan(
    scn: &TvcScenario,
    policies: &[DetPolicy],
    plan: &ConfigPlan,
) -> Result<(), TvcError> {
    if policies.len() != scn.episodes() || plan.xs.len() != scn.episodes() {
        return Err(TvcError::PolicyCount {
            expected: scn.episodes(),
            got: policies.len().min(plan.xs.len()),
        });
    }
    for (k, (x, pi)) in plan.xs.iter().zip(policies).enumerate() {
        let (chain, _) = scn.lower_mdp(k).chain_under(pi)?;
        for i in 0..x.nrows() {
            let sum: f64 = x.row(i).sum();
            if sum.abs() > 1e-8 {
                return Err(TvcError::PlanInfeasible {
                    what: "zero row sums",
                    detail: format!("episode {k}, row {i}: sum {sum:.3e}"),
                });
            }
            for j in 0..x.ncols() {
                let entry = chain[(i, j)] + x[(i, j)];
                if !(-1e-8..=1.0 + 1e-8).contains(&entry) {
                    return Err(TvcError::PlanInfeasible {
                        what: "configured-chain box",
                        detail: format!("episode {k}, entry ({i}, {j}): {entry:.12}"),
                    });
                }
            }
        }
    }
    let total = cost_beta1(&plan.xs, scn.cost_alpha());
    if total > scn.budget() + 1e-6 {
        return Err(TvcError::PlanInfeasible {
            what: "budget",
            detail: format!("cost {total:.9} > budget {:.9}", scn.budget()),
        });
    }
    Ok(())
}

/// Solution of the alternating scheme: the final plan, per-episode policies,
/// and the exact (non-linearized) objective `Σ_k J(π_k, P_k + x_k)`.
#[derive(Debug, Clone)]
pub struct TvcSolution {
    pub plan: ConfigPlan,
    pub policies: Vec<DetPolicy>,
    pub objective: f64,
    pub per_episode: Vec<f64>,
}

fn exact_objective(
    scn: &TvcScenario,
    policies: &[DetPolicy],
    xs: &[Array2<f64>],
) -> Result<(f64, Vec<f64>), TvcError> {
    let mut per_episode = Vec::with_capacity(scn.episodes());
    for (k, (pi, x)) in policies.iter().zip(xs).enumerate() {
        let mdp = scn.lower_mdp(k);
        let (chain, r_pi) = mdp.chain_under(pi)?;
        let v = chain_value(&(&chain + x), &r_pi, scn.gamma())?;
        per_episode.push(v.dot(scn.mu0()));
    }
    Ok((per_episode.iter().sum(), per_episode))
}

/// Lifts a configured chain back to a per-action kernel: only the rows
/// `(s, π(s))` carry the configured probabilities.
fn lift_kernel(
    kernel: &KernelPerAction,
    pi: &DetPolicy,
    configured_chain: &Array2<f64>,
) -> Result<KernelPerAction, TvcError> {
    let mut mats = kernel.mats().to_vec();
    for s in 0..kernel.n() {
        mats[pi.action(s)]
            .row_mut(s)
            .assign(&configured_chain.row(s));
    }
    Ok(KernelPerAction::new(kernel.labels().to_vec(), mats)?)
}

/// Alternating solver for the original (non-linearized) problem: per round,
/// re-optimize the per-episode policies on the configured kernels, then
/// re-linearize at the configured chains and re-solve the budgeted program
/// for the full perturbation (so the budget always constrains the total
/// deviation from the nature-given kernels). Steps that would lower the
/// exact objective are damped by a backtracking line search, and the best
/// iterate seen is returned, so the reported objective is nondecreasing
/// across rounds.
pub fn solve_tvcmdp(scn: &TvcScenario, rounds: usize) -> Result<TvcSolution, TvcError> {
    if rounds == 0 {
        return Err(TvcError::InvalidRounds);
    }
    let episodes = scn.episodes();
    let n = scn.n();

    let mut policies = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let out = value_iteration(&scn.lower_mdp(k), crate::DEFAULT_TOL, crate::DEFAULT_MAX_ITER)?;
        policies.push(out.policy);
    }
    let mut xs = vec![Array2::<f64>::zeros((n, n)); episodes];

    let (baseline, per_episode) = exact_objective(scn, &policies, &xs)?;
    let mut best = TvcSolution {
        plan: ConfigPlan::zero(episodes, n),
        policies: policies.clone(),
        objective: baseline,
        per_episode,
    };

    for _ in 0..rounds {
        // x-step: linearize at the current configured chains, solve for the
        // full perturbation, damp on the exact objective.
        let mut a_mats = Vec::with_capacity(episodes);
        let mut base_chains = Vec::with_capacity(episodes);
        for (k, pi) in policies.iter().enumerate() {
            let (chain, r_pi) = scn.lower_mdp(k).chain_under(pi)?;
            let configured = &chain + &xs[k];
            let lin = linearize(&configured, &r_pi, scn.gamma(), scn.mu0())?;
            a_mats.push(lin.a_mat);
            base_chains.push(chain);
        }
        let plan = optimize_at(&a_mats, &base_chains, scn.cost_alpha(), scn.budget())?;

        let mut chosen = (exact_objective(scn, &policies, &xs)?, xs.clone());
        for &t in &[1.0, 0.5, 0.25, 0.125] {
            let xs_t: Vec<Array2<f64>> = xs
                .iter()
                .zip(&plan.xs)
                .map(|(x0, x1)| x0 * (1.0 - t) + x1 * t)
                .collect();
            let obj_t = exact_objective(scn, &policies, &xs_t)?;
            if obj_t.0 > chosen.0 .0 {
                chosen = (obj_t, xs_t);
            }
        }
        xs = chosen.1;
        if chosen.0 .0 > best.objective {
            best = TvcSolution {
                plan: replan(&plan, &xs, &a_mats, scn.cost_alpha()),
                policies: policies.clone(),
                objective: chosen.0 .0,
                per_episode: chosen.0 .1,
            };
        }

        // policy step: re-optimize each episode on the lifted configured
        // kernel, then re-express the perturbation against the new chain.
        for k in 0..episodes {
            let mdp = scn.lower_mdp(k);
            let (chain, _) = mdp.chain_under(&policies[k])?;
            let lifted = lift_kernel(mdp.kernel(), &policies[k], &(&chain + &xs[k]))?;
            let lifted_mdp = LowerMdpSpec::new(
                lifted.clone(),
                scn.reward.clone(),
                scn.gamma,
                scn.mu0.clone(),
                Horizon::Infinite,
            )?;
            let out = value_iteration(&lifted_mdp, crate::DEFAULT_TOL, crate::DEFAULT_MAX_ITER)?;
            let (configured_chain, _) = lifted_mdp.chain_under(&out.policy)?;
            let (original_chain, _) = mdp.chain_under(&out.policy)?;
            xs[k] = &configured_chain - &original_chain;
            policies[k] = out.policy;
        }
        let (obj, per_episode) = exact_objective(scn, &policies, &xs)?;
        if obj > best.objective {
            let mut a_mats = Vec::with_capacity(episodes);
            for (k, pi) in policies.iter().enumerate() {
                let (chain, r_pi) = scn.lower_mdp(k).chain_under(pi)?;
                let lin = linearize(&(&chain + &xs[k]), &r_pi, scn.gamma(), scn.mu0())?;
                a_mats.push(lin.a_mat);
            }
            let plan_now = replan(&plan, &xs, &a_mats, scn.cost_alpha());
            best = TvcSolution {
                plan: plan_now,
                policies: policies.clone(),
                objective: obj,
                per_episode,
            };
        }
    }
    Ok(best)
}

/// Rebuilds plan bookkeeping (costs, linearized gain) for a given set of
/// perturbations.
fn replan(template: &ConfigPlan, xs: &[Array2<f64>], a_mats: &[Array2<f64>], alpha: f64) -> ConfigPlan {
    let cost_per_episode: Vec<f64> = xs.iter().map(|x| config_cost(x, alpha, 1.0)).collect();
    let predicted_gain = xs
        .iter()
        .zip(a_mats)
        .map(|(x, a)| x.iter().zip(a.iter()).map(|(x, a)| x * a).sum::<f64>())
        .sum();
    ConfigPlan {
        xs: xs.to_vec(),
        total_cost: cost_per_episode.iter().sum(),
        cost_per_episode,
        predicted_gain,
        dual_bound: template.dual_bound,
        stalled: template.stalled,
    }
}

/// One row of the budget-sweep comparison.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub budget: f64,
    pub baseline: f64,
    pub random_mean: f64,
    pub random_std: f64,
    pub optimized: f64,
}

/// Sweeps the budget grid: per budget, the unconfigured baseline, the
/// alternating solver's exact objective (carrying the best plan forward,
/// since plans stay feasible as the budget grows), and the exact objectives
/// of random admissible configurations drawn at the optimized plan's cost.
pub fn budget_sweep(
    scn: &TvcScenario,
    budgets: &[f64],
    rounds: usize,
    random_draws: usize,
    seed: u64,
) -> Result<Vec<SweepRow>, TvcError> {
    let episodes = scn.episodes();
    let mut baseline_policies = Vec::with_capacity(episodes);
    let mut base_chains = Vec::with_capacity(episodes);
    let mut base_rewards = Vec::with_capacity(episodes);
    let mut baseline = 0.0;
    for k in 0..episodes {
        let mdp = scn.lower_mdp(k);
        let out = value_iteration(&mdp, crate::DEFAULT_TOL, crate::DEFAULT_MAX_ITER)?;
        baseline += expected_return(&out.values, mdp.mu0())?;
        let (chain, r_pi) = mdp.chain_under(&out.policy)?;
        base_chains.push(chain);
        base_rewards.push(r_pi);
        baseline_policies.push(out.policy);
    }

    let mut rows = Vec::with_capacity(budgets.len());
    let mut carried: Option<(TvcSolution, f64)> = None; // (solution, its cost)
    for (b_idx, &budget) in budgets.iter().enumerate() {
        let scn_b = scn.with_budget(budget)?;
        let sol = solve_tvcmdp(&scn_b, rounds)?;
        let sol_cost = cost_beta1(&sol.plan.xs, scn.cost_alpha());
        let better = match &carried {
            Some((prev, prev_cost)) => *prev_cost <= budget && prev.objective > sol.objective,
            None => false,
        };
        if !better {
            carried = Some((sol, sol_cost));
        }
        let (best_sol, best_cost) = carried.as_ref().unwrap();

        let mut draws = Vec::with_capacity(random_draws);
        for d in 0..random_draws {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((b_idx as u64) << 32) | d as u64);
            let value = random_configuration_value(
                scn,
                &base_chains,
                &base_rewards,
                *best_cost,
                &mut rng,
            )?;
            draws.push(value);
        }
        let (random_mean, random_std) = mean_std(&draws);
        rows.push(SweepRow {
            budget,
            baseline,
            random_mean,
            random_std,
            optimized: best_sol.objective,
        });
    }
    Ok(rows)
}

/// Draws one random admissible configuration scaled to the target cost and
/// returns its exact objective under the baseline policies.
fn random_configuration_value(
    scn: &TvcScenario,
    base_chains: &[Array2<f64>],
    base_rewards: &[Array1<f64>],
    target_cost: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TvcError> {
    let n = scn.n();
    // Direction: per row, a random point of the simplex minus the base row;
    // scaling by any s in [0,1] keeps the configured chain a stochastic
    // matrix.
    let mut dirs = Vec::with_capacity(base_chains.len());
    for base in base_chains {
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            let mut q = Array1::from_iter((0..n).map(|_| rng.random::<f64>() + 1e-12));
            let sum = q.sum();
            q.mapv_inplace(|v| v / sum);
            for j in 0..n {
                d[(i, j)] = q[j] - base[(i, j)];
            }
        }
        dirs.push(d);
    }
    let cost_at = |s: f64| -> f64 {
        dirs.iter()
            .map(|d| config_cost(&d.mapv(|v| v * s), scn.cost_alpha(), 1.0))
            .sum()
    };
    let scale = if cost_at(1.0) <= target_cost {
        1.0
    } else {
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if cost_at(mid) > target_cost {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    };
    let mut total = 0.0;
    for ((d, base), r_pi) in dirs.iter().zip(base_chains).zip(base_rewards) {
        let configured = base + &d.mapv(|v| v * scale);
        let v = chain_value(&configured, r_pi, scn.gamma())?;
        total += v.dot(scn.mu0());
    }
    Ok(total)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (mean, var.sqrt())
}
