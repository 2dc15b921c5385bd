//! Exact tabular MDP primitives.
//!
//! A lower-level MDP is `{S, A, P, μ0, r, γ, T}` with a per-action
//! row-stochastic kernel. Policy evaluation is available in closed form,
//!
//! ```text
//! V^π = (I - γ P^π)^{-1} r^π
//! ```
//!
//! solved as a dense linear system (never by explicit inversion), and the
//! optimal values come from the Bellman optimality update
//!
//! ```text
//! V^{h+1}(s) = max_a ( r(s,a) + γ Σ_{s'} P(s'|s,a) V^h(s') )
//! ```
//!
//! started from `V^0 = 0`. Greedy ties always resolve to the lowest action
//! index so that every solver output is reproducible.

use crate::linalg::{self, SingularSystem};
use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

/// Tolerance for accepting a row as stochastic; rows within it are
/// renormalized before use (scenario files carry decimal literals).
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Error)]
pub enum MdpError {
    #[error("row {row} of action {action:?} sums to {sum:.12} (expected 1 within 1e-9)")]
    RowSum { action: String, row: usize, sum: f64 },

    #[error("negative entry {value} at ({row}, {col}) of action {action:?}")]
    NegativeEntry {
        action: String,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("initial distribution sums to {sum:.12} (expected 1 within 1e-9)")]
    InitialDistributionSum { sum: f64 },

    #[error("initial distribution has negative entry {value} at index {index}")]
    InitialDistributionNegative { index: usize, value: f64 },

    #[error("discount factor must lie in [0, 1), got {0}")]
    InvalidGamma(f64),

    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    #[error("{context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("closed-form evaluation failed: {0}")]
    Singular(#[from] SingularSystem),

    #[error("closed-form residual {residual:.3e} exceeds tolerance; input likely invalid")]
    ResidualTooLarge { residual: f64 },
}

/// Episode length used when sampling trajectories. Purely a sampling
/// truncation; the solvers always target the discounted infinite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// One `(s, a, r, s')` interaction record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

/// Per-action row-stochastic transition matrices `P(s'|s,a)` for one
/// environment.
///
/// Construction validates and renormalizes, so a `KernelPerAction` value is
/// always a valid kernel: every entry in `[0, 1]`, every row summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPerAction {
    labels: Vec<String>,
    mats: Vec<Array2<f64>>,
}

/// Checks the kernel invariants on raw per-action matrices: all square with
/// a shared state count, entries non-negative, rows summing to 1 within
/// [`ROW_SUM_TOL`].
pub fn validate_kernel(labels: &[String], mats: &[Array2<f64>]) -> Result<(), MdpError> {
    if mats.is_empty() {
        return Err(MdpError::DimensionMismatch {
            context: "kernel needs at least one action matrix",
            expected: 1,
            got: 0,
        });
    }
    if labels.len() != mats.len() {
        return Err(MdpError::DimensionMismatch {
            context: "action labels vs matrices",
            expected: mats.len(),
            got: labels.len(),
        });
    }
    let n = mats[0].nrows();
    for (label, mat) in labels.iter().zip(mats) {
        if mat.nrows() != n || mat.ncols() != n {
            return Err(MdpError::DimensionMismatch {
                context: "per-action matrix must be n x n with shared n",
                expected: n,
                got: mat.nrows().max(mat.ncols()),
            });
        }
        for (row_idx, row) in mat.rows().into_iter().enumerate() {
            let mut sum = 0.0;
            for (col_idx, &v) in row.iter().enumerate() {
                if v < 0.0 || !v.is_finite() {
                    return Err(MdpError::NegativeEntry {
                        action: label.clone(),
                        row: row_idx,
                        col: col_idx,
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::RowSum {
                    action: label.clone(),
                    row: row_idx,
                    sum,
                });
            }
        }
    }
    Ok(())
}

fn renormalize_rows(mut mat: Array2<f64>) -> Array2<f64> {
    for mut row in mat.rows_mut() {
        let sum: f64 = row.iter().sum();
        if sum != 1.0 {
            row.mapv_inplace(|v| v / sum);
        }
    }
    mat
}

impl KernelPerAction {
    /// Validates and renormalizes per-action matrices under the given labels.
    pub fn new(labels: Vec<String>, mats: Vec<Array2<f64>>) -> Result<Self, MdpError> {
        validate_kernel(&labels, &mats)?;
        let mats = mats.into_iter().map(renormalize_rows).collect();
        Ok(Self { labels, mats })
    }

    /// Like [`KernelPerAction::new`] with synthesized labels `a0, a1, ...`.
    pub fn from_mats(mats: Vec<Array2<f64>>) -> Result<Self, MdpError> {
        let labels = (0..mats.len()).map(|a| format!("a{a}")).collect();
        Self::new(labels, mats)
    }

    pub fn n(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.mats.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mats(&self) -> &[Array2<f64>] {
        &self.mats
    }

    pub fn mat(&self, a: usize) -> &Array2<f64> {
        &self.mats[a]
    }

    pub fn row(&self, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.mats[a].row(s)
    }
}

/// A deterministic stationary policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DetPolicy {
    choice: Vec<usize>,
}

impl DetPolicy {
    pub fn new(choice: Vec<usize>) -> Self {
        Self { choice }
    }

    pub fn n(&self) -> usize {
        self.choice.len()
    }

    pub fn action(&self, s: usize) -> usize {
        self.choice[s]
    }

    pub fn choices(&self) -> &[usize] {
        &self.choice
    }
}

/// State values `V(s)`, in reward units.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector {
    v: Array1<f64>,
}

impl ValueVector {
    pub fn new(v: Array1<f64>) -> Self {
        Self { v }
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// `‖self - other‖_∞`.
    pub fn sup_diff(&self, other: &ValueVector) -> f64 {
        linalg::sup_diff(self.v.view(), other.v.view())
    }
}

impl std::ops::Index<usize> for ValueVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.v[i]
    }
}

/// A full lower-level MDP `{S, A, P, μ0, r, γ, T}`.
#[derive(Debug, Clone)]
pub struct LowerMdpSpec {
    kernel: KernelPerAction,
    reward: Array2<f64>,
    gamma: f64,
    mu0: Array1<f64>,
    horizon: Horizon,
}

/// Checks that `mu0` is a probability vector (within [`ROW_SUM_TOL`]) and
/// returns the renormalized copy.
pub(crate) fn validate_mu0(mu0: Array1<f64>) -> Result<Array1<f64>, MdpError> {
    let mut sum = 0.0;
    for (index, &value) in mu0.iter().enumerate() {
        if value < 0.0 || !value.is_finite() {
            return Err(MdpError::InitialDistributionNegative { index, value });
        }
        sum += value;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(MdpError::InitialDistributionSum { sum });
    }
    Ok(if sum == 1.0 { mu0 } else { mu0 / sum })
}

impl LowerMdpSpec {
    pub fn new(
        kernel: KernelPerAction,
        reward: Array2<f64>,
        gamma: f64,
        mu0: Array1<f64>,
        horizon: Horizon,
    ) -> Result<Self, MdpError> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::InvalidGamma(gamma));
        }
        if reward.nrows() != kernel.n() {
            return Err(MdpError::DimensionMismatch {
                context: "reward rows vs state count",
                expected: kernel.n(),
                got: reward.nrows(),
            });
        }
        if reward.ncols() != kernel.num_actions() {
            return Err(MdpError::DimensionMismatch {
                context: "reward columns vs action count",
                expected: kernel.num_actions(),
                got: reward.ncols(),
            });
        }
        if mu0.len() != kernel.n() {
            return Err(MdpError::DimensionMismatch {
                context: "mu0 length vs state count",
                expected: kernel.n(),
                got: mu0.len(),
            });
        }
        let mu0 = validate_mu0(mu0)?;
        Ok(Self {
            kernel,
            reward,
            gamma,
            mu0,
            horizon,
        })
    }

    pub fn kernel(&self) -> &KernelPerAction {
        &self.kernel
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

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.kernel.n()
    }

    pub fn num_actions(&self) -> usize {
        self.kernel.num_actions()
    }

    /// `max_{s,a} |r(s,a)|`.
    pub fn max_abs_reward(&self) -> f64 {
        linalg::sup_norm(
            self.reward
                .view()
                .into_shape_with_order(self.reward.len())
                .unwrap(),
        )
    }

    /// The discounted value bound `max|r| / (1 - γ)`; every state value this
    /// crate produces satisfies `|V(s)| <= value_bound()`.
    pub fn value_bound(&self) -> f64 {
        self.max_abs_reward() / (1.0 - self.gamma)
    }

    /// Collapses the kernel and reward table under a policy: row `s` of the
    /// returned chain is `P(·|s, π(s))` and `r^π(s) = r(s, π(s))`.
    pub fn chain_under(&self, pi: &DetPolicy) -> Result<(Array2<f64>, Array1<f64>), MdpError> {
        let n = self.n();
        if pi.n() != n {
            return Err(MdpError::DimensionMismatch {
                context: "policy length vs state count",
                expected: n,
                got: pi.n(),
            });
        }
        let mut chain = Array2::zeros((n, n));
        let mut r_pi = Array1::zeros(n);
        for s in 0..n {
            let a = pi.action(s);
            if a >= self.num_actions() {
                return Err(MdpError::DimensionMismatch {
                    context: "policy action index vs action count",
                    expected: self.num_actions(),
                    got: a,
                });
            }
            chain.row_mut(s).assign(&self.kernel.row(s, a));
            r_pi[s] = self.reward[(s, a)];
        }
        Ok((chain, r_pi))
    }

    /// Q-values `r(s,a) + γ Σ_{s'} P(s'|s,a) v(s')` for every `(s, a)`.
    fn q_values(&self, v: &Array1<f64>) -> Array2<f64> {
        let n = self.n();
        let na = self.num_actions();
        let mut q = Array2::zeros((n, na));
        for a in 0..na {
            let pv = self.kernel.mat(a).dot(v);
            for s in 0..n {
                q[(s, a)] = self.reward[(s, a)] + self.gamma * pv[s];
            }
        }
        q
    }
}

fn greedy_from_q(q: &Array2<f64>) -> DetPolicy {
    let choice = q
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (a, &val) in row.iter().enumerate() {
                // strict '>' keeps the lowest index on ties
                if val > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    DetPolicy::new(choice)
}

/// Closed-form evaluation of a policy-collapsed chain: solves
/// `(I - γ C) v = r` and checks the residual.
pub fn chain_value(chain: &Array2<f64>, r: &Array1<f64>, gamma: f64) -> Result<Array1<f64>, MdpError> {
    let n = r.len();
    let mut a = Array2::eye(n);
    a.scaled_add(-gamma, chain);
    let v = linalg::solve(&a, r)?;
    let residual = linalg::sup_diff(a.dot(&v).view(), r.view());
    let tol = 1e-9 * (1.0 + linalg::sup_norm(r.view()));
    if residual > tol {
        return Err(MdpError::ResidualTooLarge { residual });
    }
    Ok(v)
}

/// Closed-form policy evaluation `V^π = (I - γ P^π)^{-1} r^π`.
pub fn policy_evaluation_closed(
    mdp: &LowerMdpSpec,
    pi: &DetPolicy,
) -> Result<ValueVector, MdpError> {
    let (chain, r_pi) = mdp.chain_under(pi)?;
    Ok(ValueVector::new(chain_value(&chain, &r_pi, mdp.gamma())?))
}

/// Output of [`value_iteration`]. `converged` is false when the iteration
/// cap was reached with the sup-norm gap still above tolerance; the partial
/// result is returned either way.
#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub values: ValueVector,
    pub policy: DetPolicy,
    pub iters: usize,
    pub sup_gap: f64,
    pub converged: bool,
}

/// Bellman optimality iteration from `V^0 = 0` until
/// `‖V^{h+1} - V^h‖_∞ <= tol` or `max_iter` sweeps.
pub fn value_iteration(
    mdp: &LowerMdpSpec,
    tol: f64,
    max_iter: usize,
) -> Result<ValueIterationResult, MdpError> {
    if !(tol > 0.0) {
        return Err(MdpError::InvalidTolerance(tol));
    }
    let mut v = Array1::zeros(mdp.n());
    let mut gap = f64::INFINITY;
    let mut iters = 0;
    while iters < max_iter {
        let q = mdp.q_values(&v);
        let v_next = q.map_axis(ndarray::Axis(1), |row| {
            row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        });
        gap = linalg::sup_diff(v_next.view(), v.view());
        v = v_next;
        iters += 1;
        if gap <= tol {
            break;
        }
    }
    let values = ValueVector::new(v);
    let policy = greedy_policy(mdp, &values)?;
    Ok(ValueIterationResult {
        values,
        policy,
        iters,
        sup_gap: gap,
        converged: gap <= tol,
    })
}

/// Greedy policy w.r.t. a value vector; ties resolve to the lowest action
/// index.
pub fn greedy_policy(mdp: &LowerMdpSpec, v: &ValueVector) -> Result<DetPolicy, MdpError> {
    if v.len() != mdp.n() {
        return Err(MdpError::DimensionMismatch {
            context: "value vector length vs state count",
            expected: mdp.n(),
            got: v.len(),
        });
    }
    Ok(greedy_from_q(&mdp.q_values(v.values())))
}

/// Initial expected return `J = μ0ᵀ v`.
pub fn expected_return(v: &ValueVector, mu0: &Array1<f64>) -> Result<f64, MdpError> {
    if v.len() != mu0.len() {
        return Err(MdpError::DimensionMismatch {
            context: "value vector length vs mu0 length",
            expected: mu0.len(),
            got: v.len(),
        });
    }
    Ok(v.values().dot(mu0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn single_state_mdp(reward: f64, gamma: f64) -> LowerMdpSpec {
        let kernel = KernelPerAction::from_mats(vec![arr2(&[[1.0]])]).unwrap();
        LowerMdpSpec::new(
            kernel,
            arr2(&[[reward]]),
            gamma,
            arr1(&[1.0]),
            Horizon::Infinite,
        )
        .unwrap()
    }

    #[test]
    fn one_state_kernel_is_valid() {
        assert!(KernelPerAction::from_mats(vec![arr2(&[[1.0]])]).is_ok());
    }

    #[test]
    fn bad_row_sum_is_rejected() {
        let err = KernelPerAction::from_mats(vec![arr2(&[
            [0.6, 0.3, 0.2],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
        ])])
        .unwrap_err();
        match err {
            MdpError::RowSum { row, sum, .. } => {
                assert_eq!(row, 0);
                assert!((sum - 1.1).abs() < 1e-12);
            }
            other => panic!("expected RowSum, got {other:?}"),
        }
    }

    #[test]
    fn negative_entry_is_rejected() {
        let err =
            KernelPerAction::from_mats(vec![arr2(&[[1.2, -0.2], [0.5, 0.5]])]).unwrap_err();
        assert!(matches!(err, MdpError::NegativeEntry { row: 0, col: 1, .. }));
    }

    #[test]
    fn paper_left_kernel_is_valid() {
        let p1_left = arr2(&[[0.0, 0.15, 0.85], [0.75, 0.0, 0.25], [0.25, 0.75, 0.0]]);
        assert!(KernelPerAction::from_mats(vec![p1_left]).is_ok());
    }

    #[test]
    fn rows_within_tolerance_are_renormalized() {
        let k = KernelPerAction::from_mats(vec![arr2(&[
            [0.5 + 4e-10, 0.5],
            [0.25, 0.75],
        ])])
        .unwrap();
        let sum: f64 = k.mat(0).row(0).iter().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn closed_form_geometric_series() {
        let mdp = single_state_mdp(2.0, 0.5);
        let v = policy_evaluation_closed(&mdp, &DetPolicy::new(vec![0])).unwrap();
        assert!((v[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_decoupled_states() {
        let kernel = KernelPerAction::from_mats(vec![arr2(&[[1.0, 0.0], [0.0, 1.0]])]).unwrap();
        let mdp = LowerMdpSpec::new(
            kernel,
            arr2(&[[1.0], [3.0]]),
            0.9,
            arr1(&[0.5, 0.5]),
            Horizon::Infinite,
        )
        .unwrap();
        let v = policy_evaluation_closed(&mdp, &DetPolicy::new(vec![0, 0])).unwrap();
        assert!((v[0] - 10.0).abs() < 1e-9);
        assert!((v[1] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn value_iteration_single_state() {
        let mdp = single_state_mdp(1.0, 0.5);
        let out = value_iteration(&mdp, 1e-12, 10_000).unwrap();
        assert!(out.converged);
        assert!((out.values[0] - 2.0).abs() < 1e-9);
        assert_eq!(out.policy.choices(), &[0]);
    }

    #[test]
    fn value_iteration_flags_nonconvergence() {
        let mdp = single_state_mdp(1.0, 0.99);
        let out = value_iteration(&mdp, 1e-12, 3).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iters, 3);
        assert!(out.sup_gap > 1e-12);
    }

    #[test]
    fn bellman_residual_bound_after_convergence() {
        // contraction: final V is within gap*gamma/(1-gamma) of the fixed point
        let kernel = KernelPerAction::from_mats(vec![
            arr2(&[[0.2, 0.8], [0.6, 0.4]]),
            arr2(&[[0.9, 0.1], [0.3, 0.7]]),
        ])
        .unwrap();
        let mdp = LowerMdpSpec::new(
            kernel,
            arr2(&[[1.0, 0.4], [0.0, 2.0]]),
            0.8,
            arr1(&[0.5, 0.5]),
            Horizon::Infinite,
        )
        .unwrap();
        let tol = 1e-10;
        let out = value_iteration(&mdp, tol, 100_000).unwrap();
        let q = mdp.q_values(out.values.values());
        let backup = q.map_axis(ndarray::Axis(1), |row| {
            row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        });
        let residual = linalg::sup_diff(backup.view(), out.values.values().view());
        assert!(residual <= tol * mdp.gamma() / (1.0 - mdp.gamma()) + 1e-15);
    }

    #[test]
    fn greedy_ties_break_to_lowest_index() {
        let mat = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        let kernel = KernelPerAction::from_mats(vec![mat.clone(), mat]).unwrap();
        let mdp = LowerMdpSpec::new(
            kernel,
            arr2(&[[1.0, 1.0], [2.0, 2.0]]),
            0.9,
            arr1(&[0.5, 0.5]),
            Horizon::Infinite,
        )
        .unwrap();
        let v = ValueVector::new(arr1(&[0.0, 0.0]));
        assert_eq!(greedy_policy(&mdp, &v).unwrap().choices(), &[0, 0]);
    }

    #[test]
    fn greedy_picks_dominating_action() {
        let kernel =
            KernelPerAction::from_mats(vec![arr2(&[[1.0]]), arr2(&[[1.0]])]).unwrap();
        let mdp = LowerMdpSpec::new(
            kernel,
            arr2(&[[1.0, 5.0]]),
            0.5,
            arr1(&[1.0]),
            Horizon::Infinite,
        )
        .unwrap();
        let out = value_iteration(&mdp, 1e-10, 10_000).unwrap();
        assert_eq!(out.policy.choices(), &[1]);
    }

    #[test]
    fn expected_return_uniform_and_point_mass() {
        let v = ValueVector::new(arr1(&[3.0, 6.0, 9.0]));
        let j = expected_return(&v, &arr1(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])).unwrap();
        assert!((j - 6.0).abs() < 1e-12);
        let v2 = ValueVector::new(arr1(&[7.0, -2.0]));
        assert_eq!(expected_return(&v2, &arr1(&[1.0, 0.0])).unwrap(), 7.0);
    }

    #[test]
    fn expected_return_rejects_length_mismatch() {
        let v = ValueVector::new(arr1(&[1.0, 2.0]));
        assert!(matches!(
            expected_return(&v, &arr1(&[1.0])),
            Err(MdpError::DimensionMismatch { .. })
        ));
    }
}
