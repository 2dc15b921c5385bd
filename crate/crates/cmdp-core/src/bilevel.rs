//! Bi-level value iteration over a finite catalog of lower-level kernels.
//!
//! The upper-level MDP's states are the catalog indices of the lower-level
//! transition kernels. A model-changing action `b` moves between kernels
//! according to `Q(P'|P, b)` and costs `C(P, b)`; the reward of a step is
//!
//! ```text
//! R(P, b) = Σ_{P'} Q(P'|P, b) · J(P') - C(P, b)
//! ```
//!
//! with `J(P')` the optimal initial expected return of the lower MDP under
//! kernel `P'`. The cost term stays inside the upper Bellman max, so
//! configuration is never treated as free.
//!
//! Both kernels can be estimated from trajectory datasets by empirical
//! frequency; estimated kernels map back to catalog indices through
//! [`associate_kernel`] (max-over-`(s,a)` row total-variation distance).

use crate::linalg;
use crate::mdp::{
    expected_return, validate_mu0, value_iteration, DetPolicy, Horizon, KernelPerAction,
    LowerMdpSpec, MdpError, Transition,
};
use ndarray::{Array1, Array2, Array3};
use rayon::prelude::*;
use std::io::BufRead;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BilevelError {
    #[error(transparent)]
    Mdp(#[from] MdpError),

    #[error("value iteration for catalog kernel {kernel} did not converge (gap {gap:.3e} after {iters} iterations)")]
    NonConvergence {
        kernel: usize,
        gap: f64,
        iters: usize,
    },

    #[error("upper-level value iteration did not converge (gap {gap:.3e} after {iters} iterations)")]
    UpperNonConvergence { gap: f64, iters: usize },

    #[error("{context}: index {index} out of range (limit {limit})")]
    Index {
        context: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("catalogs have mismatched sizes: {left} vs {right}")]
    CatalogMismatch { left: usize, right: usize },

    #[error("unvisited state-action pairs (no tuples): {0:?}")]
    UnvisitedPairs(Vec<(usize, usize)>),

    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
}

/// The upper-level MDP `{𝒫, ℬ, Q, C, λ, K}` over a catalog of lower-level
/// kernels that share one reward table, discount, and initial distribution.
///
/// `reward_per_kernel` optionally overrides the shared reward table per
/// catalog entry, for environments whose expected per-step reward depends on
/// the transition kernel (the built-in finance scenario prices transitions).
#[derive(Debug, Clone)]
pub struct UpperMdpSpec {
    catalog: Vec<KernelPerAction>,
    reward: Array2<f64>,
    reward_per_kernel: Option<Vec<Array2<f64>>>,
    gamma: f64,
    mu0: Array1<f64>,
    horizon: Horizon,
    actions_b: Vec<String>,
    q: Vec<Array2<f64>>,
    cost: Array2<f64>,
    lambda: f64,
    episodes: Horizon,
}

#[allow(clippy::too_many_arguments)]
impl UpperMdpSpec {
    pub fn new(
        catalog: Vec<KernelPerAction>,
        reward: Array2<f64>,
        reward_per_kernel: Option<Vec<Array2<f64>>>,
        gamma: f64,
        mu0: Array1<f64>,
        horizon: Horizon,
        actions_b: Vec<String>,
        q: Vec<Array2<f64>>,
        cost: Array2<f64>,
        lambda: f64,
        episodes: Horizon,
    ) -> Result<Self, BilevelError> {
        if catalog.is_empty() {
            return Err(BilevelError::Index {
                context: "catalog must be non-empty",
                index: 0,
                limit: 0,
            });
        }
        let n = catalog[0].n();
        let na = catalog[0].num_actions();
        for k in &catalog {
            if k.n() != n || k.num_actions() != na {
                return Err(MdpError::DimensionMismatch {
                    context: "catalog kernels must share dimensions",
                    expected: n,
                    got: k.n(),
                }
                .into());
            }
        }
        let m = catalog.len();
        if !(0.0..1.0).contains(&lambda) {
            return Err(MdpError::InvalidGamma(lambda).into());
        }
        // Q is itself a per-action stochastic kernel over catalog indices;
        // reuse the kernel validation (and its renormalization).
        let q_kernel = KernelPerAction::new(actions_b.clone(), q)?;
        if q_kernel.n() != m {
            return Err(MdpError::DimensionMismatch {
                context: "Q matrices must be m x m",
                expected: m,
                got: q_kernel.n(),
            }
            .into());
        }
        let q = q_kernel.mats().to_vec();
        if cost.nrows() != m || cost.ncols() != actions_b.len() {
            return Err(MdpError::DimensionMismatch {
                context: "cost matrix must be m x |B|",
                expected: m * actions_b.len(),
                got: cost.len(),
            }
            .into());
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(MdpError::DimensionMismatch {
                context: "cost entries must be finite",
                expected: 0,
                got: 0,
            }
            .into());
        }
        if let Some(overrides) = &reward_per_kernel {
            if overrides.len() != m {
                return Err(BilevelError::CatalogMismatch {
                    left: m,
                    right: overrides.len(),
                });
            }
            for r in overrides {
                if r.nrows() != n || r.ncols() != na {
                    return Err(MdpError::DimensionMismatch {
                        context: "reward override must be n x |A|",
                        expected: n * na,
                        got: r.len(),
                    }
                    .into());
                }
            }
        }
        // Template validation via a throwaway lower spec.
        LowerMdpSpec::new(catalog[0].clone(), reward.clone(), gamma, mu0.clone(), horizon)?;
        let mu0 = validate_mu0(mu0)?;
        Ok(Self {
            catalog,
            reward,
            reward_per_kernel,
            gamma,
            mu0,
            horizon,
            actions_b,
            q,
            cost,
            lambda,
            episodes,
        })
    }

    pub fn m(&self) -> usize {
        self.catalog.len()
    }

    pub fn num_b(&self) -> usize {
        self.actions_b.len()
    }

    pub fn n(&self) -> usize {
        self.catalog[0].n()
    }

    pub fn catalog(&self) -> &[KernelPerAction] {
        &self.catalog
    }

    pub fn actions_b(&self) -> &[String] {
        &self.actions_b
    }

    pub fn q(&self) -> &[Array2<f64>] {
        &self.q
    }

    pub fn cost(&self) -> &Array2<f64> {
        &self.cost
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
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

    pub fn episodes(&self) -> Horizon {
        self.episodes
    }

    pub fn shared_reward(&self) -> &Array2<f64> {
        &self.reward
    }

    pub fn reward_for(&self, p_idx: usize) -> &Array2<f64> {
        match &self.reward_per_kernel {
            Some(overrides) => &overrides[p_idx],
            None => &self.reward,
        }
    }

    /// Assembles the lower-level MDP for catalog entry `p_idx`.
    pub fn lower_mdp(&self, p_idx: usize) -> Result<LowerMdpSpec, BilevelError> {
        let kernel = self
            .catalog
            .get(p_idx)
            .ok_or(BilevelError::Index {
                context: "catalog",
                index: p_idx,
                limit: self.m(),
            })?
            .clone();
        Ok(LowerMdpSpec::new(
            kernel,
            self.reward_for(p_idx).clone(),
            self.gamma,
            self.mu0.clone(),
            self.horizon,
        )?)
    }

    fn check_replacement_catalog(&self, catalog: &[KernelPerAction]) -> Result<(), BilevelError> {
        if catalog.len() != self.m() {
            return Err(BilevelError::CatalogMismatch {
                left: self.m(),
                right: catalog.len(),
            });
        }
        for k in catalog {
            if k.n() != self.n() || k.num_actions() != self.catalog[0].num_actions() {
                return Err(MdpError::DimensionMismatch {
                    context: "replacement catalog kernels must share dimensions",
                    expected: self.n(),
                    got: k.n(),
                }
                .into());
            }
        }
        Ok(())
    }

    /// The same spec with the catalog swapped out; every untouched field is
    /// kept bitwise (no re-renormalization drift).
    pub fn with_catalog(&self, catalog: Vec<KernelPerAction>) -> Result<Self, BilevelError> {
        self.check_replacement_catalog(&catalog)?;
        Ok(Self {
            catalog,
            ..self.clone()
        })
    }

    /// The same spec with both the catalog and the upper kernel swapped out.
    /// The new `q` is validated and renormalized like any kernel input.
    pub fn with_catalog_and_q(
        &self,
        catalog: Vec<KernelPerAction>,
        q: Vec<Array2<f64>>,
    ) -> Result<Self, BilevelError> {
        self.check_replacement_catalog(&catalog)?;
        let q_kernel = KernelPerAction::new(self.actions_b.clone(), q)?;
        if q_kernel.n() != self.m() {
            return Err(MdpError::DimensionMismatch {
                context: "replacement Q matrices must be m x m",
                expected: self.m(),
                got: q_kernel.n(),
            }
            .into());
        }
        Ok(Self {
            catalog,
            q: q_kernel.mats().to_vec(),
            ..self.clone()
        })
    }

    /// `max_{P,(s,a)} |r|` over whichever reward tables are in play.
    pub fn max_abs_reward(&self) -> f64 {
        let tables: Vec<&Array2<f64>> = match &self.reward_per_kernel {
            Some(o) => o.iter().collect(),
            None => vec![&self.reward],
        };
        tables
            .iter()
            .flat_map(|t| t.iter())
            .map(|r| r.abs())
            .fold(0.0, f64::max)
    }

    /// `V_max = max|r| / (1 - γ)`.
    pub fn value_bound(&self) -> f64 {
        self.max_abs_reward() / (1.0 - self.gamma)
    }
}

/// Complete output of bi-level value iteration.
#[derive(Debug, Clone)]
pub struct UpperSolution {
    /// Higher-order state values `W(P)` per catalog entry.
    pub w: Array1<f64>,
    /// Higher-order policy `Θ(P)` as model-changing action indices.
    pub theta: Vec<usize>,
    /// Optimal lower-level initial returns `J(P)` per catalog entry.
    pub j_per_kernel: Array1<f64>,
    /// Optimal primitive policy per catalog entry.
    pub pi_per_kernel: Vec<DetPolicy>,
}

/// Solves every catalog kernel by value iteration and returns `J` and the
/// greedy policy per kernel. Kernels are independent subproblems and are
/// evaluated in parallel; results land in fixed slots so the outcome does
/// not depend on the schedule.
pub fn lower_solve_all(
    upper: &UpperMdpSpec,
    tol: f64,
    max_iter: usize,
) -> Result<(Array1<f64>, Vec<DetPolicy>), BilevelError> {
    let results: Vec<Result<(f64, DetPolicy), BilevelError>> = (0..upper.m())
        .into_par_iter()
        .map(|p_idx| {
            let mdp = upper.lower_mdp(p_idx)?;
            let out = value_iteration(&mdp, tol, max_iter)?;
            if !out.converged {
                return Err(BilevelError::NonConvergence {
                    kernel: p_idx,
                    gap: out.sup_gap,
                    iters: out.iters,
                });
            }
            let j = expected_return(&out.values, mdp.mu0())?;
            Ok((j, out.policy))
        })
        .collect();

    let mut j = Array1::zeros(upper.m());
    let mut policies = Vec::with_capacity(upper.m());
    for (p_idx, res) in results.into_iter().enumerate() {
        let (ji, pi) = res?;
        j[p_idx] = ji;
        policies.push(pi);
    }
    Ok((j, policies))
}

/// Upper-level reward `R(P, b) = Σ_{P'} Q(P'|P,b) J(P') - C(P, b)`.
pub fn upper_reward(
    upper: &UpperMdpSpec,
    j: &Array1<f64>,
    p_idx: usize,
    b_idx: usize,
) -> Result<f64, BilevelError> {
    if p_idx >= upper.m() {
        return Err(BilevelError::Index {
            context: "upper state",
            index: p_idx,
            limit: upper.m(),
        });
    }
    if b_idx >= upper.num_b() {
        return Err(BilevelError::Index {
            context: "model-changing action",
            index: b_idx,
            limit: upper.num_b(),
        });
    }
    if j.len() != upper.m() {
        return Err(BilevelError::CatalogMismatch {
            left: upper.m(),
            right: j.len(),
        });
    }
    Ok(upper.q()[b_idx].row(p_idx).dot(j) - upper.cost()[(p_idx, b_idx)])
}

/// The full `R(P, b)` table.
pub fn upper_reward_table(upper: &UpperMdpSpec, j: &Array1<f64>) -> Array2<f64> {
    let mut table = Array2::zeros((upper.m(), upper.num_b()));
    for b in 0..upper.num_b() {
        let qj = upper.q()[b].dot(j);
        for p in 0..upper.m() {
            table[(p, b)] = qj[p] - upper.cost()[(p, b)];
        }
    }
    table
}

/// Upper-level value iteration
/// `W^{h+1}(P) = max_b [ Σ_{P'} Q(P'|P,b)(J(P') + λ W^h(P')) - C(P,b) ]`
/// from `W^0 = 0`, with greedy `Θ` extracted from the final `W`
/// (ties resolve to the lowest action index).
pub fn upper_value_iteration(
    upper: &UpperMdpSpec,
    j: &Array1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Array1<f64>, Vec<usize>), BilevelError> {
    if !(tol > 0.0) {
        return Err(MdpError::InvalidTolerance(tol).into());
    }
    if j.len() != upper.m() {
        return Err(BilevelError::CatalogMismatch {
            left: upper.m(),
            right: j.len(),
        });
    }
    let m = upper.m();
    let mut w = Array1::zeros(m);
    let mut gap = f64::INFINITY;
    let mut iters = 0;
    while iters < max_iter {
        let w_next = upper_backup(upper, j, &w).0;
        gap = linalg::sup_diff(w_next.view(), w.view());
        w = w_next;
        iters += 1;
        if gap <= tol {
            let theta = upper_backup(upper, j, &w).1;
            return Ok((w, theta));
        }
    }
    Err(BilevelError::UpperNonConvergence { gap, iters })
}

fn upper_backup(
    upper: &UpperMdpSpec,
    j: &Array1<f64>,
    w: &Array1<f64>,
) -> (Array1<f64>, Vec<usize>) {
    let m = upper.m();
    let mut target = Array1::zeros(m);
    target.assign(j);
    target.scaled_add(upper.lambda(), w);
    let mut best = Array1::from_elem(m, f64::NEG_INFINITY);
    let mut theta = vec![0usize; m];
    for b in 0..upper.num_b() {
        let qt = upper.q()[b].dot(&target);
        for p in 0..m {
            let val = qt[p] - upper.cost()[(p, b)];
            // strict '>' keeps the lowest action index on ties
            if val > best[p] {
                best[p] = val;
                theta[p] = b;
            }
        }
    }
    (best, theta)
}

/// Algorithm end-to-end: solve every lower MDP, then run upper-level value
/// iteration on the resulting returns.
pub fn solve_bilevel(upper: &UpperMdpSpec, tol: f64) -> Result<UpperSolution, BilevelError> {
    let (j, policies) = lower_solve_all(upper, tol, crate::DEFAULT_MAX_ITER)?;
    let (w, theta) = upper_value_iteration(upper, &j, tol, crate::DEFAULT_MAX_ITER)?;
    Ok(UpperSolution {
        w,
        theta,
        j_per_kernel: j,
        pi_per_kernel: policies,
    })
}

// ── Kernel estimation ──────────────────────────────────────────────────────

/// Lower-level transition tuples grouped by `(s, a)`.
///
/// Rewards in the tuples are parsed but ignored by the estimator; the reward
/// function is assumed known.
#[derive(Debug, Clone)]
pub struct TransitionDataset {
    n: usize,
    num_actions: usize,
    counts: Array3<u64>,
}

impl TransitionDataset {
    pub fn new(n: usize, num_actions: usize) -> Self {
        Self {
            n,
            num_actions,
            counts: Array3::zeros((n, num_actions, n)),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn record(&mut self, t: &Transition) -> Result<(), BilevelError> {
        if t.s >= self.n || t.s_next >= self.n {
            return Err(BilevelError::Index {
                context: "dataset state index",
                index: t.s.max(t.s_next),
                limit: self.n,
            });
        }
        if t.a >= self.num_actions {
            return Err(BilevelError::Index {
                context: "dataset action index",
                index: t.a,
                limit: self.num_actions,
            });
        }
        self.counts[(t.s, t.a, t.s_next)] += 1;
        Ok(())
    }

    pub fn from_transitions(
        n: usize,
        num_actions: usize,
        tuples: &[Transition],
    ) -> Result<Self, BilevelError> {
        let mut ds = Self::new(n, num_actions);
        for t in tuples {
            ds.record(t)?;
        }
        Ok(ds)
    }

    /// Parses the line-oriented CSV `s,a,r,s_next` (header required).
    pub fn from_csv(reader: impl BufRead, n: usize, num_actions: usize) -> Result<Self, BilevelError> {
        let mut ds = Self::new(n, num_actions);
        for (line_no, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| BilevelError::Dataset {
                line: line_no + 1,
                message: e.to_string(),
            })?;
            if line_no == 0 {
                expect_header(&line, &["s", "a", "r", "s_next"], line_no + 1)?;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f = split_fields(&line, 4, line_no + 1)?;
            let t = Transition {
                s: parse_idx(&f[0], "s", line_no + 1)?,
                a: parse_idx(&f[1], "a", line_no + 1)?,
                r: parse_num(&f[2], "r", line_no + 1)?,
                s_next: parse_idx(&f[3], "s_next", line_no + 1)?,
            };
            ds.record(&t)?;
        }
        Ok(ds)
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.counts.index_axis(ndarray::Axis(0), s).row(a).sum()
    }

    pub fn count(&self, s: usize, a: usize, s_next: usize) -> u64 {
        self.counts[(s, a, s_next)]
    }
}

/// Upper-level `(P, b, R, P')` tuples grouped by `(P, b)`.
#[derive(Debug, Clone)]
pub struct KernelDataset {
    inner: TransitionDataset,
}

impl KernelDataset {
    pub fn new(m: usize, num_b: usize) -> Self {
        Self {
            inner: TransitionDataset::new(m, num_b),
        }
    }

    pub fn m(&self) -> usize {
        self.inner.n
    }

    pub fn num_b(&self) -> usize {
        self.inner.num_actions
    }

    pub fn record(&mut self, p: usize, b: usize, p_next: usize) -> Result<(), BilevelError> {
        self.inner.record(&Transition {
            s: p,
            a: b,
            r: 0.0,
            s_next: p_next,
        })
    }

    pub fn from_tuples(
        m: usize,
        num_b: usize,
        tuples: &[(usize, usize, f64, usize)],
    ) -> Result<Self, BilevelError> {
        let mut ds = Self::new(m, num_b);
        for &(p, b, _r, p_next) in tuples {
            ds.record(p, b, p_next)?;
        }
        Ok(ds)
    }

    /// Parses the line-oriented CSV `p_idx,b,R,p_next_idx` (header required).
    pub fn from_csv(reader: impl BufRead, m: usize, num_b: usize) -> Result<Self, BilevelError> {
        let mut ds = Self::new(m, num_b);
        for (line_no, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| BilevelError::Dataset {
                line: line_no + 1,
                message: e.to_string(),
            })?;
            if line_no == 0 {
                expect_header(&line, &["p_idx", "b", "R", "p_next_idx"], line_no + 1)?;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f = split_fields(&line, 4, line_no + 1)?;
            let p = parse_idx(&f[0], "p_idx", line_no + 1)?;
            let b = parse_idx(&f[1], "b", line_no + 1)?;
            parse_num(&f[2], "R", line_no + 1)?;
            let p_next = parse_idx(&f[3], "p_next_idx", line_no + 1)?;
            ds.record(p, b, p_next)?;
        }
        Ok(ds)
    }

    pub fn visits(&self, p: usize, b: usize) -> u64 {
        self.inner.visits(p, b)
    }
}

fn expect_header(line: &str, want: &[&str], line_no: usize) -> Result<(), BilevelError> {
    let got: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    if got != want {
        return Err(BilevelError::Dataset {
            line: line_no,
            message: format!("expected header {:?}, got {:?}", want.join(","), line.trim()),
        });
    }
    Ok(())
}

fn split_fields(line: &str, want: usize, line_no: usize) -> Result<Vec<String>, BilevelError> {
    let fields: Vec<String> = line.trim().split(',').map(|s| s.trim().to_string()).collect();
    if fields.len() != want {
        return Err(BilevelError::Dataset {
            line: line_no,
            message: format!("expected {want} fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_idx(field: &str, name: &str, line_no: usize) -> Result<usize, BilevelError> {
    field.parse().map_err(|_| BilevelError::Dataset {
        line: line_no,
        message: format!("field {name:?} is not an index: {field:?}"),
    })
}

fn parse_num(field: &str, name: &str, line_no: usize) -> Result<f64, BilevelError> {
    field.parse().map_err(|_| BilevelError::Dataset {
        line: line_no,
        message: format!("field {name:?} is not a number: {field:?}"),
    })
}

/// Whether to apply add-one (Laplace) smoothing in the estimators. The
/// default is raw empirical frequency with a hard error on unvisited pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    None,
    Laplace,
}

fn estimate_rows(
    counts: &Array3<u64>,
    smoothing: Smoothing,
) -> Result<Vec<Array2<f64>>, BilevelError> {
    let (n, num_actions, _) = counts.dim();
    let mut unvisited = Vec::new();
    if smoothing == Smoothing::None {
        for s in 0..n {
            for a in 0..num_actions {
                if counts.index_axis(ndarray::Axis(0), s).row(a).sum() == 0 {
                    unvisited.push((s, a));
                }
            }
        }
        if !unvisited.is_empty() {
            return Err(BilevelError::UnvisitedPairs(unvisited));
        }
    }
    let mut mats = vec![Array2::zeros((n, n)); num_actions];
    for s in 0..n {
        for a in 0..num_actions {
            let row = counts.index_axis(ndarray::Axis(0), s);
            let row = row.row(a);
            let total: u64 = row.sum();
            match smoothing {
                Smoothing::None => {
                    for s2 in 0..n {
                        mats[a][(s, s2)] = row[s2] as f64 / total as f64;
                    }
                }
                Smoothing::Laplace => {
                    let denom = (total + n as u64) as f64;
                    for s2 in 0..n {
                        mats[a][(s, s2)] = (row[s2] + 1) as f64 / denom;
                    }
                }
            }
        }
    }
    Ok(mats)
}

/// Empirical-frequency estimate `P̂(s'|s,a) = count(s,a,s') / |D_(s,a)|`.
///
/// Errors with the full list of unvisited `(s, a)` pairs unless Laplace
/// smoothing was requested.
pub fn estimate_lower_kernel(
    ds: &TransitionDataset,
    smoothing: Smoothing,
) -> Result<KernelPerAction, BilevelError> {
    let mats = estimate_rows(&ds.counts, smoothing)?;
    Ok(KernelPerAction::from_mats(mats)?)
}

/// Empirical-frequency estimate of the upper kernel, one `m x m` matrix per
/// model-changing action.
pub fn estimate_upper_kernel(
    ds: &KernelDataset,
    smoothing: Smoothing,
) -> Result<Vec<Array2<f64>>, BilevelError> {
    estimate_rows(&ds.inner.counts, smoothing)
}

/// Maximum over `(s, a)` of the row total-variation distance between two
/// kernels of identical shape.
pub fn kernel_distance(a: &KernelPerAction, b: &KernelPerAction) -> Result<f64, BilevelError> {
    if a.n() != b.n() || a.num_actions() != b.num_actions() {
        return Err(BilevelError::CatalogMismatch {
            left: a.n() * a.num_actions(),
            right: b.n() * b.num_actions(),
        });
    }
    let mut worst = 0.0f64;
    for act in 0..a.num_actions() {
        for s in 0..a.n() {
            worst = worst.max(linalg::tv_unchecked(a.row(s, act), b.row(s, act)));
        }
    }
    Ok(worst)
}

/// Associates an estimated kernel with the closest catalog member under
/// [`kernel_distance`]; ties resolve to the lowest index.
pub fn associate_kernel(
    estimated: &KernelPerAction,
    catalog: &[KernelPerAction],
) -> Result<(usize, f64), BilevelError> {
    if catalog.is_empty() {
        return Err(BilevelError::CatalogMismatch { left: 0, right: 1 });
    }
    let mut best = (0usize, f64::INFINITY);
    for (idx, candidate) in catalog.iter().enumerate() {
        let d = kernel_distance(estimated, candidate)?;
        // strict '<' keeps the lowest index on ties
        if d < best.1 {
            best = (idx, d);
        }
    }
    Ok(best)
}
