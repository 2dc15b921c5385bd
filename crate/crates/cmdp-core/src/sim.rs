//! Seeded Monte-Carlo execution of bi-level scenarios.
//!
//! Each report compares four ways of running the episode loop:
//!
//! - `none` — no configuration; the kernel is drawn uniformly from the
//!   catalog every episode and no cost is paid;
//! - `random` — a uniformly random model-changing action every episode;
//! - `optimal` — the solved higher-order policy `Θ`;
//! - `oracle` — the kernel with the best lower return, fixed for every
//!   episode at zero cost.
//!
//! Episode `k` in a configuring mode contributes
//! `λ^k (Ĵ(P_{k+1}) - C(P_k, b_k))` to the rollout total, where `Ĵ` is the
//! sampled discounted return of `T` lower-level steps under the kernel's
//! optimal primitive policy; this makes a rollout an unbiased estimate of
//! the truncated higher-order value. The `analytic` column is that same
//! truncated expectation computed exactly (finite-horizon recursions), so
//! sampled means converge to it at the usual `1/√replicates` rate with no
//! truncation bias.
//!
//! Randomness is organized as counter-based streams keyed by
//! `(replicate, episode, purpose)` — purposes are the initial-state draw,
//! the action draw, the kernel transition, and the trajectory — and the
//! keys deliberately exclude the mode, so modes share episode-level
//! randomness wherever their kernels coincide (common random numbers).

use crate::bilevel::{solve_bilevel, BilevelError, UpperMdpSpec, UpperSolution};
use crate::mdp::{DetPolicy, LowerMdpSpec, Transition};
use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// How the model-changing action is chosen in the episode loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    None,
    Random,
    Optimal,
    Oracle,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::None, Mode::Random, Mode::Optimal, Mode::Oracle];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::None => "none",
            Mode::Random => "random",
            Mode::Optimal => "optimal",
            Mode::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "none" => Some(Mode::None),
            "random" => Some(Mode::Random),
            "optimal" => Some(Mode::Optimal),
            "oracle" => Some(Mode::Oracle),
            _ => None,
        }
    }
}

/// Configuration of one Monte-Carlo run.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub seed: u64,
    /// Episodes per rollout (the paper's comparison uses 100).
    pub episodes: usize,
    /// Lower-level steps per episode (sampling truncation).
    pub horizon_t: usize,
    /// Independent rollouts used for the mean and standard error.
    pub replicates: usize,
    pub mode: Mode,
}

impl RunConfig {
    /// Smallest `T` with `γ^T ≤ 0.01`, so truncation loses at most 1% of
    /// `V_max`.
    pub fn default_horizon(gamma: f64) -> usize {
        if gamma <= 0.0 {
            return 1;
        }
        let t = (0.01f64.ln() / gamma.ln()).ceil() as usize;
        t.clamp(1, 100_000)
    }

    /// Warns when the horizon violates `γ^T · V_max ≤ 0.01 · V_max`.
    pub fn truncation_warning(&self, gamma: f64) -> Option<String> {
        let loss = gamma.powi(self.horizon_t as i32);
        (loss > 0.01).then(|| {
            format!(
                "horizon_t = {} leaves gamma^T = {loss:.3} (> 0.01) of V_max unsampled; \
                 consider at least T = {}",
                self.horizon_t,
                Self::default_horizon(gamma)
            )
        })
    }
}

/// One mode's row of the comparison report.
#[derive(Debug, Clone)]
pub struct ModeReport {
    pub mode: Mode,
    /// Mean over replicates of the λ-discounted rollout total.
    pub mean: f64,
    /// Standard error of that mean across replicates.
    pub stderr: f64,
    pub episodes: usize,
    pub replicates: usize,
    /// Exact expectation of the rollout total (finite `K`, finite `T`).
    pub analytic: f64,
    /// `γ^T · V_max`, the per-episode truncation bound that was accepted.
    pub truncation_bound: f64,
}

/// The four-way comparison.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<ModeReport>,
}

// Stream purposes; keys exclude the mode so kernels that coincide across
// modes see identical draws.
const PURPOSE_INIT: u64 = 0;
const PURPOSE_ACTION: u64 = 1;
const PURPOSE_KERNEL: u64 = 2;
const PURPOSE_TRAJECTORY: u64 = 3;

fn stream_rng(seed: u64, replicate: usize, episode: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replicate as u64) << 44) | ((episode as u64) << 4) | purpose);
    rng
}

fn sample_categorical(row: ArrayView1<f64>, u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

pub(crate) fn sample_trajectory_with(
    mdp: &LowerMdpSpec,
    pi: &DetPolicy,
    t_max: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Transition> {
    let mut out = Vec::with_capacity(t_max);
    let mut s = sample_categorical(mdp.mu0().view(), rng.random::<f64>());
    for _ in 0..t_max {
        let a = pi.action(s);
        let r = mdp.reward()[(s, a)];
        let s_next = sample_categorical(mdp.kernel().row(s, a), rng.random::<f64>());
        out.push(Transition { s, a, r, s_next });
        s = s_next;
    }
    out
}

/// Samples a length-`t_max` trajectory under `P` and `π`, starting from
/// `s_0 ~ μ0`. Deterministic in the seed.
pub fn sample_trajectory(
    mdp: &LowerMdpSpec,
    pi: &DetPolicy,
    t_max: usize,
    seed: u64,
) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_trajectory_with(mdp, pi, t_max, &mut rng)
}

fn discounted_return(traj: &[Transition], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut disc = 1.0;
    for t in traj {
        total += disc * t.r;
        disc *= gamma;
    }
    total
}

/// Exact `T`-step discounted return `μ0ᵀ Σ_{t<T} γ^t (P^π)^t r^π`.
fn truncated_return(mdp: &LowerMdpSpec, pi: &DetPolicy, t: usize) -> Result<f64, BilevelError> {
    let (chain, r_pi) = mdp.chain_under(pi)?;
    let mut v = Array1::zeros(mdp.n());
    for _ in 0..t {
        v = &r_pi + &(chain.dot(&v) * mdp.gamma());
    }
    Ok(v.dot(mdp.mu0()))
}

struct ModeContext<'a> {
    upper: &'a UpperMdpSpec,
    solution: &'a UpperSolution,
    /// Exact truncated returns `J_T(P)` per catalog entry.
    j_truncated: Array1<f64>,
    oracle_idx: usize,
}

impl<'a> ModeContext<'a> {
    fn new(upper: &'a UpperMdpSpec, solution: &'a UpperSolution, t: usize) -> Result<Self, BilevelError> {
        let m = upper.m();
        let mut j_truncated = Array1::zeros(m);
        for p in 0..m {
            let mdp = upper.lower_mdp(p)?;
            j_truncated[p] = truncated_return(&mdp, &solution.pi_per_kernel[p], t)?;
        }
        // argmax of the solved (infinite-horizon) J, ties to lowest index
        let mut oracle_idx = 0;
        for p in 1..m {
            if solution.j_per_kernel[p] > solution.j_per_kernel[oracle_idx] {
                oracle_idx = p;
            }
        }
        Ok(Self {
            upper,
            solution,
            j_truncated,
            oracle_idx,
        })
    }

    /// Exact expectation of the rollout total for a mode.
    fn analytic(&self, mode: Mode, episodes: usize) -> f64 {
        let m = self.upper.m();
        let lambda = self.upper.lambda();
        let geom: f64 = {
            let mut s = 0.0;
            let mut d = 1.0;
            for _ in 0..episodes {
                s += d;
                d *= lambda;
            }
            s
        };
        match mode {
            Mode::None => geom * self.j_truncated.mean().unwrap_or(0.0),
            Mode::Oracle => geom * self.j_truncated[self.oracle_idx],
            Mode::Optimal => {
                let theta = &self.solution.theta;
                let r: Array1<f64> = Array1::from_iter((0..m).map(|p| {
                    self.upper.q()[theta[p]].row(p).dot(&self.j_truncated)
                        - self.upper.cost()[(p, theta[p])]
                }));
                let mut w = Array1::<f64>::zeros(m);
                for _ in 0..episodes {
                    let mut next = r.clone();
                    for p in 0..m {
                        next[p] += lambda * self.upper.q()[theta[p]].row(p).dot(&w);
                    }
                    w = next;
                }
                w.mean().unwrap_or(0.0)
            }
            Mode::Random => {
                let num_b = self.upper.num_b() as f64;
                let r: Array1<f64> = Array1::from_iter((0..m).map(|p| {
                    (0..self.upper.num_b())
                        .map(|b| {
                            self.upper.q()[b].row(p).dot(&self.j_truncated)
                                - self.upper.cost()[(p, b)]
                        })
                        .sum::<f64>()
                        / num_b
                }));
                let mut w = Array1::<f64>::zeros(m);
                for _ in 0..episodes {
                    let mut next = r.clone();
                    for p in 0..m {
                        let qw: f64 = (0..self.upper.num_b())
                            .map(|b| self.upper.q()[b].row(p).dot(&w))
                            .sum::<f64>()
                            / num_b;
                        next[p] += lambda * qw;
                    }
                    w = next;
                }
                w.mean().unwrap_or(0.0)
            }
        }
    }

    /// One seeded rollout of `episodes` episodes.
    fn rollout(&self, mode: Mode, cfg: &RunConfig, replicate: usize) -> Result<f64, BilevelError> {
        let m = self.upper.m();
        let lambda = self.upper.lambda();
        let mut p = match mode {
            Mode::Oracle => self.oracle_idx,
            _ => {
                let u = stream_rng(cfg.seed, replicate, 0, PURPOSE_INIT).random::<f64>();
                (u * m as f64) as usize % m
            }
        };
        let mut total = 0.0;
        let mut disc = 1.0;
        for episode in 0..cfg.episodes {
            let (p_next, cost) = match mode {
                Mode::None => {
                    let u = stream_rng(cfg.seed, replicate, episode, PURPOSE_KERNEL).random::<f64>();
                    ((u * m as f64) as usize % m, 0.0)
                }
                Mode::Oracle => (self.oracle_idx, 0.0),
                Mode::Optimal | Mode::Random => {
                    let b = match mode {
                        Mode::Optimal => self.solution.theta[p],
                        _ => {
                            let u = stream_rng(cfg.seed, replicate, episode, PURPOSE_ACTION)
                                .random::<f64>();
                            (u * self.upper.num_b() as f64) as usize % self.upper.num_b()
                        }
                    };
                    let u = stream_rng(cfg.seed, replicate, episode, PURPOSE_KERNEL).random::<f64>();
                    let p_next = sample_categorical(self.upper.q()[b].row(p), u);
                    (p_next, self.upper.cost()[(p, b)])
                }
            };
            let mdp = self.upper.lower_mdp(p_next)?;
            let mut traj_rng = stream_rng(cfg.seed, replicate, episode, PURPOSE_TRAJECTORY);
            let traj = sample_trajectory_with(
                &mdp,
                &self.solution.pi_per_kernel[p_next],
                cfg.horizon_t,
                &mut traj_rng,
            );
            let j_hat = discounted_return(&traj, self.upper.gamma());
            total += disc * (j_hat - cost);
            disc *= lambda;
            p = p_next;
        }
        Ok(total)
    }
}

/// Runs one mode for `cfg.replicates` independent rollouts and reports the
/// sampled mean, its standard error, and the exact analytic expectation.
pub fn run_bilevel(
    upper: &UpperMdpSpec,
    solution: &UpperSolution,
    cfg: &RunConfig,
) -> Result<ModeReport, BilevelError> {
    let ctx = ModeContext::new(upper, solution, cfg.horizon_t)?;
    run_mode(&ctx, cfg.mode, cfg)
}

fn run_mode(ctx: &ModeContext, mode: Mode, cfg: &RunConfig) -> Result<ModeReport, BilevelError> {
    let totals: Vec<Result<f64, BilevelError>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| ctx.rollout(mode, cfg, rep))
        .collect();
    let mut values = Vec::with_capacity(cfg.replicates);
    for t in totals {
        values.push(t?);
    }
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if values.len() >= 2 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let truncation_bound =
        ctx.upper.gamma().powi(cfg.horizon_t as i32) * ctx.upper.value_bound();
    Ok(ModeReport {
        mode,
        mean,
        stderr,
        episodes: cfg.episodes,
        replicates: cfg.replicates,
        analytic: ctx.analytic(mode, cfg.episodes),
        truncation_bound,
    })
}

/// Solves the bi-level problem and runs all four modes under common random
/// numbers. `cfg.mode` is ignored; rows come back in the fixed order
/// none, random, optimal, oracle.
pub fn compare_modes(
    upper: &UpperMdpSpec,
    cfg: &RunConfig,
    tol: f64,
) -> Result<ComparisonReport, BilevelError> {
    let solution = solve_bilevel(upper, tol)?;
    compare_modes_with(upper, &solution, cfg)
}

/// [`compare_modes`] against an existing solution.
pub fn compare_modes_with(
    upper: &UpperMdpSpec,
    solution: &UpperSolution,
    cfg: &RunConfig,
) -> Result<ComparisonReport, BilevelError> {
    let ctx = ModeContext::new(upper, solution, cfg.horizon_t)?;
    let mut rows = Vec::with_capacity(Mode::ALL.len());
    for mode in Mode::ALL {
        rows.push(run_mode(&ctx, mode, cfg)?);
    }
    Ok(ComparisonReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Horizon, KernelPerAction};
    use ndarray::{arr1, arr2};

    fn deterministic_mdp() -> LowerMdpSpec {
        // 0 -> 1 -> 0 cycle, reward 1 in state 0 only
        let kernel =
            KernelPerAction::from_mats(vec![arr2(&[[0.0, 1.0], [1.0, 0.0]])]).unwrap();
        LowerMdpSpec::new(
            kernel,
            arr2(&[[1.0], [0.0]]),
            0.5,
            arr1(&[1.0, 0.0]),
            Horizon::Infinite,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_kernel_fixes_trajectory() {
        let mdp = deterministic_mdp();
        let pi = DetPolicy::new(vec![0, 0]);
        let traj = sample_trajectory(&mdp, &pi, 6, 7);
        let states: Vec<usize> = traj.iter().map(|t| t.s).collect();
        assert_eq!(states, vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let kernel = KernelPerAction::from_mats(vec![arr2(&[[0.5, 0.5], [0.3, 0.7]])]).unwrap();
        let mdp = LowerMdpSpec::new(
            kernel,
            arr2(&[[1.0], [2.0]]),
            0.9,
            arr1(&[0.5, 0.5]),
            Horizon::Infinite,
        )
        .unwrap();
        let pi = DetPolicy::new(vec![0, 0]);
        assert_eq!(
            sample_trajectory(&mdp, &pi, 50, 123),
            sample_trajectory(&mdp, &pi, 50, 123)
        );
        assert_ne!(
            sample_trajectory(&mdp, &pi, 50, 123),
            sample_trajectory(&mdp, &pi, 50, 124)
        );
    }

    #[test]
    fn default_horizon_hits_one_percent() {
        let t = RunConfig::default_horizon(0.95);
        assert!(0.95f64.powi(t as i32) <= 0.01);
        assert!(0.95f64.powi(t as i32 - 1) > 0.01);
    }

    #[test]
    fn truncation_warning_fires_when_short() {
        let cfg = RunConfig {
            seed: 0,
            episodes: 10,
            horizon_t: 5,
            replicates: 2,
            mode: Mode::None,
        };
        assert!(cfg.truncation_warning(0.95).is_some());
        let cfg_ok = RunConfig {
            horizon_t: RunConfig::default_horizon(0.95),
            ..cfg
        };
        assert!(cfg_ok.truncation_warning(0.95).is_none());
    }
}
