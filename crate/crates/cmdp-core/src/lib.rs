//! Tabular solvers and diagnostics for multi-layer configurable MDPs.
//!
//! A *configurable* MDP lets the agent act on the model itself: upper-level
//! model-changing actions select (or continuously perturb) the transition
//! kernel that the lower-level MDP runs under. This crate provides the exact
//! tabular machinery for that setting:
//!
//! - [`mdp`] — lower-level primitives: kernel validation, closed-form policy
//!   evaluation, value iteration, greedy policies, initial expected returns.
//! - [`bilevel`] — bi-level value iteration over a finite kernel catalog,
//!   plus empirical-frequency estimation of both transition kernels.
//! - [`tvcmdp`] — time-varying configurable MDPs: value linearization, the
//!   value/kernel Jacobian, exponential configuration costs, and the budgeted
//!   configuration optimizer (dual decomposition with nested bisections).
//! - [`diagnostics`] — total-variation error quantities and the three
//!   estimation/configuration error bounds, with a randomized verification
//!   harness.
//! - [`sim`] — seeded Monte-Carlo rollouts and the four-way mode comparison
//!   (none / random / optimal / oracle).
//! - [`scenario`] — JSON scenario files and the built-in example scenarios.
//!
//! All solvers are deterministic: identical inputs (and seeds, where
//! sampling is involved) produce bit-identical outputs, regardless of the
//! parallel schedule.

pub mod bilevel;
pub mod diagnostics;
pub mod linalg;
pub mod mdp;
pub mod scenario;
pub mod sim;
pub mod tvcmdp;

pub use bilevel::{
    associate_kernel, estimate_lower_kernel, estimate_upper_kernel, lower_solve_all, solve_bilevel,
    upper_reward, upper_value_iteration, BilevelError, KernelDataset, Smoothing, TransitionDataset,
    UpperMdpSpec, UpperSolution,
};
pub use diagnostics::{lemma1_check, lemma2_check, lemma3_check, tv_distance, DiagnosticsError};
pub use mdp::{
    expected_return, greedy_policy, policy_evaluation_closed, validate_kernel, value_iteration,
    DetPolicy, Horizon, KernelPerAction, LowerMdpSpec, MdpError, Transition, ValueVector,
};
pub use scenario::{load_scenario, Scenario, ScenarioDoc, ScenarioError};
pub use sim::{compare_modes, run_bilevel, sample_trajectory, ComparisonReport, Mode, RunConfig};
pub use tvcmdp::{
    config_cost, jacobian, linearize, optimize_configuration, solve_tvcmdp, ConfigPlan,
    JacobianTensor, LinearModel, TvcError, TvcScenario,
};

/// Default convergence tolerance for the value-iteration solvers.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default iteration cap for the value-iteration solvers.
pub const DEFAULT_MAX_ITER: usize = 100_000;
