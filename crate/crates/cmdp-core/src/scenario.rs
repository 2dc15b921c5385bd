//! JSON scenario files.
//!
//! A scenario document is a JSON object whose `kind` is one of `"lower"`,
//! `"bilevel"`, or `"tvcmdp"`; matrices are nested arrays of decimals and
//! per-action matrices are keyed by action label (the separate `actions`
//! array fixes the action order). Documents round-trip bit-exactly: loading
//! keeps the raw decimals, and solvers renormalize rows only in their own
//! working copies.
//!
//! Validation reports *every* violation with a path such as
//! `catalog[2].mats["left"].row[1]`, not just the first one.

use crate::bilevel::{BilevelError, UpperMdpSpec};
use crate::mdp::{Horizon, KernelPerAction, LowerMdpSpec, MdpError, ROW_SUM_TOL};
use crate::tvcmdp::{TvcError, TvcScenario};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub mod builtin;

/// Per-action matrices keyed by action label.
pub type LabeledMats = BTreeMap<String, Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonDoc {
    Steps(usize),
    Tag(String),
}

impl HorizonDoc {
    fn to_horizon(&self, path: &str, errs: &mut Vec<Violation>) -> Horizon {
        match self {
            HorizonDoc::Steps(0) => {
                errs.push(Violation::new(path, "horizon must be positive"));
                Horizon::Infinite
            }
            HorizonDoc::Steps(t) => Horizon::Finite(*t),
            HorizonDoc::Tag(tag) if tag == "infinite" => Horizon::Infinite,
            HorizonDoc::Tag(tag) => {
                errs.push(Violation::new(
                    path,
                    format!("expected a positive integer or \"infinite\", got {tag:?}"),
                ));
                Horizon::Infinite
            }
        }
    }
}

/// Raw `kind: "lower"` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerDoc {
    pub actions: Vec<String>,
    pub mats: LabeledMats,
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub mu0: Vec<f64>,
    pub horizon_t: HorizonDoc,
}

/// Raw `kind: "bilevel"` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilevelDoc {
    pub actions: Vec<String>,
    pub catalog: Vec<LabeledMats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Vec<Vec<f64>>>,
    /// Per-kernel reward tables, for scenarios whose expected step reward
    /// depends on the kernel. Exactly one of `reward` / `reward_per_kernel`
    /// must be present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_per_kernel: Option<Vec<Vec<Vec<f64>>>>,
    pub gamma: f64,
    pub mu0: Vec<f64>,
    pub horizon_t: HorizonDoc,
    pub actions_b: Vec<String>,
    pub q: LabeledMats,
    pub cost: Vec<Vec<f64>>,
    pub lambda: f64,
    pub episodes_k: HorizonDoc,
}

/// Raw `kind: "tvcmdp"` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvcDoc {
    pub actions: Vec<String>,
    /// One per-action kernel per episode, in episode order.
    pub kernels: Vec<LabeledMats>,
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub mu0: Vec<f64>,
    pub cost_alpha: f64,
    pub cost_beta: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScenarioDoc {
    Lower(LowerDoc),
    Bilevel(BilevelDoc),
    Tvcmdp(TvcDoc),
}

/// A validated scenario as domain types.
#[derive(Debug, Clone)]
pub enum Scenario {
    Lower(LowerMdpSpec),
    Bilevel(UpperMdpSpec),
    Tvcmdp(TvcScenario),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn format_violations(violations: &[Violation]) -> String {
    let mut out = String::new();
    for v in violations {
        let _ = writeln!(out, "  {v}");
    }
    out
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("validation failed ({} violations):\n{}", .0.len(), format_violations(.0))]
    Validation(Vec<Violation>),
}

impl From<Vec<Violation>> for ScenarioError {
    fn from(v: Vec<Violation>) -> Self {
        ScenarioError::Validation(v)
    }
}

// ── Validation walk ────────────────────────────────────────────────────────

fn check_matrix(
    path: &str,
    mat: &[Vec<f64>],
    rows: usize,
    cols: usize,
    errs: &mut Vec<Violation>,
) {
    if mat.len() != rows {
        errs.push(Violation::new(
            path,
            format!("expected {rows} rows, got {}", mat.len()),
        ));
        return;
    }
    for (i, row) in mat.iter().enumerate() {
        if row.len() != cols {
            errs.push(Violation::new(
                format!("{path}.row[{i}]"),
                format!("expected {cols} columns, got {}", row.len()),
            ));
        }
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                errs.push(Violation::new(
                    format!("{path}.row[{i}][{j}]"),
                    "entry is not finite",
                ));
            }
        }
    }
}

fn check_stochastic_rows(path: &str, mat: &[Vec<f64>], errs: &mut Vec<Violation>) {
    for (i, row) in mat.iter().enumerate() {
        let mut sum = 0.0;
        let mut bad_entry = false;
        for (j, &v) in row.iter().enumerate() {
            if !(0.0..=1.0 + ROW_SUM_TOL).contains(&v) {
                errs.push(Violation::new(
                    format!("{path}.row[{i}][{j}]"),
                    format!("probability {v} outside [0, 1]"),
                ));
                bad_entry = true;
            }
            sum += v;
        }
        if !bad_entry && (sum - 1.0).abs() > ROW_SUM_TOL {
            errs.push(Violation::new(
                format!("{path}.row[{i}]"),
                format!("sums to {sum:.12}, expected 1 within 1e-9"),
            ));
        }
    }
}

/// Checks a labeled per-action matrix map against an action list; returns
/// matrices in action order when everything lines up.
fn check_labeled_mats(
    path: &str,
    mats: &LabeledMats,
    actions: &[String],
    n: usize,
    errs: &mut Vec<Violation>,
) -> Option<Vec<Array2<f64>>> {
    let mut ok = true;
    for label in mats.keys() {
        if !actions.iter().any(|a| a == label) {
            errs.push(Violation::new(
                format!("{path}[{label:?}]"),
                "label is not in the action list",
            ));
            ok = false;
        }
    }
    let mut out = Vec::with_capacity(actions.len());
    for label in actions {
        match mats.get(label) {
            None => {
                errs.push(Violation::new(
                    format!("{path}[{label:?}]"),
                    "missing matrix for this action",
                ));
                ok = false;
            }
            Some(mat) => {
                let sub = format!("{path}[{label:?}]");
                let before = errs.len();
                check_matrix(&sub, mat, n, n, errs);
                check_stochastic_rows(&sub, mat, errs);
                if errs.len() == before {
                    out.push(to_array2(mat));
                } else {
                    ok = false;
                }
            }
        }
    }
    ok.then_some(out)
}

fn to_array2(mat: &[Vec<f64>]) -> Array2<f64> {
    let rows = mat.len();
    let cols = mat.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows, cols), |(i, j)| mat[i][j])
}

fn check_mu0(path: &str, mu0: &[f64], n: usize, errs: &mut Vec<Violation>) {
    if mu0.len() != n {
        errs.push(Violation::new(
            path,
            format!("expected {n} entries, got {}", mu0.len()),
        ));
        return;
    }
    let mut sum = 0.0;
    for (i, &v) in mu0.iter().enumerate() {
        if v < 0.0 || !v.is_finite() {
            errs.push(Violation::new(
                format!("{path}[{i}]"),
                format!("probability {v} is negative"),
            ));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        errs.push(Violation::new(
            path,
            format!("sums to {sum:.12}, expected 1 within 1e-9"),
        ));
    }
}

fn check_discount(path: &str, value: f64, errs: &mut Vec<Violation>) {
    if !(0.0..1.0).contains(&value) {
        errs.push(Violation::new(
            path,
            format!("discount {value} outside [0, 1)"),
        ));
    }
}

fn domain_err(errs: Vec<Violation>) -> ScenarioError {
    ScenarioError::Validation(errs)
}

impl LowerDoc {
    fn dims(&self, errs: &mut Vec<Violation>) -> usize {
        if self.actions.is_empty() {
            errs.push(Violation::new("actions", "at least one action required"));
        }
        self.mats
            .values()
            .next()
            .map_or(self.mu0.len(), |m| m.len())
    }

    pub fn to_spec(&self) -> Result<LowerMdpSpec, ScenarioError> {
        let mut errs = Vec::new();
        let n = self.dims(&mut errs);
        let mats = check_labeled_mats("mats", &self.mats, &self.actions, n, &mut errs);
        check_matrix("reward", &self.reward, n, self.actions.len(), &mut errs);
        check_mu0("mu0", &self.mu0, n, &mut errs);
        check_discount("gamma", self.gamma, &mut errs);
        let horizon = self.horizon_t.to_horizon("horizon_t", &mut errs);
        if !errs.is_empty() {
            return Err(domain_err(errs));
        }
        let kernel = KernelPerAction::new(self.actions.clone(), mats.unwrap())
            .map_err(|e| domain_err(vec![Violation::new("mats", e.to_string())]))?;
        LowerMdpSpec::new(
            kernel,
            to_array2(&self.reward),
            self.gamma,
            Array1::from_vec(self.mu0.clone()),
            horizon,
        )
        .map_err(|e| domain_err(vec![Violation::new("lower", e.to_string())]))
    }
}

impl BilevelDoc {
    pub fn to_spec(&self) -> Result<UpperMdpSpec, ScenarioError> {
        let mut errs = Vec::new();
        if self.actions.is_empty() {
            errs.push(Violation::new("actions", "at least one action required"));
        }
        if self.actions_b.is_empty() {
            errs.push(Violation::new(
                "actions_b",
                "at least one model-changing action required",
            ));
        }
        if self.catalog.is_empty() {
            errs.push(Violation::new("catalog", "at least one kernel required"));
        }
        let n = self
            .catalog
            .first()
            .and_then(|mats| mats.values().next())
            .map_or(self.mu0.len(), |m| m.len());
        let m = self.catalog.len();

        let mut catalog = Vec::with_capacity(m);
        for (idx, mats) in self.catalog.iter().enumerate() {
            if let Some(arrays) = check_labeled_mats(
                &format!("catalog[{idx}].mats"),
                mats,
                &self.actions,
                n,
                &mut errs,
            ) {
                match KernelPerAction::new(self.actions.clone(), arrays) {
                    Ok(k) => catalog.push(k),
                    Err(e) => errs.push(Violation::new(
                        format!("catalog[{idx}]"),
                        e.to_string(),
                    )),
                }
            }
        }

        match (&self.reward, &self.reward_per_kernel) {
            (None, None) => errs.push(Violation::new(
                "reward",
                "one of reward / reward_per_kernel is required",
            )),
            (Some(_), Some(_)) => errs.push(Violation::new(
                "reward",
                "reward and reward_per_kernel are mutually exclusive",
            )),
            (Some(r), None) => check_matrix("reward", r, n, self.actions.len(), &mut errs),
            (None, Some(tables)) => {
                if tables.len() != m {
                    errs.push(Violation::new(
                        "reward_per_kernel",
                        format!("expected {m} tables, got {}", tables.len()),
                    ));
                }
                for (idx, table) in tables.iter().enumerate() {
                    check_matrix(
                        &format!("reward_per_kernel[{idx}]"),
                        table,
                        n,
                        self.actions.len(),
                        &mut errs,
                    );
                }
            }
        }

        let q = check_labeled_mats("q", &self.q, &self.actions_b, m, &mut errs);
        check_matrix("cost", &self.cost, m, self.actions_b.len(), &mut errs);
        check_mu0("mu0", &self.mu0, n, &mut errs);
        check_discount("gamma", self.gamma, &mut errs);
        check_discount("lambda", self.lambda, &mut errs);
        let horizon = self.horizon_t.to_horizon("horizon_t", &mut errs);
        let episodes = self.episodes_k.to_horizon("episodes_k", &mut errs);
        if !errs.is_empty() {
            return Err(domain_err(errs));
        }

        let reward = self
            .reward
            .as_ref()
            .map(|r| to_array2(r))
            .unwrap_or_else(|| {
                to_array2(self.reward_per_kernel.as_ref().unwrap().first().unwrap())
            });
        let overrides = self
            .reward_per_kernel
            .as_ref()
            .map(|tables| tables.iter().map(|t| to_array2(t)).collect());
        UpperMdpSpec::new(
            catalog,
            reward,
            overrides,
            self.gamma,
            Array1::from_vec(self.mu0.clone()),
            horizon,
            self.actions_b.clone(),
            q.unwrap(),
            to_array2(&self.cost),
            self.lambda,
            episodes,
        )
        .map_err(|e| domain_err(vec![Violation::new("bilevel", e.to_string())]))
    }
}

impl TvcDoc {
    pub fn to_spec(&self) -> Result<TvcScenario, ScenarioError> {
        let mut errs = Vec::new();
        if self.actions.is_empty() {
            errs.push(Violation::new("actions", "at least one action required"));
        }
        if self.kernels.is_empty() {
            errs.push(Violation::new("kernels", "at least one episode required"));
        }
        let n = self
            .kernels
            .first()
            .and_then(|mats| mats.values().next())
            .map_or(self.mu0.len(), |m| m.len());
        let mut kernels = Vec::with_capacity(self.kernels.len());
        for (idx, mats) in self.kernels.iter().enumerate() {
            if let Some(arrays) = check_labeled_mats(
                &format!("kernels[{idx}].mats"),
                mats,
                &self.actions,
                n,
                &mut errs,
            ) {
                match KernelPerAction::new(self.actions.clone(), arrays) {
                    Ok(k) => kernels.push(k),
                    Err(e) => errs.push(Violation::new(
                        format!("kernels[{idx}]"),
                        e.to_string(),
                    )),
                }
            }
        }
        check_matrix("reward", &self.reward, n, self.actions.len(), &mut errs);
        check_mu0("mu0", &self.mu0, n, &mut errs);
        check_discount("gamma", self.gamma, &mut errs);
        if !(self.cost_alpha >= 0.0) || !self.cost_alpha.is_finite() {
            errs.push(Violation::new("cost_alpha", "must be finite and >= 0"));
        }
        if !(self.cost_beta >= 0.0) || !self.cost_beta.is_finite() {
            errs.push(Violation::new("cost_beta", "must be finite and >= 0"));
        }
        if !(self.budget >= 0.0) {
            errs.push(Violation::new("budget", "must be >= 0"));
        }
        if !errs.is_empty() {
            return Err(domain_err(errs));
        }
        TvcScenario::new(
            to_array2(&self.reward),
            self.gamma,
            Array1::from_vec(self.mu0.clone()),
            kernels,
            self.cost_alpha,
            self.cost_beta,
            self.budget,
        )
        .map_err(|e| domain_err(vec![Violation::new("tvcmdp", e.to_string())]))
    }
}

impl ScenarioDoc {
    pub fn to_scenario(&self) -> Result<Scenario, ScenarioError> {
        match self {
            ScenarioDoc::Lower(doc) => Ok(Scenario::Lower(doc.to_spec()?)),
            ScenarioDoc::Bilevel(doc) => Ok(Scenario::Bilevel(doc.to_spec()?)),
            ScenarioDoc::Tvcmdp(doc) => Ok(Scenario::Tvcmdp(doc.to_spec()?)),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario docs serialize");
        s.push('\n');
        s
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioDoc::Lower(_) => "lower",
            ScenarioDoc::Bilevel(_) => "bilevel",
            ScenarioDoc::Tvcmdp(_) => "tvcmdp",
        }
    }
}

/// Loads the raw document without domain validation (round-trip safe).
pub fn load_doc(path: impl AsRef<Path>) -> Result<ScenarioDoc, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes a document as pretty-printed JSON.
pub fn save_doc(path: impl AsRef<Path>, doc: &ScenarioDoc) -> Result<(), ScenarioError> {
    std::fs::write(path, doc.to_json_pretty())?;
    Ok(())
}

/// Loads and fully validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    load_doc(path)?.to_scenario()
}

impl From<MdpError> for ScenarioError {
    fn from(e: MdpError) -> Self {
        ScenarioError::Validation(vec![Violation::new("scenario", e.to_string())])
    }
}

impl From<BilevelError> for ScenarioError {
    fn from(e: BilevelError) -> Self {
        ScenarioError::Validation(vec![Violation::new("scenario", e.to_string())])
    }
}

impl From<TvcError> for ScenarioError {
    fn from(e: TvcError) -> Self {
        ScenarioError::Validation(vec![Violation::new("scenario", e.to_string())])
    }
}
