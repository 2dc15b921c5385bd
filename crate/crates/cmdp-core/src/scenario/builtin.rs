//! The built-in example scenarios.
//!
//! - [`tvcmdp_paper`] — the 3-state, 3-action, 2-episode time-varying
//!   scenario with the exponential-cost budget sweep;
//! - [`bilevel_paper`] — the 6-state finance environment (price level ×
//!   portfolio) whose three kernels model boom / recession / stabilization
//!   price dynamics, configured by interest-rate actions;
//! - [`blockworld`] — a 4×3 grid with one wall, a +1 goal, a -1 pit, and a
//!   slip probability α; the catalog discretizes α and the model-changing
//!   actions nudge it up or down. Grid rewards and the α dynamics are
//!   choices of this fixture, not published values.

use super::{BilevelDoc, HorizonDoc, LabeledMats, LowerDoc, ScenarioDoc, TvcDoc};

/// The ten sweep budgets used with [`tvcmdp_paper`].
pub const TVCMDP_BUDGETS: [f64; 10] = [
    0.5, 2.06, 3.61, 5.17, 6.72, 8.28, 9.83, 11.39, 12.94, 14.0,
];

fn labeled(entries: Vec<(&str, Vec<Vec<f64>>)>) -> LabeledMats {
    entries
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Time-varying configurable MDP: `S = {0, 1, 2}`, actions
/// `{left, right, stay}`, two episodes with different kernels, `γ = 0.9`,
/// uniform `μ0`, exponential configuration cost with `α = 3`, `β = 1`.
pub fn tvcmdp_paper() -> ScenarioDoc {
    let p1 = labeled(vec![
        (
            "left",
            vec![
                vec![0.0, 0.15, 0.85],
                vec![0.75, 0.0, 0.25],
                vec![0.25, 0.75, 0.0],
            ],
        ),
        (
            "right",
            vec![
                vec![0.0, 0.85, 0.15],
                vec![0.15, 0.0, 0.85],
                vec![0.85, 0.15, 0.0],
            ],
        ),
        (
            "stay",
            vec![
                vec![0.9, 0.05, 0.05],
                vec![0.05, 0.9, 0.05],
                vec![0.05, 0.05, 0.9],
            ],
        ),
    ]);
    let p2 = labeled(vec![
        (
            "left",
            vec![
                vec![0.0, 0.45, 0.55],
                vec![0.65, 0.0, 0.35],
                vec![0.45, 0.55, 0.0],
            ],
        ),
        (
            "right",
            vec![
                vec![0.0, 0.75, 0.25],
                vec![0.25, 0.0, 0.75],
                vec![0.85, 0.15, 0.0],
            ],
        ),
        (
            "stay",
            vec![
                vec![0.8, 0.1, 0.1],
                vec![0.2, 0.6, 0.2],
                vec![0.05, 0.05, 0.9],
            ],
        ),
    ]);
    ScenarioDoc::Tvcmdp(TvcDoc {
        actions: vec!["left".into(), "right".into(), "stay".into()],
        kernels: vec![p1, p2],
        reward: vec![
            vec![10.0, 5.0, 1.0],
            vec![2.0, 20.0, 10.0],
            vec![20.0, 4.0, 40.0],
        ],
        gamma: 0.9,
        mu0: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        cost_alpha: 3.0,
        cost_beta: 1.0,
        budget: 14.0,
    })
}

/// Price-level transition matrices of the three market modes.
pub fn finance_price_kernels() -> [Vec<Vec<f64>>; 3] {
    [
        vec![
            vec![0.6, 0.3, 0.1],
            vec![0.4, 0.4, 0.2],
            vec![0.3, 0.5, 0.2],
        ],
        vec![
            vec![0.2, 0.5, 0.3],
            vec![0.1, 0.6, 0.3],
            vec![0.05, 0.25, 0.7],
        ],
        vec![
            vec![0.2, 0.6, 0.2],
            vec![0.2, 0.6, 0.2],
            vec![0.1, 0.5, 0.4],
        ],
    ]
}

/// Prices attached to the three price levels.
pub const FINANCE_PRICES: [f64; 3] = [90.0, 100.0, 130.0];

/// Synthetic bi-level finance MDP. Lower states are
/// `(price level, portfolio)` pairs indexed `s = 2·p + f` with `f = 0` for
/// cash and `f = 1` for holding; `buy` always ends holding and `sell`
/// always ends in cash, while the price level moves by the current market
/// kernel. Holding earns the expected price change; buying into a position
/// costs 1, and so does selling out of one.
pub fn bilevel_paper() -> ScenarioDoc {
    let price_kernels = finance_price_kernels();
    let mut catalog = Vec::with_capacity(3);
    let mut reward_per_kernel = Vec::with_capacity(3);
    for pk in &price_kernels {
        // 6x6 per-action matrices: buy -> holding, sell -> cash.
        let mut buy = vec![vec![0.0; 6]; 6];
        let mut sell = vec![vec![0.0; 6]; 6];
        for p in 0..3 {
            for f in 0..2 {
                let s = 2 * p + f;
                for p2 in 0..3 {
                    buy[s][2 * p2 + 1] = pk[p][p2];
                    sell[s][2 * p2] = pk[p][p2];
                }
            }
        }
        catalog.push(labeled(vec![("buy", buy), ("sell", sell)]));

        // expected price drift per price level under this kernel
        let drift: Vec<f64> = (0..3)
            .map(|p| {
                (0..3)
                    .map(|p2| pk[p][p2] * FINANCE_PRICES[p2])
                    .sum::<f64>()
                    - FINANCE_PRICES[p]
            })
            .collect();
        let mut reward = vec![vec![0.0; 2]; 6];
        for p in 0..3 {
            reward[2 * p][0] = -1.0; // buy from cash
            reward[2 * p][1] = 0.0; // sell with nothing held
            reward[2 * p + 1][0] = drift[p]; // keep holding
            reward[2 * p + 1][1] = drift[p] - 1.0; // sell the position
        }
        reward_per_kernel.push(reward);
    }

    ScenarioDoc::Bilevel(BilevelDoc {
        actions: vec!["buy".into(), "sell".into()],
        catalog,
        reward: None,
        reward_per_kernel: Some(reward_per_kernel),
        gamma: 0.95,
        mu0: vec![1.0 / 6.0; 6],
        horizon_t: HorizonDoc::Steps(120),
        actions_b: vec![
            "decrease_rate".into(),
            "increase_rate".into(),
            "keep_rate".into(),
        ],
        q: labeled(vec![
            (
                "decrease_rate",
                vec![
                    vec![0.7, 0.2, 0.1],
                    vec![0.6, 0.2, 0.2],
                    vec![0.7, 0.1, 0.2],
                ],
            ),
            (
                "increase_rate",
                vec![
                    vec![0.5, 0.3, 0.2],
                    vec![0.3, 0.5, 0.2],
                    vec![0.4, 0.4, 0.2],
                ],
            ),
            (
                "keep_rate",
                vec![
                    vec![0.6, 0.25, 0.15],
                    vec![0.4, 0.4, 0.2],
                    vec![0.2, 0.3, 0.5],
                ],
            ),
        ]),
        cost: vec![
            vec![0.2, 0.1, 0.05],
            vec![0.5, 0.3, 0.1],
            vec![0.3, 0.2, 0.1],
        ],
        lambda: 0.95,
        episodes_k: HorizonDoc::Tag("infinite".into()),
    })
}

// ── Block world ────────────────────────────────────────────────────────────

const BW_W: usize = 4;
const BW_H: usize = 3;
const BW_WALL: (usize, usize) = (1, 1);
const BW_GOAL: (usize, usize) = (3, 2);
const BW_PIT: (usize, usize) = (3, 1);
const BW_STEP_REWARD: f64 = -0.04;

fn bw_cells() -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for y in 0..BW_H {
        for x in 0..BW_W {
            if (x, y) != BW_WALL {
                cells.push((x, y));
            }
        }
    }
    cells
}

fn bw_step(from: (usize, usize), dir: usize) -> (usize, usize) {
    let (dx, dy): (isize, isize) = match dir {
        0 => (0, 1),  // up
        1 => (0, -1), // down
        2 => (-1, 0), // left
        _ => (1, 0),  // right
    };
    let nx = from.0 as isize + dx;
    let ny = from.1 as isize + dy;
    if nx < 0 || nx >= BW_W as isize || ny < 0 || ny >= BW_H as isize {
        return from;
    }
    let next = (nx as usize, ny as usize);
    if next == BW_WALL {
        from
    } else {
        next
    }
}

/// 4×3 grid world over a slip-probability catalog.
///
/// With slip `α` the agent moves in the intended direction with probability
/// `1-α` and to each orthogonal direction with probability `α/2`; moves into
/// the wall or off the grid stay in place. Terminal cells pay `+1` / `-1`
/// once and fall into an absorbing done state. The upper level discretizes
/// `α ∈ [0, 1]` into `alpha_points` values; model-changing actions move one
/// grid step down/up with probability 0.9 (staying otherwise), and cost
/// `C(α, b) = E_{Q(α'|α,b)}[exp(|α' - α|)]`.
pub fn blockworld(alpha_points: usize) -> ScenarioDoc {
    assert!(alpha_points >= 2, "need at least two alpha points");
    let cells = bw_cells();
    let idx = |c: (usize, usize)| cells.iter().position(|&x| x == c).unwrap();
    let n = cells.len() + 1; // plus absorbing done state
    let done = n - 1;
    let dirs = ["up", "down", "left", "right"];
    let orth: [[usize; 2]; 4] = [[2, 3], [2, 3], [0, 1], [0, 1]];

    let alpha_of = |i: usize| i as f64 / (alpha_points - 1) as f64;

    let mut catalog = Vec::with_capacity(alpha_points);
    for i in 0..alpha_points {
        let alpha = alpha_of(i);
        let mut mats: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; n]; n]; 4];
        for (a, mat) in mats.iter_mut().enumerate() {
            for &cell in &cells {
                let s = idx(cell);
                if cell == BW_GOAL || cell == BW_PIT {
                    mat[s][done] = 1.0;
                    continue;
                }
                mat[s][idx(bw_step(cell, a))] += 1.0 - alpha;
                for &o in &orth[a] {
                    mat[s][idx(bw_step(cell, o))] += alpha / 2.0;
                }
            }
            mat[done][done] = 1.0;
        }
        catalog.push(labeled(
            dirs.iter().map(|&d| d).zip(mats).map(|(d, m)| (d, m)).collect(),
        ));
    }

    let mut reward = vec![vec![BW_STEP_REWARD; 4]; n];
    reward[idx(BW_GOAL)] = vec![1.0; 4];
    reward[idx(BW_PIT)] = vec![-1.0; 4];
    reward[done] = vec![0.0; 4];

    let mut mu0 = vec![0.0; n];
    let start_cells: Vec<usize> = cells
        .iter()
        .filter(|&&c| c != BW_GOAL && c != BW_PIT)
        .map(|&c| idx(c))
        .collect();
    for &s in &start_cells {
        mu0[s] = 1.0 / start_cells.len() as f64;
    }

    // alpha dynamics: one grid step with probability 0.9, clamped at the ends
    let m = alpha_points;
    let mut q_dec = vec![vec![0.0; m]; m];
    let mut q_keep = vec![vec![0.0; m]; m];
    let mut q_inc = vec![vec![0.0; m]; m];
    for i in 0..m {
        q_dec[i][i.saturating_sub(1)] += 0.9;
        q_dec[i][i] += 0.1;
        q_keep[i][i] = 1.0;
        q_inc[i][(i + 1).min(m - 1)] += 0.9;
        q_inc[i][i] += 0.1;
    }
    let q_list = [&q_dec, &q_keep, &q_inc];
    let mut cost = vec![vec![0.0; 3]; m];
    for i in 0..m {
        for (b, q) in q_list.iter().enumerate() {
            cost[i][b] = (0..m)
                .filter(|&j| q[i][j] > 0.0)
                .map(|j| q[i][j] * (alpha_of(j) - alpha_of(i)).abs().exp())
                .sum();
        }
    }

    ScenarioDoc::Bilevel(BilevelDoc {
        actions: dirs.iter().map(|&d| d.to_string()).collect(),
        catalog,
        reward: Some(reward),
        reward_per_kernel: None,
        gamma: 0.95,
        mu0,
        horizon_t: HorizonDoc::Steps(120),
        actions_b: vec!["decrease".into(), "keep".into(), "increase".into()],
        q: labeled(vec![
            ("decrease", q_dec),
            ("keep", q_keep),
            ("increase", q_inc),
        ]),
        cost,
        lambda: 0.95,
        episodes_k: HorizonDoc::Tag("infinite".into()),
    })
}

/// A small lower-only document (episode 1 of the time-varying scenario),
/// handy as a `solve-lower` input in tests and docs.
pub fn lower_example() -> ScenarioDoc {
    match tvcmdp_paper() {
        ScenarioDoc::Tvcmdp(doc) => ScenarioDoc::Lower(LowerDoc {
            actions: doc.actions.clone(),
            mats: doc.kernels[0].clone(),
            reward: doc.reward.clone(),
            gamma: doc.gamma,
            mu0: doc.mu0.clone(),
            horizon_t: HorizonDoc::Steps(88),
        }),
        _ => unreachable!(),
    }
}
