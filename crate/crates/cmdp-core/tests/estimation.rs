//! Monte-Carlo checks of the empirical-frequency estimators.

mod common;

use cmdp_core::bilevel::{
    associate_kernel, estimate_lower_kernel, estimate_upper_kernel, kernel_distance,
    KernelDataset, Smoothing, TransitionDataset,
};
use cmdp_core::mdp::{KernelPerAction, Transition};
use common::*;
use ndarray::ArrayView1;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn draw(row: ArrayView1<f64>, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// `samples` draws from every `(s, a)` row of the kernel.
fn sample_dataset(
    kernel: &KernelPerAction,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> TransitionDataset {
    let mut ds = TransitionDataset::new(kernel.n(), kernel.num_actions());
    for s in 0..kernel.n() {
        for a in 0..kernel.num_actions() {
            for _ in 0..samples {
                let s_next = draw(kernel.row(s, a), rng);
                ds.record(&Transition {
                    s,
                    a,
                    r: 0.0,
                    s_next,
                })
                .unwrap();
            }
        }
    }
    ds
}

fn mean_row_tv(a: &KernelPerAction, b: &KernelPerAction) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for act in 0..a.num_actions() {
        for s in 0..a.n() {
            total += 0.5
                * a.row(s, act)
                    .iter()
                    .zip(b.row(s, act).iter())
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f64>();
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn lower_estimates_concentrate() {
    // 1e5 samples per (s,a) from the first paper kernel: every row within
    // TV 0.02, across every seed
    let scn = tvcmdp_paper_scenario();
    let kernel = &scn.kernels()[0];
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let ds = sample_dataset(kernel, 100_000, &mut rng);
        let est = estimate_lower_kernel(&ds, Smoothing::None).unwrap();
        let worst = kernel_distance(&est, kernel).unwrap();
        assert!(worst <= 0.02, "seed {seed}: worst row TV {worst}");
    }
}

#[test]
fn upper_estimates_concentrate() {
    // rows of Q^(decrease) from the finance scenario
    let upper = finance_scenario();
    let q = &upper.q()[0];
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let mut ds = KernelDataset::new(upper.m(), 1);
        for p in 0..upper.m() {
            for _ in 0..100_000 {
                let p_next = draw(q.row(p), &mut rng);
                ds.record(p, 0, p_next).unwrap();
            }
        }
        let est = estimate_upper_kernel(&ds, Smoothing::None).unwrap();
        for p in 0..upper.m() {
            let tv = 0.5
                * est[0]
                    .row(p)
                    .iter()
                    .zip(q.row(p).iter())
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f64>();
            assert!(tv <= 0.02, "seed {seed}, row {p}: TV {tv}");
        }
    }
}

#[test]
fn estimation_error_shrinks_at_the_root_n_rate() {
    // quadrupling the per-pair sample count should halve the mean row TV
    // (factor in [1.6, 2.6] averaged over seeds)
    let scn = tvcmdp_paper_scenario();
    for kernel in scn.kernels() {
        let mut small_sum = 0.0;
        let mut large_sum = 0.0;
        let seeds = 20u64;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
            let ds_small = sample_dataset(kernel, 2_500, &mut rng);
            let ds_large = sample_dataset(kernel, 10_000, &mut rng);
            small_sum +=
                mean_row_tv(&estimate_lower_kernel(&ds_small, Smoothing::None).unwrap(), kernel);
            large_sum +=
                mean_row_tv(&estimate_lower_kernel(&ds_large, Smoothing::None).unwrap(), kernel);
        }
        let ratio = small_sum / large_sum;
        assert!(
            (1.6..=2.6).contains(&ratio),
            "shrink factor {ratio} outside [1.6, 2.6]"
        );
    }
}

#[test]
fn perturbed_kernel_associates_with_its_source() {
    // +-0.01 moved between two entries of each row keeps the estimate
    // closest to the original catalog member
    let scn = tvcmdp_paper_scenario();
    let catalog = scn.kernels().to_vec();
    let base = &catalog[0];
    let mats: Vec<_> = base
        .mats()
        .iter()
        .map(|m| {
            let mut out = m.clone();
            for i in 0..out.nrows() {
                // move 0.01 from the largest entry to the smallest
                let row = out.row(i).to_owned();
                let (mut hi, mut lo) = (0, 0);
                for (j, &v) in row.iter().enumerate() {
                    if v > row[hi] {
                        hi = j;
                    }
                    if v < row[lo] {
                        lo = j;
                    }
                }
                out[(i, hi)] -= 0.01;
                out[(i, lo)] += 0.01;
            }
            out
        })
        .collect();
    let perturbed = KernelPerAction::new(base.labels().to_vec(), mats).unwrap();
    let (idx, dist) = associate_kernel(&perturbed, &catalog).unwrap();
    assert_eq!(idx, 0);
    assert!(dist > 0.0 && dist <= 0.011, "distance {dist}");
}
