//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Synthetic data only. The end-to-end criteria use the `k = 10`,
//! 100-per-cluster, 16-dimensional, separation-20 mixture with dataset
//! seed 1 and run seeds 0..10.

mod common;

use std::time::{Duration, Instant};

use common::{
    brute_assignment, exhaustive_kmeans, gradient_case, gradient_check, oracle_acc, oracle_ari,
    oracle_nmi, partitions,
};
use dac::alignment::{hungarian, permutation_cost};
use dac::data::{gen_synthetic, make_split, FeatureMatrix, LabelVector, LabeledSampling, Matrix};
use dac::kmeans::{kmeans, kmeans_restarts};
use dac::metrics::{acc, ari, k_error, nmi, silhouette};
use dac::pipeline::{pretrain_stage, run_from_pretrained, RunConfig, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEEDS: u64 = 10;
const TRUE_K: usize = 10;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(name: &str, o: &Outcome, elapsed: Duration) -> bool {
    println!(
        "{} {name}: {} [{:.1?}]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed
    );
    o.pass
}

fn hungarian_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..200 {
        let k = rng.random_range(2..=8);
        let cost: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..k).map(|_| rng.random_range(0.0..100.0)).collect())
            .collect();
        let (best, _) = brute_assignment(&cost);
        let got = hungarian(&cost).unwrap();
        if permutation_cost(&cost, &got.assignment) != best || got.total_cost != best {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: mismatches == 0 && elapsed < Duration::from_secs(10),
        detail: format!("200 matrices, {mismatches} cost mismatches, {elapsed:.2?} (limit 10 s)"),
    }
}

fn metric_oracles() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut pairs = 0usize;
    for n in 1..=8 {
        let parts = partitions(n, 3);
        for t in &parts {
            for p in &parts {
                pairs += 1;
                worst = worst
                    .max((nmi(t, p).unwrap() - oracle_nmi(t, p)).abs())
                    .max((ari(t, p).unwrap() - oracle_ari(t, p)).abs())
                    .max((acc(t, p).unwrap() - oracle_acc(t, p)).abs());
            }
        }
    }
    let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]]).unwrap();
    let sc = silhouette(&x, &[0, 0, 1, 1]).unwrap();
    Outcome {
        pass: worst <= 1e-12 && (sc - 0.8997).abs() <= 1e-4,
        detail: format!(
            "{pairs} partition pairs, max |lib - oracle| {worst:.1e} (tol 1e-12); silhouette {sc:.6} vs 0.8997 (tol 1e-4)"
        ),
    }
}

fn k_error_table() -> Outcome {
    let cases = [
        ((150, 122), "18.67"),
        ((77, 66), "14.29"),
        ((150, 129), "14.00"),
        ((77, 67), "12.99"),
    ];
    let got: Vec<String> = cases
        .iter()
        .map(|&((t, p), _)| format!("{:.2}", k_error(t, p).unwrap()))
        .collect();
    let pass = cases.iter().zip(&got).all(|((_, want), g)| g == want);
    Outcome {
        pass,
        detail: format!("got {got:?}"),
    }
}

fn gradients() -> Outcome {
    let worst = (0..20)
        .map(|case| {
            let (model, z, labels) = gradient_case(case);
            gradient_check(&model, &z, &labels, 1e-5, 1e-6)
        })
        .fold(0.0f64, f64::max);
    Outcome {
        pass: worst <= 1e-4,
        detail: format!("20 configurations, max relative error {worst:.2e} (tol 1e-4)"),
    }
}

fn kmeans_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut increases = 0;
    for i in 0..100 {
        let n = rng.random_range(10..200);
        let d = rng.random_range(1..6);
        let k = rng.random_range(2..8);
        let x = Matrix::new(
            n,
            d,
            (0..n * d).map(|_| rng.random_range(-5.0..5.0)).collect(),
        )
        .unwrap();
        let model = kmeans(&x, k, i, 100, 1e-4).unwrap();
        if model.objective_trace.windows(2).any(|w| w[1] > w[0]) {
            increases += 1;
        }
    }
    let mut missed = 0;
    let mut instances = 0;
    for i in 0..60u64 {
        let n = rng.random_range(3..=8);
        let k = rng.random_range(2..=3usize.min(n));
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let best = exhaustive_kmeans(&pts, k);
        let x = Matrix::from_rows(&pts).unwrap();
        let got = kmeans_restarts(&x, k, i, 10, 100, 1e-4).unwrap().objective;
        instances += 1;
        if (got - best).abs() > 1e-9 * best.max(1.0) {
            missed += 1;
        }
    }
    Outcome {
        pass: increases == 0 && missed == 0,
        detail: format!(
            "100 instances with {increases} objective increases; {missed}/{instances} exhaustive optima missed"
        ),
    }
}

fn toy() -> (FeatureMatrix, LabelVector) {
    gen_synthetic(TRUE_K, 100, 16, 20.0, 1).unwrap()
}

/// Mean ACC and predicted K over the seeds for one setting.
fn sweep_point(known_ratio: f64, cfg: impl Fn(u64) -> RunConfig + Sync) -> (f64, Vec<usize>) {
    let (x, y) = toy();
    let results: Vec<(f64, usize)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let data = make_split(
                x.clone(),
                y.clone(),
                known_ratio,
                0.1,
                LabeledSampling::PerClass,
                seed,
            )
            .unwrap();
            let cfg = cfg(seed);
            let pre = pretrain_stage(&data, &cfg).unwrap();
            let out = run_from_pretrained(&data, &pre, &cfg).unwrap();
            (out.scores(&data).unwrap().acc, out.k)
        })
        .collect();
    let mean = results.iter().map(|r| r.0).sum::<f64>() / SEEDS as f64;
    (mean, results.iter().map(|r| r.1).collect())
}

fn fixed_k(seed: u64) -> RunConfig {
    RunConfig {
        k: Some(TRUE_K),
        seed,
        ..RunConfig::default()
    }
}

fn estimated_k(k_prime: usize) -> impl Fn(u64) -> RunConfig + Sync {
    move |seed| RunConfig {
        k_prime: Some(k_prime),
        seed,
        ..RunConfig::default()
    }
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let (x, y) = toy();
    let accs: Vec<(f64, f64)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let data = make_split(
                x.clone(),
                y.clone(),
                0.75,
                0.1,
                LabeledSampling::PerClass,
                seed,
            )
            .unwrap();
            let cfg = fixed_k(seed);
            let pre = pretrain_stage(&data, &cfg).unwrap();
            let align = run_from_pretrained(&data, &pre, &cfg).unwrap();
            let reinit_cfg = RunConfig {
                strategy: Strategy::Reinitialize,
                ..cfg
            };
            let reinit = run_from_pretrained(&data, &pre, &reinit_cfg).unwrap();
            (
                align.scores(&data).unwrap().acc,
                reinit.scores(&data).unwrap().acc,
            )
        })
        .collect();
    let elapsed = start.elapsed();
    let align = accs.iter().map(|a| a.0).sum::<f64>() / SEEDS as f64;
    let reinit = accs.iter().map(|a| a.1).sum::<f64>() / SEEDS as f64;
    Outcome {
        pass: align >= 95.0 && align > reinit && elapsed < Duration::from_secs(300),
        detail: format!(
            "alignment mean ACC {align:.2} (need >= 95), reinitialization {reinit:.2} (need alignment strictly greater), {elapsed:.1?} (limit 5 min)"
        ),
    }
}

fn estimate_k_direction() -> Outcome {
    let (_, ks) = sweep_point(0.75, estimated_k(2 * TRUE_K));
    let within = ks
        .iter()
        .filter(|&&k| k_error(TRUE_K, k).unwrap() <= 10.0)
        .count();
    Outcome {
        pass: within >= 8,
        detail: format!(
            "K' = {}, predicted K per seed {ks:?}, {within}/10 within 10% (need >= 8)",
            2 * TRUE_K
        ),
    }
}

fn sweep_direction() -> Outcome {
    let (low, _) = sweep_point(0.25, fixed_k);
    let (high, _) = sweep_point(0.75, fixed_k);
    let (one, _) = sweep_point(0.75, estimated_k(TRUE_K));
    let (four, _) = sweep_point(0.75, estimated_k(4 * TRUE_K));
    Outcome {
        pass: high >= low && one >= four - 5.0,
        detail: format!(
            "known-ratio ACC 0.75: {high:.2} vs 0.25: {low:.2} (need >=); K' ACC 1x: {one:.2} vs 4x: {four:.2} (need >= 4x - 5)"
        ),
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("hungarian-oracle", hungarian_oracle),
        ("metric-oracles", metric_oracles),
        ("k-error-table", k_error_table),
        ("gradient-check", gradients),
        ("kmeans-monotone-and-optimal", kmeans_checks),
        ("end-to-end-alignment-vs-reinit", end_to_end),
        ("estimate-k", estimate_k_direction),
        ("sweep-direction", sweep_direction),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        if !report(name, &outcome, start.elapsed()) {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
