//! Brute-force reference implementations shared by the integration tests.
//!
//! Everything here is written from definitions, without reusing library
//! internals, so agreement with the library is meaningful.

#![allow(dead_code)]

use std::collections::HashMap;

use dac::data::Matrix;
use dac::encoder::{cross_entropy, EncoderModel};

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        out.push(perm.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| perm[i - 1] < perm[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| perm[j] > perm[i - 1]).unwrap();
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
}

/// Minimum assignment cost and the lexicographically first permutation that
/// attains it. Costs are summed in row order.
pub fn brute_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let mut best = (f64::INFINITY, Vec::new());
    for perm in permutations(cost.len()) {
        let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if c < best.0 {
            best = (c, perm);
        }
    }
    best
}

/// Every labelling of `n` items into at most `max_blocks` blocks, each
/// partition listed once (restricted growth strings).
pub fn partitions(n: usize, max_blocks: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, max_blocks: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let used = prefix.iter().map(|&l| l + 1).max().unwrap_or(0);
        for l in 0..=used.min(max_blocks - 1) {
            prefix.push(l);
            grow(prefix, n, max_blocks, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), n, max_blocks, &mut out);
    out
}

fn entropy_of<K: std::hash::Hash + Eq>(items: impl Iterator<Item = K>, n: f64) -> f64 {
    let mut counts: HashMap<K, usize> = HashMap::new();
    for k in items {
        *counts.entry(k).or_default() += 1;
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// NMI as `(H(U) + H(V) - H(U,V)) / mean(H(U), H(V))`, 1 for two trivial partitions.
pub fn oracle_nmi(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len() as f64;
    let hu = entropy_of(truth.iter(), n);
    let hv = entropy_of(pred.iter(), n);
    let huv = entropy_of(truth.iter().zip(pred), n);
    if hu == 0.0 && hv == 0.0 {
        return 1.0;
    }
    let norm = 0.5 * (hu + hv);
    ((hu + hv - huv) / norm).clamp(0.0, 1.0)
}

/// ARI from the four pair counts over all `C(n, 2)` pairs.
pub fn oracle_ari(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len();
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            match (truth[i] == truth[j], pred[i] == pred[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0.0 {
        return 1.0;
    }
    2.0 * (a * d - b * c) / den
}

/// Best one-to-one relabelling of predicted ids onto truth ids, in percent.
pub fn oracle_acc(truth: &[usize], pred: &[usize]) -> f64 {
    let m = truth.iter().chain(pred).copied().max().map_or(0, |x| x + 1);
    let best = permutations(m)
        .into_iter()
        .map(|map| {
            truth
                .iter()
                .zip(pred)
                .filter(|(&t, &p)| map[p] == t)
                .count()
        })
        .max()
        .unwrap_or(0);
    100.0 * best as f64 / truth.len() as f64
}

/// Smallest mean squared distance to block means over every partition into
/// exactly `k` non-empty blocks.
pub fn exhaustive_kmeans(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    partitions(n, k)
        .into_iter()
        .filter(|p| p.iter().max() == Some(&(k - 1)))
        .map(|p| {
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0.0; k];
            for (x, &l) in points.iter().zip(&p) {
                counts[l] += 1.0;
                for (s, v) in sums[l].iter_mut().zip(x) {
                    *s += v;
                }
            }
            let sse: f64 = points
                .iter()
                .zip(&p)
                .map(|(x, &l)| {
                    x.iter()
                        .zip(&sums[l])
                        .map(|(v, s)| (v - s / counts[l]).powi(2))
                        .sum::<f64>()
                })
                .sum();
            sse / n as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// Loss through the public forward pass only.
pub fn forward_loss(model: &EncoderModel, z: &Matrix, labels: &[usize]) -> f64 {
    let logits = model.logits(&model.encode(z).unwrap()).unwrap();
    cross_entropy(&logits, labels).unwrap()
}

/// Largest element-wise relative error between analytic and central
/// finite-difference gradients over all four parameter blocks.
///
/// Relative error is `|a - f| / max(|a|, |f|, floor)`; the floor keeps
/// exactly-zero or vanishing entries from dividing by zero.
pub fn gradient_check(
    model: &EncoderModel,
    z: &Matrix,
    labels: &[usize],
    h: f64,
    floor: f64,
) -> f64 {
    let (_, g) = model.gradients(z, labels).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = |analytic: &[f64], pick: &dyn Fn(&mut EncoderModel) -> &mut [f64]| {
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            pick(&mut plus)[i] += h;
            let mut minus = model.clone();
            pick(&mut minus)[i] -= h;
            let f = (forward_loss(&plus, z, labels) - forward_loss(&minus, z, labels)) / (2.0 * h);
            let rel = (a - f).abs() / a.abs().max(f.abs()).max(floor);
            worst = worst.max(rel);
        }
    };
    probe(g.weights.as_slice(), &|m| m.weights.as_mut_slice());
    probe(&g.bias, &|m| &mut m.bias);
    probe(g.classifier_weights.as_slice(), &|m| {
        m.classifier.as_mut().unwrap().weights.as_mut_slice()
    });
    probe(&g.classifier_bias, &|m| {
        &mut m.classifier.as_mut().unwrap().bias
    });
    worst
}

/// Random model and batch for gradient checks: weights drawn wide enough that
/// the tanh units are in their curved range.
pub fn gradient_case(case: u64) -> (EncoderModel, Matrix, Vec<usize>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(case);
    let d_in = rng.random_range(2..=6);
    let hidden = rng.random_range(2..=6);
    let classes = rng.random_range(2..=5);
    let batch = 4;
    let mut model = EncoderModel::new(d_in, hidden, rng.random());
    model.reset_classifier(classes, rng.random());
    for w in model.weights.as_mut_slice() {
        *w = rng.random_range(-1.0..1.0);
    }
    for b in &mut model.bias {
        *b = rng.random_range(-0.5..0.5);
    }
    let values: Vec<f64> = (0..batch * d_in)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let z = Matrix::new(batch, d_in, values).unwrap();
    let labels = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    (model, z, labels)
}
