//! Partition-comparison metrics (NMI, ARI, Hungarian-mapped ACC), the
//! silhouette coefficient, and the cluster-count error rate.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::alignment::hungarian;
use crate::data::FeatureMatrix;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("label length mismatch: truth={truth}, predicted={predicted}")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no samples")]
    Empty,
    #[error("silhouette needs at least 2 clusters, found {0}")]
    TooFewClusters(usize),
    #[error("true cluster count must be >= 1")]
    InvalidK,
}

/// How mutual information is normalized in [`nmi_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmiNormalization {
    /// `(H(U) + H(V)) / 2`
    #[default]
    Arithmetic,
    /// `sqrt(H(U) · H(V))`
    Geometric,
}

/// Which inter-cluster term the silhouette uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SilhouetteVariant {
    /// Rousseeuw: smallest mean distance to another cluster.
    #[default]
    MeanNearestCluster,
    /// Smallest distance to any single sample outside the own cluster.
    NearestSample,
}

/// NMI, ARI and ACC for one labelling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub nmi: f64,
    pub ari: f64,
    /// Percent.
    pub acc: f64,
}

fn check_lengths(truth: &[usize], pred: &[usize]) -> Result<usize, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            predicted: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(truth.len())
}

/// Maps arbitrary ids to `0..m` in ascending id order.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        ids.entry(l).or_insert(0);
    }
    for (next, slot) in ids.values_mut().enumerate() {
        *slot = next;
    }
    let m = ids.len();
    (labels.iter().map(|l| ids[l]).collect(), m)
}

/// Contingency table `table[t][p]` plus row and column marginals.
struct Contingency {
    table: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    n: usize,
}

impl Contingency {
    fn new(truth: &[usize], pred: &[usize]) -> Self {
        let (t, kt) = compact(truth);
        let (p, kp) = compact(pred);
        let mut table = vec![vec![0; kp]; kt];
        let mut rows = vec![0; kt];
        let mut cols = vec![0; kp];
        for (&a, &b) in t.iter().zip(&p) {
            table[a][b] += 1;
            rows[a] += 1;
            cols[b] += 1;
        }
        Self {
            table,
            rows,
            cols,
            n: truth.len(),
        }
    }
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Normalized mutual information with the arithmetic-mean normalizer.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64, MetricsError> {
    nmi_with(truth, pred, NmiNormalization::Arithmetic)
}

/// NMI in `[0, 1]`; 1 when both labellings put everything in one cluster.
pub fn nmi_with(
    truth: &[usize],
    pred: &[usize],
    normalization: NmiNormalization,
) -> Result<f64, MetricsError> {
    check_lengths(truth, pred)?;
    let c = Contingency::new(truth, pred);
    let n = c.n as f64;
    let h_truth = entropy(&c.rows, c.n);
    let h_pred = entropy(&c.cols, c.n);
    if h_truth == 0.0 && h_pred == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            if count > 0 {
                let nij = count as f64;
                mi += nij / n * (n * nij / (c.rows[i] as f64 * c.cols[j] as f64)).ln();
            }
        }
    }
    let norm = match normalization {
        NmiNormalization::Arithmetic => 0.5 * (h_truth + h_pred),
        NmiNormalization::Geometric => (h_truth * h_pred).sqrt(),
    };
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok((mi / norm).clamp(0.0, 1.0))
}

fn pairs(count: usize) -> f64 {
    let c = count as f64;
    c * (c - 1.0) / 2.0
}

/// Hubert–Arabie adjusted Rand index.
pub fn ari(truth: &[usize], pred: &[usize]) -> Result<f64, MetricsError> {
    let n = check_lengths(truth, pred)?;
    if n < 2 {
        return Ok(1.0);
    }
    let c = Contingency::new(truth, pred);
    let index: f64 = c.table.iter().flatten().map(|&x| pairs(x)).sum();
    let sum_rows: f64 = c.rows.iter().map(|&x| pairs(x)).sum();
    let sum_cols: f64 = c.cols.iter().map(|&x| pairs(x)).sum();
    let expected = sum_rows * sum_cols / pairs(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denominator = max_index - expected;
    if denominator == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denominator)
}

/// Clustering accuracy in percent under the best one-to-one mapping of
/// predicted clusters onto true classes (Hungarian on the zero-padded square
/// contingency table).
pub fn acc(truth: &[usize], pred: &[usize]) -> Result<f64, MetricsError> {
    let n = check_lengths(truth, pred)?;
    let c = Contingency::new(truth, pred);
    let size = c.rows.len().max(c.cols.len());
    let max_count = c.table.iter().flatten().copied().max().unwrap_or(0) as f64;
    // cost[p][t] = max - count(t, p); minimizing it maximizes matched samples
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|p| {
            (0..size)
                .map(|t| {
                    let count = c.table.get(t).and_then(|r| r.get(p)).copied().unwrap_or(0);
                    max_count - count as f64
                })
                .collect()
        })
        .collect();
    let solved = hungarian(&cost).expect("contingency costs are finite and square");
    let matched: usize = solved
        .assignment
        .iter()
        .enumerate()
        .map(|(p, &t)| c.table.get(t).and_then(|r| r.get(p)).copied().unwrap_or(0))
        .sum();
    Ok(100.0 * matched as f64 / n as f64)
}

pub fn evaluate(truth: &[usize], pred: &[usize]) -> Result<Scores, MetricsError> {
    Ok(Scores {
        nmi: nmi(truth, pred)?,
        ari: ari(truth, pred)?,
        acc: acc(truth, pred)?,
    })
}

/// Mean silhouette coefficient with Euclidean distances.
pub fn silhouette(features: &FeatureMatrix, labels: &[usize]) -> Result<f64, MetricsError> {
    silhouette_with(features, labels, SilhouetteVariant::MeanNearestCluster)
}

/// Mean of `(b - a) / max(a, b)` over all samples, where `a` is the mean
/// distance to the rest of the own cluster. Samples in singleton clusters
/// contribute 0.
pub fn silhouette_with(
    features: &FeatureMatrix,
    labels: &[usize],
    variant: SilhouetteVariant,
) -> Result<f64, MetricsError> {
    if labels.len() != features.rows() {
        return Err(MetricsError::LengthMismatch {
            truth: features.rows(),
            predicted: labels.len(),
        });
    }
    let (labels, k) = compact(labels);
    if k < 2 {
        return Err(MetricsError::TooFewClusters(k));
    }
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);

    let per_sample: Vec<f64> = (0..features.rows())
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let xi = features.row(i);
            let mut sums = vec![0.0; k];
            let mut nearest_outside = f64::INFINITY;
            for (j, xj) in features.iter_rows().enumerate() {
                if j == i {
                    continue;
                }
                let d = euclidean(xi, xj);
                sums[labels[j]] += d;
                if labels[j] != own && d < nearest_outside {
                    nearest_outside = d;
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = match variant {
                SilhouetteVariant::MeanNearestCluster => (0..k)
                    .filter(|&c| c != own)
                    .map(|c| sums[c] / sizes[c] as f64)
                    .fold(f64::INFINITY, f64::min),
                SilhouetteVariant::NearestSample => nearest_outside,
            };
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(per_sample.iter().sum::<f64>() / per_sample.len() as f64)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    crate::data::squared_distance(a, b).sqrt()
}

/// Relative error of a predicted cluster count, in percent.
pub fn k_error(k_true: usize, k_pred: usize) -> Result<f64, MetricsError> {
    if k_true == 0 {
        return Err(MetricsError::InvalidK);
    }
    Ok(100.0 * k_true.abs_diff(k_pred) as f64 / k_true as f64)
}
