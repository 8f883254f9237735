//! Lloyd's algorithm with k-means++ seeding.
//!
//! Minimizes the mean squared distance from every sample to its assigned
//! centroid. Distances are computed by direct subtraction in `f64`, and
//! centroid sums are accumulated in sample order so a fixed seed reproduces
//! the same result bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{squared_distance, FeatureMatrix, LabelVector, Matrix};
use crate::derive_seed;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KMeansError {
    #[error("k = {k} out of range for {n} samples (need 2 <= k <= n)")]
    KOutOfRange { k: usize, n: usize },
    #[error("features contain non-finite values")]
    NonFinite,
    #[error("feature dimension {features} does not match centroid dimension {centroids}")]
    DimensionMismatch { features: usize, centroids: usize },
    #[error("{rows} rows but {labels} assignments")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("restarts must be >= 1")]
    NoRestarts,
}

/// Centroids and assignments produced by [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    /// `K × D`
    pub centroids: Matrix,
    pub assignments: LabelVector,
    /// Mean squared distance to the assigned centroid.
    pub objective: f64,
    /// Lloyd iterations performed (centroid updates).
    pub n_iter: usize,
    /// Objective after seeding and after every iteration.
    pub objective_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in self.assignments.iter() {
            sizes[a] += 1;
        }
        sizes
    }
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = squared_distance(point, c);
        // strict comparison keeps the lowest index on ties
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Nearest-centroid label for every sample; ties go to the lowest index.
pub fn assign(features: &FeatureMatrix, centroids: &Matrix) -> Result<LabelVector, KMeansError> {
    if features.cols() != centroids.cols() {
        return Err(KMeansError::DimensionMismatch {
            features: features.cols(),
            centroids: centroids.cols(),
        });
    }
    Ok(features
        .iter_rows()
        .map(|p| nearest(p, centroids).0)
        .collect())
}

/// Mean squared distance from each sample to its assigned centroid.
pub fn objective(features: &FeatureMatrix, model: &ClusterModel) -> f64 {
    partition_cost(features, &model.centroids, &model.assignments)
}

fn partition_cost(features: &FeatureMatrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    let total: f64 = features
        .iter_rows()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p, centroids.row(l)))
        .sum();
    total / features.rows() as f64
}

/// k-means++: first center uniform, each next one drawn with probability
/// proportional to the squared distance to the closest chosen center.
fn plus_plus_init(features: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = features.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut closest: Vec<f64> = features
        .iter_rows()
        .map(|p| squared_distance(p, features.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in closest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final partial sum
            pick.unwrap_or_else(|| closest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // every point coincides with a chosen center; fall back to unused indices
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (c, p) in closest.iter_mut().zip(features.iter_rows()) {
            *c = c.min(squared_distance(p, features.row(next)));
        }
    }
    features.select_rows(&chosen)
}

fn update_centroids(features: &FeatureMatrix, labels: &[usize], centroids: &mut Matrix) {
    let k = centroids.rows();
    let d = features.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (p, &l) in features.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(p) {
            *s += v;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            let c = counts[j] as f64;
            for (dst, s) in centroids
                .row_mut(j)
                .iter_mut()
                .zip(&sums[j * d..(j + 1) * d])
            {
                *dst = s / c;
            }
        }
    }
}

/// Assigns, then moves any empty cluster's centroid onto the sample that is
/// farthest from its nearest centroid, and reassigns until no cluster is
/// empty (or no further repair is possible).
fn assign_with_repair(features: &FeatureMatrix, centroids: &mut Matrix) -> Vec<usize> {
    let k = centroids.rows();
    let mut used = vec![false; features.rows()];
    loop {
        let nearest_all: Vec<(usize, f64)> = features
            .iter_rows()
            .map(|p| nearest(p, centroids))
            .collect();
        let mut counts = vec![0usize; k];
        for &(l, _) in &nearest_all {
            counts[l] += 1;
        }
        let labels: Vec<usize> = nearest_all.iter().map(|&(l, _)| l).collect();
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return labels;
        };
        // farthest point, ignoring points already used for a repair and
        // points that are the sole member of their cluster
        let candidate = nearest_all
            .iter()
            .enumerate()
            .filter(|&(i, &(l, _))| !used[i] && counts[l] > 1)
            .fold(
                None,
                |best: Option<(usize, f64)>, (i, &(_, d))| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                },
            );
        match candidate {
            Some((i, d)) if d > 0.0 => {
                used[i] = true;
                centroids.row_mut(empty).copy_from_slice(features.row(i));
            }
            // only duplicates remain; an empty cluster cannot be avoided
            _ => return labels,
        }
    }
}

/// Runs Lloyd's algorithm from a k-means++ start.
///
/// Stops when the fraction of samples that changed cluster falls below `tol`
/// or after `max_iter` centroid updates.
pub fn kmeans(
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel, KMeansError> {
    let n = features.rows();
    if k < 2 || k > n {
        return Err(KMeansError::KOutOfRange { k, n });
    }
    if !features.is_finite() {
        return Err(KMeansError::NonFinite);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(features, k, &mut rng);
    let mut labels = assign_with_repair(features, &mut centroids);
    let mut trace = vec![partition_cost(features, &centroids, &labels)];
    let mut n_iter = 0;
    while n_iter < max_iter {
        update_centroids(features, &labels, &mut centroids);
        let next = assign_with_repair(features, &mut centroids);
        n_iter += 1;
        let changed = labels.iter().zip(&next).filter(|(a, b)| a != b).count();
        labels = next;
        trace.push(partition_cost(features, &centroids, &labels));
        if (changed as f64) / (n as f64) < tol {
            break;
        }
    }
    Ok(ClusterModel {
        centroids,
        assignments: LabelVector::new(labels),
        objective: *trace.last().unwrap(),
        n_iter,
        objective_trace: trace,
    })
}

/// Best of `restarts` independent runs by objective; earlier restarts win ties.
pub fn kmeans_restarts(
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel, KMeansError> {
    if restarts == 0 {
        return Err(KMeansError::NoRestarts);
    }
    let mut best: Option<ClusterModel> = None;
    for r in 0..restarts {
        let run = kmeans(
            features,
            k,
            derive_seed(seed, 1000 + r as u64),
            max_iter,
            tol,
        )?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}
