//! Cluster-count estimation by dropping small clusters.
//!
//! Cluster with an over-provisioned `K′`, then keep only clusters whose size
//! reaches the mean cluster size `N / K′`. Real groups stay dense even when
//! split, while spurious clusters end up small.

use crate::data::FeatureMatrix;
use crate::kmeans::{kmeans_restarts, KMeansError, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Restarts used for the over-provisioned k-means; the lowest objective wins.
pub const ESTIMATE_RESTARTS: usize = 10;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EstimateError {
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error("every cluster fell below the size threshold {threshold}")]
    Degenerate { threshold: f64 },
}

/// Estimated count together with the evidence behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct KEstimate {
    pub k: usize,
    pub k_prime: usize,
    /// `N / K′`, kept real-valued.
    pub threshold: f64,
    pub cluster_sizes: Vec<usize>,
}

/// Number of clusters whose size is at least `n_samples / k_prime`.
pub fn count_confident(cluster_sizes: &[usize], n_samples: usize, k_prime: usize) -> usize {
    let threshold = n_samples as f64 / k_prime as f64;
    cluster_sizes
        .iter()
        .filter(|&&s| s as f64 >= threshold)
        .count()
}

pub fn estimate_k(
    features: &FeatureMatrix,
    k_prime: usize,
    seed: u64,
) -> Result<KEstimate, EstimateError> {
    let model = kmeans_restarts(
        features,
        k_prime,
        seed,
        ESTIMATE_RESTARTS,
        DEFAULT_MAX_ITER,
        DEFAULT_TOL,
    )?;
    let sizes = model.cluster_sizes();
    let n = features.rows();
    let k = count_confident(&sizes, n, k_prime);
    let threshold = n as f64 / k_prime as f64;
    // sizes sum to N, so the largest one always reaches the mean
    debug_assert!(k >= 1);
    if k == 0 {
        return Err(EstimateError::Degenerate { threshold });
    }
    Ok(KEstimate {
        k,
        k_prime,
        threshold,
        cluster_sizes: sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_sizes_keep_every_cluster() {
        assert_eq!(count_confident(&[25, 25, 25, 25], 100, 4), 4);
        assert_eq!(count_confident(&[30, 20, 26, 24], 100, 4), 2);
        // threshold is real-valued: 12.5 rejects 12 and accepts 13
        assert_eq!(count_confident(&[12, 13, 75], 100, 8), 2);
    }

    #[test]
    fn two_separated_groups() {
        // fully collapsed groups: no split can produce a second non-empty cluster
        let mut rows = vec![vec![0.0, 0.0]; 50];
        rows.extend(vec![vec![100.0, 3.0]; 50]);
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let est = estimate_k(&x, 8, 3).unwrap();
        assert_eq!(est.threshold, 12.5);
        assert_eq!(est.cluster_sizes.iter().sum::<usize>(), 100);
        assert_eq!(est.k, 2, "sizes {:?}", est.cluster_sizes);
    }

    #[test]
    fn k_prime_out_of_range() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(
            estimate_k(&x, 3, 0),
            Err(EstimateError::KMeans(KMeansError::KOutOfRange { .. }))
        ));
    }
}
