//! Gaussian-mixture data for desk-scale experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, FeatureMatrix, LabelVector};

/// `k` isotropic unit-variance Gaussian clusters of `n_per_cluster` points each.
///
/// Cluster centers are uniform on the sphere of radius `separation`. Rows are
/// grouped by cluster, cluster 0 first, so the label vector is
/// `[0; n], [1; n], ...`.
pub fn gen_synthetic(
    k: usize,
    n_per_cluster: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<(FeatureMatrix, LabelVector), DataError> {
    if k < 2 || n_per_cluster < 1 || dim < 2 {
        return Err(DataError::InvalidArgument(format!(
            "need k >= 2, n_per_cluster >= 1, dim >= 2 (got {k}, {n_per_cluster}, {dim})"
        )));
    }
    if !(separation.is_finite() && separation > 0.0) {
        return Err(DataError::InvalidArgument(format!(
            "separation must be positive, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(k);
    for _ in 0..k {
        let mut c: Vec<f64> = loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if v.iter().any(|x: &f64| *x != 0.0) {
                break v;
            }
        };
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.iter_mut().for_each(|x| *x *= separation / norm);
        centers.push(c);
    }
    let mut values = Vec::with_capacity(k * n_per_cluster * dim);
    let mut labels = Vec::with_capacity(k * n_per_cluster);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..n_per_cluster {
            values.extend(center.iter().map(|&c| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                c + noise
            }));
            labels.push(label);
        }
    }
    Ok((
        FeatureMatrix::new(k * n_per_cluster, dim, values)?,
        LabelVector::new(labels),
    ))
}
