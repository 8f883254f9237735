//! Deep aligned clustering for discovering new categories from a pool of
//! feature vectors where only a few samples of some classes carry labels.
//!
//! The pipeline pre-trains a small dense encoder on the labeled subset,
//! optionally estimates the number of clusters, then alternates k-means
//! pseudo-labeling with self-supervised training. Between rounds the new
//! centroids are matched to the previous round's centroids with the
//! Hungarian algorithm so the pseudo-label ids (and therefore the
//! classifier's output units) keep their meaning.
//!
//! Module map:
//!
//! - [`data`]: feature matrices, label files, semi-supervised splits, synthetic data
//! - [`encoder`]: tanh dense head, linear classifier, softmax loss and gradients
//! - [`kmeans`]: Lloyd's algorithm with k-means++ seeding
//! - [`alignment`]: Hungarian solver and centroid alignment
//! - [`estimation`]: cluster-count estimation from an over-provisioned k-means
//! - [`pipeline`]: the full training loop and the reinitialization ablation
//! - [`metrics`]: NMI, ARI, ACC, silhouette, K-prediction error
//! - [`cli`]: command-line front end

pub mod alignment;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod estimation;
pub mod kmeans;
pub mod metrics;
pub mod pipeline;

pub use data::{FeatureMatrix, LabelVector, SplitDataset};

/// Derives an independent sub-seed for `stream` from a run seed.
///
/// SplitMix64 finalizer over the pair; used wherever one run seed has to feed
/// several random streams (restarts, classifier re-draws, per-round shuffles).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
