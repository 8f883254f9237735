//! End-to-end training: pre-train, pick K, then alternate k-means
//! pseudo-labeling with self-supervised training.
//!
//! Every round:
//!
//! 1. encode all samples with the current model
//! 2. k-means with K clusters (same seed every round)
//! 3. align: round 1 stores the centroids as-is; later rounds match the new
//!    centroids to the stored ones and remap the pseudo-labels into the
//!    stored slot order, then store the reordered centroids
//! 4. score the clustering with the silhouette coefficient; the model that
//!    produced the best score is kept, and `patience` rounds without a new
//!    best end the loop
//! 5. one pass of mini-batch descent on the (aligned) pseudo-labels
//!
//! The reinitialization arm skips step 3 and draws a fresh classifier before
//! every pass instead. Both arms share the pre-training stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alignment::{align_centroids, remap_labels, reorder_centroids, AlignError};
use crate::data::{DataError, Matrix, SplitDataset};
use crate::derive_seed;
use crate::encoder::{pretrain, EncoderError, EncoderModel, Pretrained, TrainConfig};
use crate::estimation::{estimate_k, EstimateError, KEstimate};
use crate::kmeans::{kmeans_restarts, ClusterModel, KMeansError, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::metrics::{evaluate, silhouette, MetricsError, Scores};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("training diverged in round {round} (loss {loss}); lower the learning rate")]
    Diverged { round: usize, loss: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// How pseudo-label ids are carried from one round to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Hungarian centroid alignment; the classifier persists.
    #[default]
    Align,
    /// Raw k-means ids and a freshly drawn classifier every round.
    Reinitialize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Cluster count; estimated from `k_prime` when absent.
    pub k: Option<usize>,
    /// Over-provisioned count for estimation, conventionally twice a reference count.
    pub k_prime: Option<usize>,
    pub max_rounds: usize,
    pub patience: usize,
    pub train: TrainConfig,
    pub seed: u64,
    pub strategy: Strategy,
    /// Estimate K on the input features instead of pre-trained encodings.
    pub estimate_on_raw: bool,
    /// k-means restarts per round (best objective kept); the seed is the same every round.
    pub kmeans_restarts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: None,
            k_prime: None,
            max_rounds: 100,
            patience: 10,
            train: TrainConfig::default(),
            seed: 0,
            strategy: Strategy::Align,
            estimate_on_raw: false,
            kmeans_restarts: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.kmeans_restarts == 0 {
            return Err(PipelineError::Config("kmeans_restarts must be >= 1".into()));
        }
        if self.max_rounds == 0 {
            return Err(PipelineError::Config("max_rounds must be >= 1".into()));
        }
        if self.patience == 0 || self.patience > self.max_rounds {
            return Err(PipelineError::Config(format!(
                "patience must lie in 1..={}, got {}",
                self.max_rounds, self.patience
            )));
        }
        match (self.k, self.k_prime) {
            (Some(k), _) if k < 2 => Err(PipelineError::Config(format!("k must be >= 2, got {k}"))),
            (None, None) => Err(PipelineError::Config(
                "either k or k_prime must be set".into(),
            )),
            (None, Some(kp)) if kp < 2 => Err(PipelineError::Config(format!(
                "k_prime must be >= 2, got {kp}"
            ))),
            _ => Ok(()),
        }?;
        self.train.validate()?;
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

/// Diagnostics for one self-training round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub silhouette: f64,
    pub kmeans_objective: f64,
    /// Fraction of pseudo-labels that differ from the previous round (0 in round 1).
    pub label_change_fraction: f64,
    /// Total squared distance of the centroid matching (0 when not aligned).
    pub alignment_cost: f64,
    /// Mean training loss of the round's pass; `None` when the loop stopped first.
    pub train_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub rounds: Vec<RoundRecord>,
    /// 1-based round whose model had the best silhouette.
    pub best_round: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best_silhouette(&self) -> f64 {
        self.rounds
            .iter()
            .map(|r| r.silhouette)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Encoder (with its classifier) from the best-silhouette round.
    pub model: EncoderModel,
    /// k-means on the best model's features.
    pub clusters: ClusterModel,
    pub history: TrainHistory,
    pub k: usize,
    pub k_estimate: Option<KEstimate>,
    pub pretrain_accuracy: f64,
    pub pretrain_epochs: usize,
}

impl RunOutput {
    /// NMI/ARI/ACC of the final clustering against the full ground truth.
    pub fn scores(&self, data: &SplitDataset) -> Result<Scores, MetricsError> {
        evaluate(&data.truth, &self.clusters.assignments)
    }
}

/// Supervised pre-training stage shared by both arms.
pub fn pretrain_stage(data: &SplitDataset, cfg: &RunConfig) -> Result<Pretrained, PipelineError> {
    cfg.validate()?;
    Ok(pretrain(data, &cfg.train_config())?)
}

/// Full method with centroid alignment.
pub fn run(data: &SplitDataset, cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let pre = pretrain_stage(data, cfg)?;
    run_from_pretrained(data, &pre, cfg)
}

/// Reinitialization ablation: same stages, no alignment, classifier redrawn every round.
pub fn reinit_ablation_run(
    data: &SplitDataset,
    cfg: &RunConfig,
) -> Result<RunOutput, PipelineError> {
    let cfg = RunConfig {
        strategy: Strategy::Reinitialize,
        ..cfg.clone()
    };
    let pre = pretrain_stage(data, &cfg)?;
    run_from_pretrained(data, &pre, &cfg)
}

fn diverged(round: usize) -> impl Fn(EncoderError) -> PipelineError {
    move |e| match e {
        EncoderError::NonFiniteGradient { loss } => PipelineError::Diverged { round, loss },
        other => other.into(),
    }
}

/// Runs everything after pre-training, following `cfg.strategy`.
pub fn run_from_pretrained(
    data: &SplitDataset,
    pretrained: &Pretrained,
    cfg: &RunConfig,
) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let train = cfg.train_config();
    let z = &data.features;
    let n = z.rows();

    let (k, k_estimate) = match cfg.k {
        Some(k) => (k, None),
        None => {
            let k_prime = cfg.k_prime.expect("validated");
            let source = if cfg.estimate_on_raw {
                z.clone()
            } else {
                pretrained.model.encode(z)?
            };
            let est = estimate_k(&source, k_prime, derive_seed(cfg.seed, 30))?;
            (est.k, Some(est))
        }
    };
    if k < 2 || k > n {
        return Err(PipelineError::Config(format!(
            "cluster count {k} out of range for {n} samples"
        )));
    }

    let kmeans_seed = derive_seed(cfg.seed, 20);
    let cluster = |features: &Matrix| {
        kmeans_restarts(
            features,
            k,
            kmeans_seed,
            cfg.kmeans_restarts,
            DEFAULT_MAX_ITER,
            DEFAULT_TOL,
        )
    };
    let classifier_seed = derive_seed(cfg.seed, 21);
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 22));

    let mut model = pretrained.model.clone();
    model.reset_classifier(k, classifier_seed);

    let mut stored: Option<Matrix> = None;
    let mut previous_labels: Option<Vec<usize>> = None;
    let mut best: Option<(EncoderModel, f64)> = None;
    let mut history = TrainHistory::default();
    let mut stale = 0;

    for round in 1..=cfg.max_rounds {
        let features = model.encode(z)?;
        let clustering = cluster(&features)?;

        let (labels, alignment_cost) = match (&stored, cfg.strategy) {
            (Some(last), Strategy::Align) => {
                let mapping = align_centroids(last, &clustering.centroids)?;
                let aligned = remap_labels(&clustering.assignments, &mapping)?;
                let reordered = reorder_centroids(&clustering.centroids, &mapping);
                debug_assert!(
                    (0..k).all(|i| reordered.row(i) == clustering.centroids.row(mapping.g[i]))
                );
                stored = Some(reordered);
                (aligned, mapping.total_cost)
            }
            _ => {
                stored = Some(clustering.centroids.clone());
                (clustering.assignments.to_vec(), 0.0)
            }
        };

        let label_change_fraction = previous_labels.as_ref().map_or(0.0, |prev| {
            prev.iter().zip(&labels).filter(|(a, b)| a != b).count() as f64 / n as f64
        });
        let sc = silhouette(&features, &labels)?;
        if best.as_ref().is_none_or(|(_, b)| sc > *b) {
            best = Some((model.clone(), sc));
            history.best_round = round;
            stale = 0;
        } else {
            stale += 1;
        }

        let mut record = RoundRecord {
            round,
            silhouette: sc,
            kmeans_objective: clustering.objective,
            label_change_fraction,
            alignment_cost,
            train_loss: None,
        };
        if stale >= cfg.patience {
            history.rounds.push(record);
            history.stopped_early = true;
            break;
        }

        if cfg.strategy == Strategy::Reinitialize && round > 1 {
            model.reset_classifier(k, derive_seed(classifier_seed, round as u64));
        }
        let mut loss = 0.0;
        for _ in 0..train.epochs_per_round.max(1) {
            loss = model
                .train_epoch(
                    z,
                    &labels,
                    train.batch_size,
                    train.learning_rate,
                    &mut shuffle,
                )
                .map_err(diverged(round))?;
        }
        record.train_loss = Some(loss);
        history.rounds.push(record);
        previous_labels = Some(labels);
    }

    let (best_model, best_sc) = best.expect("at least one round runs");
    debug_assert_eq!(best_sc, history.best_silhouette());
    let final_features = best_model.encode(z)?;
    let clusters = cluster(&final_features)?;
    Ok(RunOutput {
        model: best_model,
        clusters,
        history,
        k,
        k_estimate,
        pretrain_accuracy: pretrained.train_accuracy,
        pretrain_epochs: pretrained.epochs,
    })
}
