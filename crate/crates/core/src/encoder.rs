//! Trainable representation head and its pseudo-classifier.
//!
//! The encoder maps a frozen input feature `z` to `I = tanh(z·W_h + b_h)`.
//! A linear classifier `logits = I·W_c + b_c` sits on top during training and
//! is discarded after pre-training. Gradients are derived by hand: the softmax
//! cross-entropy gradient w.r.t. logits is `(p - onehot) / B`, and the tanh
//! derivative is `1 - I²`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{FeatureMatrix, Matrix, SplitDataset};
use crate::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("expected input dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("model has no classifier attached")]
    NoClassifier,
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient or loss (loss = {loss}); reduce the learning rate")]
    NonFiniteGradient { loss: f64 },
    #[error("no labeled samples to pre-train on")]
    NoLabeledSamples,
    #[error("known class {0} has no labeled sample")]
    MissingKnownClass(usize),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Optimizer and schedule settings shared by pre-training and self-training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Passes over the data per self-training round.
    pub epochs_per_round: usize,
    /// Output dimension of the dense head.
    pub hidden_dim: usize,
    /// Upper bound on pre-training epochs; early stopping usually ends sooner.
    pub max_pretrain_epochs: usize,
    /// Epochs without labeled-loss improvement before pre-training stops.
    pub pretrain_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 5e-3,
            epochs_per_round: 1,
            hidden_dim: 32,
            max_pretrain_epochs: 1000,
            pretrain_patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.batch_size == 0 {
            return Err(EncoderError::InvalidConfig(
                "batch_size must be >= 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(EncoderError::InvalidConfig(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.hidden_dim == 0 {
            return Err(EncoderError::InvalidConfig(
                "hidden_dim must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Linear pseudo-classifier `I·W_c + b_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    /// `D × K`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Classifier {
    pub fn random(dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: xavier(dim, classes, &mut rng),
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }
}

/// Dense tanh head plus an optional classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    /// `D_in × D`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    /// `None` once discarded after pre-training.
    pub classifier: Option<Classifier>,
}

fn xavier(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let values = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Matrix::from_raw(fan_in, fan_out, values)
}

/// `a · b` for row-major `a (n×m)` and `b (m×p)`.
fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols(), b.rows());
    let p = b.cols();
    let mut out = vec![0.0; a.rows() * p];
    for (row, out_row) in a.iter_rows().zip(out.chunks_exact_mut(p)) {
        for (&x, b_row) in row.iter().zip(b.iter_rows()) {
            for (o, &w) in out_row.iter_mut().zip(b_row) {
                *o += x * w;
            }
        }
    }
    Matrix::from_raw(a.rows(), p, out)
}

/// Accumulates `aᵀ · b` into `acc` for `a (n×m)`, `b (n×p)`, `acc (m×p)`.
fn add_transpose_product(acc: &mut Matrix, a: &Matrix, b: &Matrix) {
    let p = b.cols();
    for (a_row, b_row) in a.iter_rows().zip(b.iter_rows()) {
        for (i, &x) in a_row.iter().enumerate() {
            for (o, &y) in acc.row_mut(i)[..p].iter_mut().zip(b_row) {
                *o += x * y;
            }
        }
    }
}

fn add_bias(m: &mut Matrix, bias: &[f64]) {
    let cols = m.cols();
    for row in m.as_mut_slice().chunks_exact_mut(cols) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Parameter gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub classifier_weights: Matrix,
    pub classifier_bias: Vec<f64>,
}

impl Gradients {
    fn is_finite(&self) -> bool {
        self.weights.is_finite()
            && self.classifier_weights.is_finite()
            && self
                .bias
                .iter()
                .chain(&self.classifier_bias)
                .all(|v| v.is_finite())
    }
}

impl EncoderModel {
    /// Xavier-initialized dense head with zero bias and no classifier.
    pub fn new(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: xavier(input_dim, hidden_dim, &mut rng),
            bias: vec![0.0; hidden_dim],
            classifier: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Replaces the classifier with a freshly drawn one of `classes` outputs.
    pub fn reset_classifier(&mut self, classes: usize, seed: u64) {
        self.classifier = Some(Classifier::random(self.hidden_dim(), classes, seed));
    }

    pub fn discard_classifier(&mut self) {
        self.classifier = None;
    }

    /// `tanh(z·W_h + b_h)` for every row of `z`.
    pub fn encode(&self, z: &FeatureMatrix) -> Result<FeatureMatrix, EncoderError> {
        if z.cols() != self.input_dim() {
            return Err(EncoderError::DimensionMismatch {
                expected: self.input_dim(),
                found: z.cols(),
            });
        }
        let mut out = matmul(z, &self.weights);
        add_bias(&mut out, &self.bias);
        out.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
        Ok(out)
    }

    /// Classifier outputs `I·W_c + b_c` for encoded features `I`.
    pub fn logits(&self, encoded: &FeatureMatrix) -> Result<Matrix, EncoderError> {
        let head = self.classifier.as_ref().ok_or(EncoderError::NoClassifier)?;
        if encoded.cols() != head.weights.rows() {
            return Err(EncoderError::DimensionMismatch {
                expected: head.weights.rows(),
                found: encoded.cols(),
            });
        }
        let mut out = matmul(encoded, &head.weights);
        add_bias(&mut out, &head.bias);
        Ok(out)
    }

    /// Mean softmax cross-entropy of the batch and the gradient of every parameter.
    pub fn gradients(
        &self,
        z: &FeatureMatrix,
        labels: &[usize],
    ) -> Result<(f64, Gradients), EncoderError> {
        if z.rows() == 0 {
            return Err(EncoderError::EmptyBatch);
        }
        let head = self.classifier.as_ref().ok_or(EncoderError::NoClassifier)?;
        let encoded = self.encode(z)?;
        let logits = self.logits(&encoded)?;
        let loss = cross_entropy(&logits, labels)?;

        let n = z.rows() as f64;
        let k = head.classes();
        // d loss / d logits = (softmax - onehot) / n
        let mut d_logits = softmax(&logits);
        for (row, &y) in d_logits.as_mut_slice().chunks_exact_mut(k).zip(labels) {
            row[y] -= 1.0;
            row.iter_mut().for_each(|v| *v /= n);
        }

        let mut g_cw = Matrix::zeros(head.weights.rows(), k);
        add_transpose_product(&mut g_cw, &encoded, &d_logits);
        let g_cb = column_sums(&d_logits);

        // d loss / d pre-activation = (d_logits · W_cᵀ) ⊙ (1 - I²)
        let d = self.hidden_dim();
        let mut d_pre = vec![0.0; z.rows() * d];
        for ((dl, enc), out) in d_logits
            .iter_rows()
            .zip(encoded.iter_rows())
            .zip(d_pre.chunks_exact_mut(d))
        {
            for (j, o) in out.iter_mut().enumerate() {
                let back: f64 = head.weights.row(j).iter().zip(dl).map(|(w, g)| w * g).sum();
                *o = back * (1.0 - enc[j] * enc[j]);
            }
        }
        let d_pre = Matrix::from_raw(z.rows(), d, d_pre);
        let mut g_w = Matrix::zeros(self.input_dim(), d);
        add_transpose_product(&mut g_w, z, &d_pre);
        let g_b = column_sums(&d_pre);

        Ok((
            loss,
            Gradients {
                weights: g_w,
                bias: g_b,
                classifier_weights: g_cw,
                classifier_bias: g_cb,
            },
        ))
    }

    /// One plain gradient-descent update on a batch. Returns the batch loss
    /// measured before the update.
    pub fn grad_step(
        &mut self,
        z: &FeatureMatrix,
        labels: &[usize],
        learning_rate: f64,
    ) -> Result<f64, EncoderError> {
        let (loss, grads) = self.gradients(z, labels)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(EncoderError::NonFiniteGradient { loss });
        }
        if learning_rate == 0.0 {
            return Ok(loss);
        }
        let descend = |params: &mut [f64], grad: &[f64]| {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= learning_rate * g;
            }
        };
        descend(self.weights.as_mut_slice(), grads.weights.as_slice());
        descend(&mut self.bias, &grads.bias);
        let head = self.classifier.as_mut().expect("checked by gradients");
        descend(
            head.weights.as_mut_slice(),
            grads.classifier_weights.as_slice(),
        );
        descend(&mut head.bias, &grads.classifier_bias);
        Ok(loss)
    }

    /// One shuffled pass of mini-batch descent over `z`; the last partial
    /// batch is kept. Returns the sample-weighted mean batch loss.
    pub fn train_epoch(
        &mut self,
        z: &FeatureMatrix,
        labels: &[usize],
        batch_size: usize,
        learning_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, EncoderError> {
        if z.rows() != labels.len() {
            return Err(EncoderError::LengthMismatch {
                rows: z.rows(),
                labels: labels.len(),
            });
        }
        let mut order: Vec<usize> = (0..z.rows()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size.max(1)) {
            let zb = z.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            total += self.grad_step(&zb, &yb, learning_rate)? * batch.len() as f64;
        }
        Ok(total / z.rows() as f64)
    }

    /// Argmax of the classifier output for every row of `z`.
    pub fn predict(&self, z: &FeatureMatrix) -> Result<Vec<usize>, EncoderError> {
        let logits = self.logits(&self.encode(z)?)?;
        Ok(logits
            .iter_rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                        if v > best.1 {
                            (j, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }

    /// Writes the `DACM` checkpoint: magic, `u32` version, `u64` D_in, D, K,
    /// then W_h, b_h, W_c, b_c as little-endian `f64`. K = 0 means no classifier.
    pub fn to_bytes(&self) -> Vec<u8> {
        let k = self.classifier.as_ref().map_or(0, Classifier::classes);
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for dim in [self.input_dim(), self.hidden_dim(), k] {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        let mut blocks: Vec<&[f64]> = vec![self.weights.as_slice(), &self.bias];
        if let Some(head) = &self.classifier {
            blocks.push(head.weights.as_slice());
            blocks.push(&head.bias);
        }
        for v in blocks.into_iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncoderError> {
        let bad = |msg: &str| EncoderError::Checkpoint(msg.to_string());
        if bytes.len() < 32 {
            return Err(bad("truncated header"));
        }
        if &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(EncoderError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let dim = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
        let (d_in, d, k) = (dim(8), dim(16), dim(24));
        if d_in == 0 || d == 0 {
            return Err(bad("zero dimension"));
        }
        let expected = d_in * d + d + d * k + k;
        let payload = &bytes[32..];
        if payload.len() != expected * 8 {
            return Err(EncoderError::Checkpoint(format!(
                "payload is {} bytes, expected {}",
                payload.len(),
                expected * 8
            )));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
        let weights = Matrix::new(d_in, d, take(d_in * d)).map_err(|e| bad(&e.to_string()))?;
        let bias = take(d);
        let classifier = if k > 0 {
            let w = Matrix::new(d, k, take(d * k)).map_err(|e| bad(&e.to_string()))?;
            Some(Classifier {
                weights: w,
                bias: take(k),
            })
        } else {
            None
        };
        let all_bias_finite = bias
            .iter()
            .chain(classifier.iter().flat_map(|c| &c.bias))
            .all(|v| v.is_finite());
        if !all_bias_finite {
            return Err(bad("non-finite bias"));
        }
        Ok(Self {
            weights,
            bias,
            classifier,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncoderError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncoderError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"DACM";
const CHECKPOINT_VERSION: u32 = 1;

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    sums
}

/// Row-wise softmax, max-shifted.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    let k = out.cols();
    for row in out.as_mut_slice().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean negative log-softmax at the target index, computed with log-sum-exp.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64, EncoderError> {
    if logits.rows() != labels.len() {
        return Err(EncoderError::LengthMismatch {
            rows: logits.rows(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(EncoderError::EmptyBatch);
    }
    let k = logits.cols();
    let mut total = 0.0;
    for (row, &y) in logits.iter_rows().zip(labels) {
        if y >= k {
            return Err(EncoderError::LabelOutOfRange {
                label: y,
                classes: k,
            });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / labels.len() as f64)
}

/// Result of supervised pre-training on the labeled subset.
#[derive(Debug, Clone)]
pub struct Pretrained {
    /// Encoder with its classifier discarded.
    pub model: EncoderModel,
    /// Labeled-set accuracy in percent, measured before the classifier was dropped.
    pub train_accuracy: f64,
    pub epochs: usize,
    pub best_loss: f64,
}

/// Trains the encoder plus a temporary classifier over the known classes on
/// the labeled samples only, keeping the epoch with the lowest labeled-set
/// loss, then drops the classifier.
pub fn pretrain(data: &SplitDataset, cfg: &TrainConfig) -> Result<Pretrained, EncoderError> {
    cfg.validate()?;
    let labeled = data.labeled_indices();
    if labeled.is_empty() {
        return Err(EncoderError::NoLabeledSamples);
    }
    let targets: Vec<usize> = labeled
        .iter()
        .map(|&i| {
            data.known_index(data.truth[i])
                .ok_or(EncoderError::LabelOutOfRange {
                    label: data.truth[i],
                    classes: data.known_classes.len(),
                })
        })
        .collect::<Result<_, _>>()?;
    let mut seen = vec![false; data.known_classes.len()];
    targets.iter().for_each(|&t| seen[t] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(EncoderError::MissingKnownClass(data.known_classes[missing]));
    }

    let z = data.features.select_rows(&labeled);
    let mut model = EncoderModel::new(z.cols(), cfg.hidden_dim, derive_seed(cfg.seed, 10));
    model.reset_classifier(data.known_classes.len(), derive_seed(cfg.seed, 11));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 12));

    let labeled_loss = |m: &EncoderModel| -> Result<f64, EncoderError> {
        cross_entropy(&m.logits(&m.encode(&z)?)?, &targets)
    };
    let mut best = model.clone();
    let mut best_loss = labeled_loss(&model)?;
    let mut stale = 0;
    let mut epochs = 0;
    while epochs < cfg.max_pretrain_epochs && stale < cfg.pretrain_patience {
        model.train_epoch(&z, &targets, cfg.batch_size, cfg.learning_rate, &mut rng)?;
        epochs += 1;
        let loss = labeled_loss(&model)?;
        if !loss.is_finite() {
            return Err(EncoderError::NonFiniteGradient { loss });
        }
        if loss < best_loss - PRETRAIN_MIN_IMPROVEMENT {
            best_loss = loss;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
        }
    }

    let predictions = best.predict(&z)?;
    let correct = predictions
        .iter()
        .zip(&targets)
        .filter(|(p, t)| p == t)
        .count();
    let train_accuracy = 100.0 * correct as f64 / targets.len() as f64;
    best.discard_classifier();
    Ok(Pretrained {
        model: best,
        train_accuracy,
        epochs,
        best_loss,
    })
}

/// Smallest labeled-loss decrease that resets the early-stopping counter.
const PRETRAIN_MIN_IMPROVEMENT: f64 = 1e-6;
