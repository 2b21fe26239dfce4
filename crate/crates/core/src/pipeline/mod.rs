//! Training, evaluation and reporting.
//!
//! [`train`] runs seeded mini-batch epochs with validation-loss early
//! stopping and returns the parameters of the best epoch. Per-example
//! gradients inside a batch are computed in parallel and summed in input
//! order, so a run is bit-identical for any worker count.

mod eval;
mod optim;
mod report;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Label;
use crate::models::{Example, Model, ModelConfig, ModelError, ModelInput};
use crate::nncore::{Grads, NnError};

pub use eval::{evaluate, f1_score, ClassMetrics, EvalReport};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState, OptimizerKind};
pub use report::{parse_report_json, render_report, RenderedReport};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("loss diverged to {loss} in epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("bad report document: {0}")]
    BadReport(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn d_batch() -> usize {
    32
}
fn d_epochs() -> usize {
    50
}
fn d_lr() -> f64 {
    1e-3
}
fn d_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}
fn d_beta1() -> f64 {
    AdamConfig::default().beta1
}
fn d_beta2() -> f64 {
    AdamConfig::default().beta2
}
fn d_epsilon() -> f64 {
    AdamConfig::default().epsilon
}
fn d_patience() -> usize {
    5
}
fn d_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_patience")]
    pub early_stop_patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_true")]
    pub shuffle: bool,
    /// Weight the loss of each class by `N / (3 · n_class)` over the training set.
    #[serde(default)]
    pub class_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: d_batch(),
            max_epochs: d_epochs(),
            learning_rate: d_lr(),
            optimizer: d_optimizer(),
            beta1: d_beta1(),
            beta2: d_beta2(),
            epsilon: d_epsilon(),
            early_stop_patience: d_patience(),
            seed: 0,
            shuffle: true,
            class_weights: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::BadConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Zero-based index of the epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }

    /// Tab-separated per-epoch table.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tval_loss\tval_accuracy\n");
        for i in 0..self.epochs() {
            s.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.4}\n",
                i + 1,
                self.train_loss[i],
                self.val_loss[i],
                self.val_accuracy[i]
            ));
        }
        s
    }
}

/// Inverse-frequency class weights `N / (3 · n_c)`; absent classes get 1.
pub fn inverse_frequency_weights(examples: &[Example]) -> [f32; Label::COUNT] {
    let mut counts = [0usize; Label::COUNT];
    for e in examples {
        counts[e.label.index()] += 1;
    }
    let n = examples.len() as f64;
    counts.map(|c| if c == 0 { 1.0 } else { (n / (Label::COUNT as f64 * c as f64)) as f32 })
}

/// Mean loss and accuracy of `model` over `examples` (unweighted).
pub fn loss_and_accuracy(model: &Model, examples: &[Example]) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(PipelineError::EmptyDataset("validation set"));
    }
    let per = crate::par::try_map(examples, |e| {
        let (p, _) = model.probabilities(&e.input)?;
        let loss = -(p[e.label.index()].max(f32::MIN_POSITIVE) as f64).ln();
        Ok::<_, ModelError>((loss, crate::models::argmax(&p) == e.label.index()))
    })?;
    let loss = per.iter().map(|(l, _)| l).sum::<f64>() / per.len() as f64;
    let acc = per.iter().filter(|(_, ok)| *ok).count() as f64 / per.len() as f64;
    Ok((loss, acc))
}

/// Summed loss and summed gradients of a batch, accumulated in input order.
pub fn batch_gradient(model: &Model, batch: &[&Example], weights: Option<&[f32]>) -> Result<(f64, Grads)> {
    let per = crate::par::try_map(batch, |e| model.loss_and_grads(&e.input, e.label, weights))?;
    let mut grads = Grads::new(model.params().len());
    let mut loss = 0.0;
    for (l, g) in &per {
        loss += *l as f64;
        grads.merge(g);
    }
    Ok((loss, grads))
}

/// Per-epoch progress passed to the observer of [`train_with`].
#[derive(Clone, Debug)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub improved: bool,
}

pub fn train(model: Model, train_set: &[Example], val_set: &[Example], cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    train_with(model, train_set, val_set, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    mut model: Model,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochSummary),
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(PipelineError::EmptyDataset("training set"));
    }
    if val_set.is_empty() {
        return Err(PipelineError::EmptyDataset("validation set"));
    }
    let weights = cfg.class_weights.then(|| inverse_frequency_weights(train_set));
    let adam = cfg.adam();
    let mut state = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best = model.params().clone();
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        if cfg.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|i| &train_set[*i]).collect();
            let (loss, mut grads) = diverged(batch_gradient(&model, &batch, weights.as_ref().map(|w| &w[..])), epoch, b)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(PipelineError::DivergedLoss { epoch, batch: b, loss });
            }
            epoch_loss += loss;
            grads.scale(1.0 / batch.len() as f32);
            match cfg.optimizer {
                OptimizerKind::Adam => adam_step(model.params_mut(), &grads, &mut state, &adam, cfg.learning_rate)?,
                OptimizerKind::Sgd => sgd_step(model.params_mut(), &grads, cfg.learning_rate)?,
            }
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let (val_loss, val_accuracy) = diverged(loss_and_accuracy(&model, val_set), epoch, 0)?;
        if !val_loss.is_finite() {
            return Err(PipelineError::DivergedLoss { epoch, batch: 0, loss: val_loss });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.val_accuracy.push(val_accuracy);
        let improved = epoch == 0 || val_loss < history.val_loss[history.best_epoch];
        if improved {
            history.best_epoch = epoch;
            best = model.params().clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        observe(&EpochSummary {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            improved,
        });
        if since_best > cfg.early_stop_patience {
            history.stopped_early = true;
            break;
        }
    }
    *model.params_mut() = best;
    Ok((model, history))
}

/// Non-finite values met inside a forward or backward pass count as divergence.
fn diverged<T>(r: Result<T>, epoch: usize, batch: usize) -> Result<T> {
    match r {
        Err(PipelineError::Model(ModelError::Nn(NnError::NonFiniteValue(_)))) => Err(PipelineError::DivergedLoss {
            epoch,
            batch,
            loss: f64::NAN,
        }),
        r => r,
    }
}

/// Hex SHA-256 over ids, labels and inputs, in order.
pub fn dataset_hash(examples: &[Example]) -> String {
    let mut h = Sha256::new();
    for e in examples {
        h.update(e.id.as_bytes());
        h.update([0, e.label.index() as u8]);
        match &e.input {
            ModelInput::Sequence(s) => {
                for id in &s.token_ids {
                    h.update(id.to_le_bytes());
                }
                for p in &s.pos_ids {
                    h.update([p.0]);
                }
                for f in &s.context_features {
                    h.update(f.to_le_bytes());
                }
                for m in &s.mask {
                    h.update([*m as u8]);
                }
                for (pos, chars) in &s.ilgte_chars {
                    h.update((*pos as u64).to_le_bytes());
                    for c in chars {
                        h.update(c.to_le_bytes());
                    }
                }
            }
            ModelInput::Embedding(row) => {
                for v in row {
                    h.update(v.to_le_bytes());
                }
            }
        }
    }
    hex(&h.finalize())
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to audit or repeat a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub param_count: usize,
    pub vocab_hash: Option<String>,
    pub dataset_hashes: BTreeMap<String, String>,
    pub checkpoint_sha256: String,
    pub history: TrainHistory,
    pub metrics: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests;
