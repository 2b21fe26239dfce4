//! Classifier architectures.
//!
//! * RNN-Plus: two bidirectional GRU branches, one over word-token
//!   embeddings and one over POS embeddings joined with the three
//!   word-context flags, each followed by a ReLU dense layer; the two
//!   outputs are concatenated and mapped to a 3-way softmax. An optional
//!   character branch replaces the embedding of every ILGTE token with a
//!   projected mean of its character embeddings.
//! * Dense head: precomputed embeddings (mean-pooled or flattened when there
//!   is more than one step) → ReLU dense → softmax.
//! * Attention head: precomputed sentence vectors → additive self-attention
//!   over non-zero rows → ReLU dense → softmax.
//!
//! A [`Model`] owns its [`ParamStore`]; forward passes are recorded on a
//! [`Tape`] over any store with the same layout, which is how gradient
//! checks perturb parameters without touching the model.

pub mod check;
mod pretrained;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::nncore::{
    AttentionIds, DenseIds, Grads, GruIds, Initializer, NnError, ParamId, ParamStore, Tape, Tensor, Var,
};
use crate::preprocess::{EncodedSequence, CONTEXT_FEATURES, CHAR_VOCAB_SIZE, POS_VOCAB_SIZE};

pub use pretrained::{load_pretrained_word_embeddings, PretrainedEmbeddings};

pub const NUM_CLASSES: usize = Label::COUNT;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("token id {id} outside vocabulary of {vocab}")]
    VocabMismatch { id: u32, vocab: usize },
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("architecture mismatch: model is {model}, input is {input}")]
    ArchitectureMismatch { model: &'static str, input: &'static str },
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("{}:{line}: bad vector line: {msg}", path.display())]
    BadVectorLine { path: PathBuf, line: usize, msg: String },
    #[error("{}:{line}: expected {expected} vector components, got {got}", path.display())]
    InconsistentDim { path: PathBuf, line: usize, expected: usize, got: usize },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad model manifest: {0}")]
    BadManifest(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

fn d_steps() -> usize {
    crate::preprocess::DEFAULT_STEPS
}
fn d_word_embed() -> usize {
    100
}
fn d_pos_embed() -> usize {
    16
}
fn d_hidden() -> usize {
    64
}
fn d_rnn_fc() -> usize {
    30
}
fn d_char_embed() -> usize {
    16
}
fn d_max_chars() -> usize {
    crate::preprocess::DEFAULT_MAX_CHARS
}
fn d_classes() -> usize {
    NUM_CLASSES
}
fn d_head_fc() -> usize {
    32
}
fn d_one() -> usize {
    1
}
fn d_input_dim() -> usize {
    512
}
fn d_attention_dim() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnPlusConfig {
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_word_embed")]
    pub word_embed_dim: usize,
    #[serde(default = "d_pos_embed")]
    pub pos_embed_dim: usize,
    #[serde(default = "d_hidden")]
    pub gru_hidden: usize,
    #[serde(default = "d_rnn_fc")]
    pub fc_units: usize,
    #[serde(default)]
    pub use_char_branch: bool,
    #[serde(default = "d_char_embed")]
    pub char_embed_dim: usize,
    #[serde(default = "d_max_chars")]
    pub max_chars: usize,
    pub vocab_size: usize,
    #[serde(default = "d_classes")]
    pub num_classes: usize,
}

impl RnnPlusConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            steps: d_steps(),
            word_embed_dim: d_word_embed(),
            pos_embed_dim: d_pos_embed(),
            gru_hidden: d_hidden(),
            fc_units: d_rnn_fc(),
            use_char_branch: false,
            char_embed_dim: d_char_embed(),
            max_chars: d_max_chars(),
            vocab_size,
            num_classes: NUM_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("steps", self.steps),
            ("word_embed_dim", self.word_embed_dim),
            ("pos_embed_dim", self.pos_embed_dim),
            ("gru_hidden", self.gru_hidden),
            ("fc_units", self.fc_units),
            ("char_embed_dim", self.char_embed_dim),
            ("max_chars", self.max_chars),
        ];
        positive(&dims)?;
        if self.vocab_size < crate::preprocess::Vocab::RESERVED.len() {
            return Err(ModelError::BadConfig(format!("vocab_size {} is below the reserved ids", self.vocab_size)));
        }
        classes(self.num_classes)
    }

    /// Closed-form number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let (e, p, h, f) = (self.word_embed_dim, self.pos_embed_dim, self.gru_hidden, self.fc_units);
        let mut n = self.vocab_size * e
            + POS_VOCAB_SIZE * p
            + 2 * GruIds::param_count(e, h)
            + 2 * GruIds::param_count(p + CONTEXT_FEATURES, h)
            + 2 * DenseIds::param_count(f, 2 * h)
            + DenseIds::param_count(self.num_classes, 2 * f);
        if self.use_char_branch {
            n += CHAR_VOCAB_SIZE * self.char_embed_dim + DenseIds::param_count(e, self.char_embed_dim);
        }
        n
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    Flatten,
}

/// Configuration shared by the dense and attention heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineTuneConfig {
    #[serde(default = "d_one")]
    pub input_steps: usize,
    #[serde(default = "d_input_dim")]
    pub input_dim: usize,
    #[serde(default = "d_head_fc")]
    pub fc_units: usize,
    #[serde(default = "d_classes")]
    pub num_classes: usize,
    #[serde(default)]
    pub pooling: Pooling,
    /// Width of the attention scoring layer (attention head only).
    #[serde(default = "d_attention_dim")]
    pub attention_dim: usize,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            input_steps: d_one(),
            input_dim: d_input_dim(),
            fc_units: d_head_fc(),
            num_classes: NUM_CLASSES,
            pooling: Pooling::Mean,
            attention_dim: d_attention_dim(),
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        positive(&[
            ("input_steps", self.input_steps),
            ("input_dim", self.input_dim),
            ("fc_units", self.fc_units),
            ("attention_dim", self.attention_dim),
        ])?;
        classes(self.num_classes)
    }

    /// Width of the vector entering the first dense layer of the dense head.
    pub fn pooled_width(&self) -> usize {
        match self.pooling {
            Pooling::Mean => self.input_dim,
            Pooling::Flatten => self.input_steps * self.input_dim,
        }
    }

    pub fn row_len(&self) -> usize {
        self.input_steps * self.input_dim
    }
}

fn positive(dims: &[(&str, usize)]) -> Result<()> {
    match dims.iter().find(|(_, v)| *v == 0) {
        Some((name, _)) => Err(ModelError::BadConfig(format!("{name} must be positive"))),
        None => Ok(()),
    }
}

fn classes(n: usize) -> Result<()> {
    if n != NUM_CLASSES {
        return Err(ModelError::BadConfig(format!("num_classes must be {NUM_CLASSES}, got {n}")));
    }
    Ok(())
}

/// Architecture plus its configuration; serialized with an `architecture` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "snake_case")]
pub enum ModelConfig {
    RnnPlus(RnnPlusConfig),
    DenseHead(FineTuneConfig),
    AttentionHead(FineTuneConfig),
}

impl ModelConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelConfig::RnnPlus(_) => "rnn_plus",
            ModelConfig::DenseHead(_) => "dense_head",
            ModelConfig::AttentionHead(_) => "attention_head",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::RnnPlus(c) => c.validate(),
            ModelConfig::DenseHead(c) | ModelConfig::AttentionHead(c) => c.validate(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModelConfig::RnnPlus(c) => c.param_count(),
            ModelConfig::DenseHead(c) => {
                DenseIds::param_count(c.fc_units, c.pooled_width()) + DenseIds::param_count(c.num_classes, c.fc_units)
            }
            ModelConfig::AttentionHead(c) => {
                AttentionIds::param_count(c.input_dim, c.attention_dim)
                    + DenseIds::param_count(c.fc_units, c.input_dim)
                    + DenseIds::param_count(c.num_classes, c.fc_units)
            }
        }
    }
}

/// One model input.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelInput {
    Sequence(EncodedSequence),
    /// A row of an `EMBV` file: `steps × dim` values, row-major.
    Embedding(Vec<f32>),
}

impl ModelInput {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelInput::Sequence(_) => "encoded sequence",
            ModelInput::Embedding(_) => "embedding",
        }
    }
}

/// A labeled input.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub input: ModelInput,
    pub label: Label,
}

/// Output of a forward pass.
pub struct Forward {
    pub logits: Var,
    pub probs: Var,
    /// Attention weights over input rows (attention head only).
    pub alpha: Option<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub probabilities: [f32; NUM_CLASSES],
    pub alpha: Option<Vec<f32>>,
}

#[derive(Clone, Debug)]
struct RnnPlusIds {
    word: ParamId,
    pos: ParamId,
    word_fwd: GruIds,
    word_bwd: GruIds,
    context_fwd: GruIds,
    context_bwd: GruIds,
    word_fc: DenseIds,
    context_fc: DenseIds,
    out: DenseIds,
    chars: Option<(ParamId, DenseIds)>,
}

#[derive(Clone, Debug)]
enum Layout {
    RnnPlus(RnnPlusIds),
    Dense { fc: DenseIds, out: DenseIds },
    Attention { att: AttentionIds, fc: DenseIds, out: DenseIds },
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Freshly initialized model; all randomness comes from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Initializer::new(seed);
        let layout = match &config {
            ModelConfig::RnnPlus(c) => Layout::RnnPlus(build_rnn_plus(&mut store, &mut init, c)?),
            ModelConfig::DenseHead(c) => Layout::Dense {
                fc: DenseIds::create(&mut store, &mut init, "fc", c.fc_units, c.pooled_width())?,
                out: DenseIds::create(&mut store, &mut init, "output", c.num_classes, c.fc_units)?,
            },
            ModelConfig::AttentionHead(c) => Layout::Attention {
                att: AttentionIds::create(&mut store, &mut init, "attention", c.input_dim, c.attention_dim)?,
                fc: DenseIds::create(&mut store, &mut init, "fc", c.fc_units, c.input_dim)?,
                out: DenseIds::create(&mut store, &mut init, "output", c.num_classes, c.fc_units)?,
            },
        };
        Ok(Self { config, params: store, layout })
    }

    /// RNN-Plus whose word table starts from pretrained vectors. Rows hit by
    /// the file are frozen when `freeze` is set.
    pub fn rnn_plus_with_pretrained(
        config: RnnPlusConfig,
        seed: u64,
        pretrained: &PretrainedEmbeddings,
        freeze: bool,
    ) -> Result<Self> {
        let mut model = Self::new(ModelConfig::RnnPlus(config.clone()), seed)?;
        let table = &pretrained.table;
        if table.shape() != [config.vocab_size, config.word_embed_dim] {
            return Err(ModelError::ShapeMismatch(format!(
                "pretrained table {:?} for vocab {} × {}",
                table.shape(),
                config.vocab_size,
                config.word_embed_dim
            )));
        }
        let Layout::RnnPlus(ids) = &model.layout else { unreachable!() };
        let word = ids.word;
        *model.params.get_mut(word) = table.clone();
        if freeze {
            model.params.set_frozen_rows(word, pretrained.hits.clone())?;
        }
        Ok(model)
    }

    /// Rebuilds a model from its config and checkpointed parameters.
    pub fn from_params(config: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        model.params.load_values(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> &'static str {
        self.config.tag()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Records the forward pass for `input` on `tape`, whose store must share
    /// this model's layout.
    pub fn forward(&self, tape: &mut Tape<'_>, input: &ModelInput) -> Result<Forward> {
        match (&self.layout, &self.config, input) {
            (Layout::RnnPlus(ids), ModelConfig::RnnPlus(c), ModelInput::Sequence(seq)) => {
                rnn_plus_forward(tape, ids, c, seq)
            }
            (Layout::Dense { fc, out }, ModelConfig::DenseHead(c), ModelInput::Embedding(row)) => {
                let x = embedding_input(tape, c, row)?;
                let pooled = match (c.input_steps, c.pooling) {
                    (1, _) => tape.reshape(x, vec![c.input_dim])?,
                    (_, Pooling::Mean) => tape.mean_rows(x)?,
                    (_, Pooling::Flatten) => tape.reshape(x, vec![c.row_len()])?,
                };
                head(tape, pooled, *fc, *out, None)
            }
            (Layout::Attention { att, fc, out }, ModelConfig::AttentionHead(c), ModelInput::Embedding(row)) => {
                let x = embedding_input(tape, c, row)?;
                let mask: Vec<bool> = row.chunks(c.input_dim).map(|r| r.iter().any(|v| *v != 0.0)).collect();
                let (ctx, alpha) = tape.attention(x, &mask, *att)?;
                head(tape, ctx, *fc, *out, Some(alpha))
            }
            _ => Err(ModelError::ArchitectureMismatch {
                model: self.architecture(),
                input: input.kind(),
            }),
        }
    }

    /// Class probabilities and attention weights, if any.
    pub fn probabilities(&self, input: &ModelInput) -> Result<([f32; NUM_CLASSES], Option<Vec<f32>>)> {
        let mut tape = Tape::new(&self.params);
        let f = self.forward(&mut tape, input)?;
        let mut p = [0.0; NUM_CLASSES];
        p.copy_from_slice(tape.value(f.probs).data());
        Ok((p, f.alpha))
    }

    pub fn predict(&self, input: &ModelInput) -> Result<Prediction> {
        let (probabilities, alpha) = self.probabilities(input)?;
        Ok(Prediction {
            label: Label::from_index(argmax(&probabilities)).expect("class index in range"),
            probabilities,
            alpha,
        })
    }

    /// Order-preserving [`Model::predict`] over many inputs.
    pub fn predict_batch(&self, inputs: &[ModelInput]) -> Vec<Result<Prediction>> {
        crate::par::map(inputs, |x| self.predict(x))
    }

    /// Cross-entropy of one example evaluated against `store`.
    pub fn loss_with(&self, store: &ParamStore, input: &ModelInput, label: Label, weights: Option<&[f32]>) -> Result<f32> {
        let mut tape = Tape::new(store);
        let loss = self.record_loss(&mut tape, input, label, weights)?;
        Ok(tape.value(loss).data()[0])
    }

    /// Loss and parameter gradients of one example.
    pub fn loss_and_grads(&self, input: &ModelInput, label: Label, weights: Option<&[f32]>) -> Result<(f32, Grads)> {
        let mut tape = Tape::new(&self.params);
        let loss = self.record_loss(&mut tape, input, label, weights)?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).data()[0], grads))
    }

    pub fn record_loss(&self, tape: &mut Tape<'_>, input: &ModelInput, label: Label, weights: Option<&[f32]>) -> Result<Var> {
        let f = self.forward(tape, input)?;
        Ok(tape.cross_entropy(f.probs, &[label.index()], weights)?)
    }

    pub fn manifest(&self, vocab_hash: Option<String>) -> ModelManifest {
        ModelManifest {
            model: self.config.clone(),
            vocab_hash,
            param_count: self.param_count(),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn build_rnn_plus(store: &mut ParamStore, init: &mut Initializer, c: &RnnPlusConfig) -> Result<RnnPlusIds> {
    let (e, p, h, f) = (c.word_embed_dim, c.pos_embed_dim, c.gru_hidden, c.fc_units);
    let word = store.add("word_embedding", init.matrix(c.vocab_size, e))?;
    let pos = store.add("pos_embedding", init.matrix(POS_VOCAB_SIZE, p))?;
    let ids = RnnPlusIds {
        word,
        pos,
        word_fwd: GruIds::create(store, init, "word_gru_fwd", e, h)?,
        word_bwd: GruIds::create(store, init, "word_gru_bwd", e, h)?,
        context_fwd: GruIds::create(store, init, "context_gru_fwd", p + CONTEXT_FEATURES, h)?,
        context_bwd: GruIds::create(store, init, "context_gru_bwd", p + CONTEXT_FEATURES, h)?,
        word_fc: DenseIds::create(store, init, "word_fc", f, 2 * h)?,
        context_fc: DenseIds::create(store, init, "context_fc", f, 2 * h)?,
        out: DenseIds::create(store, init, "output", c.num_classes, 2 * f)?,
        chars: None,
    };
    if !c.use_char_branch {
        return Ok(ids);
    }
    let table = store.add("char_embedding", init.matrix(CHAR_VOCAB_SIZE, c.char_embed_dim))?;
    let proj = DenseIds::create(store, init, "char_projection", e, c.char_embed_dim)?;
    Ok(RnnPlusIds {
        chars: Some((table, proj)),
        ..ids
    })
}

fn rnn_plus_forward(tape: &mut Tape<'_>, ids: &RnnPlusIds, c: &RnnPlusConfig, seq: &EncodedSequence) -> Result<Forward> {
    let t = seq.token_ids.len();
    if seq.mask.len() != t || seq.pos_ids.len() != t || seq.context_features.len() != t * CONTEXT_FEATURES {
        return Err(ModelError::ShapeMismatch(format!(
            "sequence of {t} tokens has {} mask, {} POS and {} context values",
            seq.mask.len(),
            seq.pos_ids.len(),
            seq.context_features.len()
        )));
    }
    if let Some(&id) = seq.token_ids.iter().find(|id| **id as usize >= c.vocab_size) {
        return Err(ModelError::VocabMismatch { id, vocab: c.vocab_size });
    }

    let mut words = tape.embedding(ids.word, &seq.token_ids)?;
    if let (Some((table, proj)), false) = (ids.chars, seq.ilgte_chars.is_empty()) {
        let mut pooled = Vec::with_capacity(seq.ilgte_chars.len());
        let mut positions = Vec::with_capacity(seq.ilgte_chars.len());
        for (pos, chars) in &seq.ilgte_chars {
            let chars: Vec<u32> = chars
                .iter()
                .copied()
                .filter(|ch| *ch != crate::preprocess::CHAR_PAD)
                .take(c.max_chars)
                .collect();
            if chars.is_empty() {
                continue;
            }
            let emb = tape.embedding(table, &chars)?;
            pooled.push(tape.mean_rows(emb)?);
            positions.push(*pos);
        }
        if !pooled.is_empty() {
            let stacked = tape.stack_rows(&pooled)?;
            let projected = tape.dense(stacked, proj)?;
            words = tape.replace_rows(words, projected, &positions)?;
        }
    }
    let word_state = tape.bigru(words, &seq.mask, ids.word_fwd, ids.word_bwd)?;
    let word_fc = tape.dense(word_state, ids.word_fc)?;
    let word_out = tape.relu(word_fc)?;

    let pos_ids: Vec<u32> = seq.pos_ids.iter().map(|p| p.id() as u32).collect();
    let pos = tape.embedding(ids.pos, &pos_ids)?;
    let flags = tape.input(Tensor::matrix(t, CONTEXT_FEATURES, seq.context_features.clone())?)?;
    let context = tape.concat(&[pos, flags])?;
    let context_state = tape.bigru(context, &seq.mask, ids.context_fwd, ids.context_bwd)?;
    let context_fc = tape.dense(context_state, ids.context_fc)?;
    let context_out = tape.relu(context_fc)?;

    let merged = tape.concat(&[word_out, context_out])?;
    let logits = tape.dense(merged, ids.out)?;
    let probs = tape.softmax(logits)?;
    Ok(Forward { logits, probs, alpha: None })
}

fn embedding_input(tape: &mut Tape<'_>, c: &FineTuneConfig, row: &[f32]) -> Result<Var> {
    if row.len() != c.row_len() {
        return Err(ModelError::DimensionMismatch {
            expected: c.row_len(),
            got: row.len(),
        });
    }
    Ok(tape.input(Tensor::matrix(c.input_steps, c.input_dim, row.to_vec())?)?)
}

fn head(tape: &mut Tape<'_>, x: Var, fc: DenseIds, out: DenseIds, alpha: Option<Vec<f32>>) -> Result<Forward> {
    let hidden = tape.dense(x, fc)?;
    let hidden = tape.relu(hidden)?;
    let logits = tape.dense(hidden, out)?;
    let probs = tape.softmax(logits)?;
    Ok(Forward { logits, probs, alpha })
}

/// Sidecar describing a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub model: ModelConfig,
    pub vocab_hash: Option<String>,
    pub param_count: usize,
}

impl ModelManifest {
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| ModelError::BadManifest(e.to_string()))?;
        m.model.validate()?;
        if m.param_count != m.model.param_count() {
            return Err(ModelError::BadManifest(format!(
                "param_count {} disagrees with config ({})",
                m.param_count,
                m.model.param_count()
            )));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}
