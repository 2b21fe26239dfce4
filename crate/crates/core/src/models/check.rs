//! Finite-difference gradient checks for every layer and architecture, on
//! tiny seeded instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FineTuneConfig, Model, ModelConfig, ModelError, ModelInput, Result, RnnPlusConfig};
use crate::corpus::Label;
use crate::nncore::{
    grad_check, AttentionIds, DenseIds, GradCheckOptions, Grads, GruIds, Initializer, NnError, ParamStore, Tape, Tensor, Var,
};
use crate::preprocess::{EncodedSequence, PosTag, Vocab, CHAR_VOCAB_SIZE, CONTEXT_FEATURES, POS_VOCAB_SIZE};

pub const LAYER_THRESHOLD: f64 = 1e-2;
pub const FULL_MODEL_THRESHOLD: f64 = 2e-2;

/// Outcome of one gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub max_rel_error: f64,
    pub threshold: f64,
    /// Coordinates scored against the threshold.
    pub checked: usize,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error < self.threshold
    }
}

fn options(seed: u64) -> GradCheckOptions {
    GradCheckOptions {
        samples_per_param: 16,
        seed,
        ..Default::default()
    }
}

/// Scales every analytic gradient; used to prove the checker can fail.
fn tamper(mut g: Grads, corrupt: bool) -> Grads {
    if corrupt {
        g.scale(1.5);
    }
    g
}

fn layer<B>(name: &str, store: &ParamStore, seed: u64, corrupt: bool, build: B) -> Result<CheckLine>
where
    B: Fn(&mut Tape<'_>) -> crate::nncore::Result<Var>,
{
    let mut tape = Tape::new(store);
    let loss = build(&mut tape)?;
    let grads = tamper(tape.backward(loss)?, corrupt);
    let f = |s: &ParamStore| {
        let mut t = Tape::new(s);
        let l = build(&mut t)?;
        Ok(t.value(l).data()[0])
    };
    let r = grad_check(store, f, &grads, &options(seed))?;
    Ok(CheckLine {
        name: name.to_string(),
        max_rel_error: r.max_rel_error,
        threshold: LAYER_THRESHOLD,
        checked: r.checked,
    })
}

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Replaces every parameter with uniform noise so biases are nonzero too.
fn scramble(store: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f32) {
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.get_mut(id).data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

/// Checks dense, embedding, GRU cell, Bi-GRU, attention and
/// softmax + cross-entropy in isolation.
pub fn layer_checks(seed: u64, corrupt: bool) -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut s = ParamStore::new();
    let mut init = Initializer::new(seed);
    let d = DenseIds::create(&mut s, &mut init, "dense", 4, 5)?;
    let x = s.add("x", Tensor::matrix(3, 5, noise(&mut rng, 15))?)?;
    scramble(&mut s, &mut rng, 1.0);
    let w = noise(&mut rng, 12);
    out.push(layer("dense", &s, seed, corrupt, |t| {
        let xv = t.param(x)?;
        let y = t.dense(xv, d)?;
        t.dot(y, w.clone())
    })?);

    let mut s = ParamStore::new();
    let table = s.add("table", Tensor::matrix(6, 3, noise(&mut rng, 18))?)?;
    let w = noise(&mut rng, 12);
    out.push(layer("embedding", &s, seed, corrupt, |t| {
        let y = t.embedding(table, &[1, 4, 1, 0])?;
        t.dot(y, w.clone())
    })?);

    let mut s = ParamStore::new();
    let g = GruIds::create(&mut s, &mut init, "gru", 3, 4)?;
    let gb = GruIds::create(&mut s, &mut init, "gru_bwd", 3, 4)?;
    let x = s.add("x", Tensor::vector(noise(&mut rng, 3)))?;
    let h = s.add("h", Tensor::vector(noise(&mut rng, 4)))?;
    let xs = s.add("xs", Tensor::matrix(5, 3, noise(&mut rng, 15))?)?;
    scramble(&mut s, &mut rng, 0.8);
    let w = noise(&mut rng, 8);
    out.push(layer("gru_cell", &s, seed, corrupt, |t| {
        let (xv, hv) = (t.param(x)?, t.param(h)?);
        let y = t.gru_cell(xv, hv, g)?;
        t.dot(y, w[..4].to_vec())
    })?);
    out.push(layer("bigru", &s, seed, corrupt, |t| {
        let xv = t.param(xs)?;
        let y = t.bigru(xv, &[true, true, false, true, false], g, gb)?;
        t.dot(y, w.clone())
    })?);

    let mut s = ParamStore::new();
    let a = AttentionIds::create(&mut s, &mut init, "attention", 4, 3)?;
    let x = s.add("x", Tensor::matrix(3, 4, noise(&mut rng, 12))?)?;
    scramble(&mut s, &mut rng, 1.0);
    let w = noise(&mut rng, 4);
    out.push(layer("attention", &s, seed, corrupt, |t| {
        let xv = t.param(x)?;
        let (y, _) = t.attention(xv, &[true, false, true], a)?;
        t.dot(y, w.clone())
    })?);

    let mut s = ParamStore::new();
    let logits = s.add("logits", Tensor::matrix(2, 3, noise(&mut rng, 6))?)?;
    out.push(layer("softmax_cross_entropy", &s, seed, corrupt, |t| {
        let l = t.param(logits)?;
        let p = t.softmax(l)?;
        t.cross_entropy(p, &[2, 0], None)
    })?);
    Ok(out)
}

/// A configuration small enough to check every parameter quickly.
pub fn tiny_config(architecture: &str) -> Option<ModelConfig> {
    match architecture {
        "rnn_plus" => Some(ModelConfig::RnnPlus(RnnPlusConfig {
            steps: 6,
            word_embed_dim: 4,
            pos_embed_dim: 3,
            gru_hidden: 3,
            fc_units: 4,
            use_char_branch: true,
            char_embed_dim: 3,
            max_chars: 5,
            ..RnnPlusConfig::new(9)
        })),
        "dense_head" => Some(ModelConfig::DenseHead(FineTuneConfig {
            input_steps: 2,
            input_dim: 6,
            fc_units: 5,
            ..Default::default()
        })),
        "attention_head" => Some(ModelConfig::AttentionHead(FineTuneConfig {
            input_steps: 3,
            input_dim: 6,
            fc_units: 5,
            attention_dim: 4,
            ..Default::default()
        })),
        _ => None,
    }
}

/// Two random labeled inputs for `config`. Sequences have different lengths
/// and one ILGTE token with characters; embeddings include a zero row.
pub fn toy_batch(config: &ModelConfig, seed: u64) -> Vec<(ModelInput, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = [Label::FundRaising, Label::MergerAcquisition];
    match config {
        ModelConfig::RnnPlus(c) => [4usize, 3]
            .iter()
            .zip(labels)
            .map(|(&len, label)| {
                let mut token_ids: Vec<u32> = (0..len).map(|_| rng.gen_range(1..c.vocab_size as u32)).collect();
                token_ids[1] = Vocab::ILGTE;
                let seq = EncodedSequence {
                    token_ids,
                    context_features: (0..len * CONTEXT_FEATURES).map(|_| rng.gen_range(0..2) as f32).collect(),
                    pos_ids: (0..len).map(|_| PosTag(rng.gen_range(1..POS_VOCAB_SIZE as u8))).collect(),
                    mask: vec![true; len],
                    ilgte_chars: vec![(1, (0..3).map(|_| rng.gen_range(1..CHAR_VOCAB_SIZE as u32)).collect())],
                }
                .padded_to(c.steps);
                (ModelInput::Sequence(seq), label)
            })
            .collect(),
        ModelConfig::DenseHead(c) | ModelConfig::AttentionHead(c) => labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let mut row = noise(&mut rng, c.row_len());
                if i == 1 {
                    let tail = c.row_len() - c.input_dim;
                    row[tail..].fill(0.0);
                }
                (ModelInput::Embedding(row), *label)
            })
            .collect(),
    }
}

/// Mean cross-entropy of `batch` against `store`.
pub fn batch_loss(model: &Model, store: &ParamStore, batch: &[(ModelInput, Label)]) -> Result<f32> {
    let mut total = 0.0;
    for (x, y) in batch {
        total += model.loss_with(store, x, *y, None)?;
    }
    Ok(total / batch.len() as f32)
}

/// Checks the mean batch loss of a seeded model over every parameter.
pub fn model_check(config: ModelConfig, seed: u64, corrupt: bool) -> Result<CheckLine> {
    let mut model = Model::new(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    scramble(model.params_mut(), &mut rng, 0.6);
    let batch = toy_batch(model.config(), seed);
    let mut grads = Grads::new(model.params().len());
    for (x, y) in &batch {
        grads.merge(&model.loss_and_grads(x, *y, None)?.1);
    }
    grads.scale(1.0 / batch.len() as f32);
    let grads = tamper(grads, corrupt);
    let f = |s: &ParamStore| {
        batch_loss(&model, s, &batch).map_err(|e| match e {
            ModelError::Nn(e) => e,
            e => NnError::ShapeMismatch(e.to_string()),
        })
    };
    let r = grad_check(model.params(), f, &grads, &options(seed))?;
    let threshold = match model.config() {
        ModelConfig::RnnPlus(_) => FULL_MODEL_THRESHOLD,
        _ => LAYER_THRESHOLD,
    };
    Ok(CheckLine {
        name: model.architecture().to_string(),
        max_rel_error: r.max_rel_error,
        threshold,
        checked: r.checked,
    })
}
