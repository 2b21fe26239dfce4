//! Loading corpora, embeddings and trained-model directories.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use finnews::corpus::{attach_labels, load_labels, parse_articles_text, Article, CorpusError, EmbeddingMatrix, Label};
use finnews::models::{Example, Model, ModelConfig, ModelError, ModelInput, ModelManifest, RnnPlusConfig};
use finnews::nncore::load_nnpk;
use finnews::preprocess::{read_pos_sidecar, Lexicon, PerceptronTagger, Preprocessor, Vocab};

pub const CHECKPOINT_FILE: &str = "model.nnpk";
pub const MANIFEST_FILE: &str = "model.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LEXICON_FILE: &str = "lexicon.txt";

pub fn lexicon(path: Option<&Path>) -> anyhow::Result<Lexicon> {
    Ok(match path {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::bundled(),
    })
}

/// Parses an article file chunk by chunk. With `keep_going`, malformed
/// articles are reported on stderr and skipped.
pub fn read_articles(path: &Path, keep_going: bool) -> anyhow::Result<Vec<Article>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    let mut out = Vec::new();
    for chunk in parse_articles_text(&text, path) {
        match chunk {
            Ok(a) => out.push(a),
            Err(e) if keep_going => eprintln!("warning: skipped {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Non-empty article file with unique ids, labeled when `labels` is given.
pub fn read_corpus(articles: &Path, labels: Option<&Path>, keep_going: bool) -> anyhow::Result<Vec<Article>> {
    let mut arts = read_articles(articles, keep_going)?;
    if arts.is_empty() {
        return Err(CorpusError::EmptyFile {
            path: articles.to_path_buf(),
        }
        .into());
    }
    let mut seen = HashSet::new();
    for a in &arts {
        if !seen.insert(a.id.as_str()) {
            return Err(CorpusError::DuplicateArticleId(a.id.clone())).with_context(|| format!("{}", articles.display()));
        }
    }
    if let Some(path) = labels {
        let mut pairs = load_labels(path)?;
        if keep_going {
            let before = pairs.len();
            pairs.retain(|(id, _)| seen.contains(id.as_str()));
            if pairs.len() < before {
                eprintln!("warning: ignored {} labels without a parsed article", before - pairs.len());
            }
        }
        attach_labels(&mut arts, &pairs).with_context(|| format!("{}", path.display()))?;
    }
    Ok(arts)
}

pub fn preprocessor(
    lexicon: Lexicon,
    vocab: Vocab,
    config: &RnnPlusConfig,
    sidecar: Option<&Path>,
) -> anyhow::Result<Preprocessor> {
    let mut pre = Preprocessor::new(lexicon, vocab, PerceptronTagger::bundled(), config.steps);
    pre.max_chars = config.max_chars;
    if let Some(p) = sidecar {
        pre.sidecar = Some(read_pos_sidecar(p)?);
    }
    Ok(pre)
}

fn label_of(a: &Article) -> Result<Label, CorpusError> {
    a.label.ok_or_else(|| CorpusError::MissingLabel(a.id.clone()))
}

pub fn encoded_examples(pre: &Preprocessor, articles: &[Article]) -> anyhow::Result<Vec<Example>> {
    finnews::par::try_map(articles, |a| -> anyhow::Result<Example> {
        Ok(Example {
            id: a.id.clone(),
            input: ModelInput::Sequence(pre.encode(a)?),
            label: label_of(a)?,
        })
    })
}

/// Looks up the `EMBV` row of every `(id, label)` pair.
pub fn embedding_examples<'a>(
    emb: &EmbeddingMatrix,
    path: &Path,
    items: impl IntoIterator<Item = (&'a str, Label)>,
) -> anyhow::Result<Vec<Example>> {
    let index = emb.index();
    items
        .into_iter()
        .map(|(id, label)| {
            let i = index
                .get(id)
                .ok_or_else(|| anyhow!("{}: no embedding row for article {id}", path.display()))?;
            Ok(Example {
                id: id.to_string(),
                input: ModelInput::Embedding(emb.row(*i).to_vec()),
                label,
            })
        })
        .collect()
}

pub fn article_examples(emb: &EmbeddingMatrix, path: &Path, articles: &[Article]) -> anyhow::Result<Vec<Example>> {
    let items = articles.iter().map(|a| label_of(a).map(|l| (a.id.as_str(), l))).collect::<Result<Vec<_>, _>>()?;
    embedding_examples(emb, path, items)
}

/// Where model inputs come from.
#[derive(Clone, Debug)]
pub enum InputSource {
    Articles(PathBuf),
    Embeddings(PathBuf),
}

impl InputSource {
    pub fn from_args(articles: &Option<PathBuf>, embeddings: &Option<PathBuf>) -> anyhow::Result<Self> {
        match (articles, embeddings) {
            (Some(a), None) => Ok(InputSource::Articles(a.clone())),
            (None, Some(e)) => Ok(InputSource::Embeddings(e.clone())),
            _ => bail!("give exactly one of --articles and --embeddings"),
        }
    }

    /// Rejects inputs the model cannot consume.
    pub fn check(&self, model: &ModelConfig) -> Result<(), ModelError> {
        let input = match self {
            InputSource::Articles(_) => "encoded sequence",
            InputSource::Embeddings(_) => "embedding",
        };
        let wanted = match model {
            ModelConfig::RnnPlus(_) => "encoded sequence",
            ModelConfig::DenseHead(_) | ModelConfig::AttentionHead(_) => "embedding",
        };
        if input != wanted {
            return Err(ModelError::ArchitectureMismatch {
                model: model.tag(),
                input,
            });
        }
        Ok(())
    }
}

pub fn check_embedding_shape(model: &ModelConfig, emb: &EmbeddingMatrix) -> Result<(), ModelError> {
    if let ModelConfig::DenseHead(c) | ModelConfig::AttentionHead(c) = model {
        if (c.input_steps, c.input_dim) != (emb.steps, emb.dim) {
            return Err(ModelError::DimensionMismatch {
                expected: c.row_len(),
                got: emb.row_len(),
            });
        }
    }
    Ok(())
}

/// A trained model directory as written by `train`.
pub struct Bundle {
    pub model: Model,
    /// Present for RNN-Plus.
    pub preprocessor: Option<Preprocessor>,
}

pub fn load_bundle(dir: &Path, sidecar: Option<&Path>) -> anyhow::Result<Bundle> {
    let manifest = ModelManifest::load(dir.join(MANIFEST_FILE))?;
    let store = load_nnpk(dir.join(CHECKPOINT_FILE)).with_context(|| format!("{}", dir.join(CHECKPOINT_FILE).display()))?;
    let model = Model::from_params(manifest.model.clone(), &store)?;
    let preprocessor = match &manifest.model {
        ModelConfig::RnnPlus(c) => {
            let vocab = Vocab::load(dir.join(VOCAB_FILE))?;
            if manifest.vocab_hash.as_deref() != Some(vocab.hash().as_str()) {
                bail!("{}: vocabulary does not match the checkpoint", dir.join(VOCAB_FILE).display());
            }
            let lex = Lexicon::load(dir.join(LEXICON_FILE))?;
            Some(preprocessor(lex, vocab, c, sidecar)?)
        }
        _ => None,
    };
    Ok(Bundle { model, preprocessor })
}
