//! Run configuration file.
//!
//! ```toml
//! [corpus]
//! articles = "news.txt"
//! labels = "labels.tsv"
//! split = [0.7, 0.2, 0.1]
//!
//! [model]
//! architecture = "rnn_plus"
//! gru_hidden = 32
//!
//! [train]
//! learning_rate = 0.005
//!
//! [output]
//! dir = "runs/rnn"
//! ```
//!
//! Unknown keys are errors in every section. Relative paths resolve against
//! the directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use finnews::corpus::DEFAULT_RATIOS;
use finnews::models::ModelConfig;
use finnews::pipeline::TrainConfig;
use finnews::preprocess::DEFAULT_MIN_FREQ;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub corpus: CorpusSection,
    /// Kept as a table so data-derived sizes can be filled in before parsing.
    pub model: Option<toml::Table>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputSection,
}

fn d_split() -> [f64; 3] {
    DEFAULT_RATIOS
}
fn d_min_freq() -> usize {
    DEFAULT_MIN_FREQ
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub articles: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Word list; the bundled lexicon when absent.
    pub lexicon: Option<PathBuf>,
    /// Externally supplied POS tags, `id<TAB>tag tag ...`.
    pub pos_sidecar: Option<PathBuf>,
    /// `EMBV` inputs for the dense and attention heads.
    pub embeddings: Option<PathBuf>,
    /// GloVe-style text vectors for the RNN-Plus word embedding.
    pub pretrained_vectors: Option<PathBuf>,
    #[serde(default)]
    pub freeze_pretrained: bool,
    #[serde(default = "d_split")]
    pub split: [f64; 3],
    #[serde(default = "d_min_freq")]
    pub min_freq: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            articles: None,
            labels: None,
            lexicon: None,
            pos_sidecar: None,
            embeddings: None,
            pretrained_vectors: None,
            freeze_pretrained: false,
            split: d_split(),
            min_freq: d_min_freq(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("{}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let c = &mut cfg.corpus;
        for p in [
            &mut c.articles,
            &mut c.labels,
            &mut c.lexicon,
            &mut c.pos_sidecar,
            &mut c.embeddings,
            &mut c.pretrained_vectors,
            &mut cfg.output.dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn architecture(&self) -> anyhow::Result<&str> {
        let table = self.model.as_ref().ok_or_else(|| anyhow!("config has no [model] section"))?;
        table
            .get("architecture")
            .and_then(|v| v.as_str())
            .ok_or_else(|| anyhow!("[model] needs an `architecture` string"))
    }

    /// Parses `[model]` after filling in sizes that come from the data.
    /// Keys already present must agree with the data.
    pub fn model_config(&self, derived: &[(&str, usize)]) -> anyhow::Result<ModelConfig> {
        let mut table = self.model.clone().ok_or_else(|| anyhow!("config has no [model] section"))?;
        for &(key, value) in derived {
            match table.get(key) {
                None => {
                    table.insert(key.to_string(), toml::Value::Integer(value as i64));
                }
                Some(v) if v.as_integer() == Some(value as i64) => {}
                Some(v) => bail!("model.{key} = {v} disagrees with the data ({value})"),
            }
        }
        let config: ModelConfig = toml::Value::Table(table).try_into().context("[model]")?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_train_key_is_named() {
        let err = RunConfig::parse("[train]\nlerning_rate = 0.1\n").unwrap_err();
        assert!(format!("{err:#}").contains("lerning_rate"), "{err:#}");
    }

    #[test]
    fn unknown_model_key_is_named() {
        let cfg = RunConfig::parse("[model]\narchitecture = \"dense_head\"\nfc_unit = 3\n").unwrap();
        let err = cfg.model_config(&[("input_dim", 8)]).unwrap_err();
        assert!(format!("{err:#}").contains("fc_unit"), "{err:#}");
    }

    #[test]
    fn derived_sizes_fill_in_and_must_agree() {
        let cfg = RunConfig::parse("[model]\narchitecture = \"rnn_plus\"\ngru_hidden = 8\n").unwrap();
        let ModelConfig::RnnPlus(c) = cfg.model_config(&[("vocab_size", 40)]).unwrap() else {
            panic!("wrong architecture");
        };
        assert_eq!((c.vocab_size, c.gru_hidden), (40, 8));

        let cfg = RunConfig::parse("[model]\narchitecture = \"rnn_plus\"\nvocab_size = 12\n").unwrap();
        assert!(cfg.model_config(&[("vocab_size", 40)]).is_err());
    }

    #[test]
    fn defaults_and_validation() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.corpus.split, DEFAULT_RATIOS);
        assert_eq!(cfg.train, TrainConfig::default());
        assert!(cfg.architecture().is_err());
        assert!(RunConfig::parse("[train]\nbatch_size = 0\n").is_err());
        assert!(RunConfig::parse("[outputs]\ndir = \"x\"\n").is_err());
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[corpus]\narticles = \"a.txt\"\nlabels = \"/abs/l.tsv\"\n[output]\ndir = \"o\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.corpus.articles.unwrap(), dir.path().join("a.txt"));
        assert_eq!(cfg.corpus.labels.unwrap(), PathBuf::from("/abs/l.tsv"));
        assert_eq!(cfg.output.dir.unwrap(), dir.path().join("o"));
    }
}
