use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{classify_token, Lexicon, PreprocessError, TokenClass};
use crate::corpus::Article;

pub const DEFAULT_MIN_FREQ: usize = 2;

/// Token-to-id map with five reserved ids.
///
/// Only legitimate words seen at least `min_freq` times in the training split
/// get their own id. Keys are lowercase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const ILGTE: u32 = 2;
    pub const NUM: u32 = 3;
    pub const DOLLAR_NUM: u32 = 4;
    pub const RESERVED: [&'static str; 5] = ["<PAD>", "<UNK>", "<ILGTE>", "<NUM>", "<DOLLAR_NUM>"];

    pub fn build(
        train: &[Article],
        lexicon: &Lexicon,
        min_freq: usize,
    ) -> Result<Self, PreprocessError> {
        if min_freq == 0 {
            return Err(PreprocessError::BadMinFreq);
        }
        if train.is_empty() {
            return Err(PreprocessError::EmptyCorpus);
        }
        let mut freq: HashMap<String, usize> = HashMap::new();
        for article in train {
            for tok in article.tokens() {
                if classify_token(&tok, lexicon) == TokenClass::Legit {
                    *freq.entry(tok.to_lowercase()).or_default() += 1;
                }
            }
        }
        let mut kept: Vec<(String, usize)> =
            freq.into_iter().filter(|(_, n)| *n >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_tokens(kept.into_iter().map(|(t, _)| t)))
    }

    fn from_tokens(words: impl IntoIterator<Item = String>) -> Self {
        let mut tokens: Vec<String> = Self::RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    /// Id for a token of known class.
    pub fn id_for(&self, token: &str, class: TokenClass) -> u32 {
        match class {
            TokenClass::Ilgte => Self::ILGTE,
            TokenClass::Num => Self::NUM,
            TokenClass::DollarNum => Self::DOLLAR_NUM,
            TokenClass::Legit => self
                .index
                .get(&token.to_lowercase())
                .copied()
                .unwrap_or(Self::UNK),
        }
    }

    pub fn lookup(&self, token: &str, lexicon: &Lexicon) -> u32 {
        self.id_for(token, classify_token(token, lexicon))
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Retained words in id order, excluding reserved symbols.
    pub fn words(&self) -> impl Iterator<Item = (u32, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .skip(Self::RESERVED.len())
            .map(|(i, t)| (i as u32, t.as_str()))
    }

    /// Hex SHA-256 of the tokens in id order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// One token per line, in id order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self, PreprocessError> {
        let lines: Vec<&str> = text.lines().collect();
        let bad = |msg: &str| PreprocessError::BadVocab {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        if lines.len() < Self::RESERVED.len() || lines[..5] != Self::RESERVED {
            return Err(bad("reserved symbols missing"));
        }
        let vocab = Self::from_tokens(lines[5..].iter().map(|s| s.to_string()));
        if vocab.index.len() != vocab.tokens.len() {
            return Err(bad("duplicate token"));
        }
        Ok(vocab)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PreprocessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text, path)
    }
}
