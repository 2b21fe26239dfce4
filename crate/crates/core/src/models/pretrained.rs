use std::collections::HashMap;
use std::path::Path;

use super::{ModelError, Result};
use crate::nncore::{Initializer, Tensor};
use crate::preprocess::Vocab;

/// Word table initialized from a text vector file.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedEmbeddings {
    /// `V × E`, rows in vocabulary id order.
    pub table: Tensor,
    /// Rows copied from the file. Reserved ids are never hits.
    pub hits: Vec<bool>,
}

impl PretrainedEmbeddings {
    pub fn hit_count(&self) -> usize {
        self.hits.iter().filter(|h| **h).count()
    }
}

/// Reads `word v1 … vE` lines. A leading `count dim` header line is skipped;
/// blank lines are ignored; when a word repeats, its first vector wins.
/// Vocabulary words missing from the file, and the reserved ids, keep a
/// seeded Glorot initialization.
pub fn load_pretrained_word_embeddings(vocab: &Vocab, path: impl AsRef<Path>, dim: usize, seed: u64) -> Result<PretrainedEmbeddings> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let wanted: HashMap<&str, u32> = vocab.words().map(|(id, w)| (w, id)).collect();

    let mut table = Initializer::new(seed).matrix(vocab.len(), dim);
    let mut hits = vec![false; vocab.len()];
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if n == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        if rest.len() != dim {
            if rest.is_empty() {
                return Err(ModelError::BadVectorLine {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("word {word:?} has no vector"),
                });
            }
            return Err(ModelError::InconsistentDim {
                path: path.to_path_buf(),
                line: lineno,
                expected: dim,
                got: rest.len(),
            });
        }
        let mut values = Vec::with_capacity(dim);
        for f in rest {
            match f.parse::<f32>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(ModelError::BadVectorLine {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg: format!("bad component {f:?}"),
                    })
                }
            }
        }
        if let Some(&id) = wanted.get(word) {
            let row = id as usize;
            if !hits[row] {
                hits[row] = true;
                table.data_mut()[row * dim..(row + 1) * dim].copy_from_slice(&values);
            }
        }
    }
    Ok(PretrainedEmbeddings { table, hits })
}
