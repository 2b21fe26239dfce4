//! `EMBV` precomputed-embedding files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "EMBV" | u32 version=1 | u32 row_count | u32 steps | u32 dim
//! row_count x [ u16 id_len | id bytes (UTF-8) | steps*dim f32 ]
//! ```
//!
//! Readers reject trailing bytes.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::CorpusError;

pub const EMBV_MAGIC: &[u8; 4] = b"EMBV";
pub const EMBV_VERSION: u32 = 1;

/// Row-aligned embedding tensor `[row_count, steps, dim]` keyed by article id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub steps: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    pub article_ids: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(
        steps: usize,
        dim: usize,
        article_ids: Vec<String>,
        data: Vec<f32>,
    ) -> Result<Self, CorpusError> {
        if data.len() != article_ids.len() * steps * dim {
            return Err(CorpusError::DimensionMismatch(format!(
                "{} floats for {} rows of {}x{}",
                data.len(),
                article_ids.len(),
                steps,
                dim
            )));
        }
        let mut seen = HashSet::new();
        for id in &article_ids {
            if !seen.insert(id.as_str()) {
                return Err(CorpusError::DuplicateArticleId(id.clone()));
            }
            if id.len() > u16::MAX as usize {
                return Err(CorpusError::DimensionMismatch(format!("id of {} bytes", id.len())));
            }
        }
        Ok(Self {
            steps,
            dim,
            data,
            article_ids,
        })
    }

    pub fn row_count(&self) -> usize {
        self.article_ids.len()
    }

    pub fn row_len(&self) -> usize {
        self.steps * self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.row_len()..(i + 1) * self.row_len()]
    }

    /// Row lookup table by article id.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.article_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    pub fn row_by_id(&self, id: &str) -> Option<&[f32]> {
        self.article_ids
            .iter()
            .position(|a| a == id)
            .map(|i| self.row(i))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 4 + self.row_count() * 16);
        out.extend_from_slice(EMBV_MAGIC);
        for v in [EMBV_VERSION, self.row_count() as u32, self.steps as u32, self.dim as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (i, id) in self.article_ids.iter().enumerate() {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in self.row(i) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CorpusError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if &magic != EMBV_MAGIC {
            return Err(CorpusError::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != EMBV_VERSION {
            return Err(CorpusError::VersionUnsupported(version));
        }
        let rows = r.u32()? as usize;
        let steps = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let row_len = steps
            .checked_mul(dim)
            .ok_or_else(|| CorpusError::DimensionMismatch("steps x dim overflows".into()))?;
        // Each row needs at least its id length and payload.
        let min_row_bytes = row_len.saturating_mul(4).saturating_add(2);
        if rows.saturating_mul(min_row_bytes) > bytes.len() {
            return Err(CorpusError::TruncatedPayload);
        }
        let mut ids = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * row_len);
        for _ in 0..rows {
            let n = r.u16()? as usize;
            let id = std::str::from_utf8(r.take(n)?).map_err(|_| CorpusError::BadRowId)?;
            ids.push(id.to_string());
            let payload = r.take(row_len * 4)?;
            data.extend(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))),
            );
        }
        if r.pos != bytes.len() {
            return Err(CorpusError::TrailingBytes);
        }
        Self::new(steps, dim, ids, data)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        let end = self.pos.checked_add(n).ok_or(CorpusError::TruncatedPayload)?;
        let s = self.bytes.get(self.pos..end).ok_or(CorpusError::TruncatedPayload)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CorpusError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self) -> Result<u16, CorpusError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, CorpusError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    EmbeddingMatrix::from_bytes(&bytes)
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    std::fs::write(path, m.to_bytes()).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: usize, steps: usize, dim: usize) -> EmbeddingMatrix {
        let ids = (0..rows).map(|i| format!("a{i:06}")).collect();
        let data = (0..rows * steps * dim).map(|i| (i as f32 * 0.37).sin()).collect();
        EmbeddingMatrix::new(steps, dim, ids, data).unwrap()
    }

    fn bits(m: &EmbeddingMatrix) -> Vec<u32> {
        m.data.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn sentence_vectors_round_trip() {
        let m = matrix(2, 1, 512);
        let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(bits(&m), bits(&back));
        assert_eq!(back.article_ids, m.article_ids);
    }

    #[test]
    fn per_sentence_shape_round_trip() {
        let m = matrix(5, 3, 512);
        let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.steps, 3);
        assert_eq!(bits(&m), bits(&back));
        assert_eq!(back.row_by_id("a000004").unwrap(), m.row(4));
    }

    #[test]
    fn header_validation() {
        let mut bytes = matrix(1, 1, 4).to_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(EmbeddingMatrix::from_bytes(&bytes), Err(CorpusError::BadMagic(_))));

        let mut bytes = matrix(1, 1, 4).to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes),
            Err(CorpusError::VersionUnsupported(2))
        ));

        let bytes = matrix(2, 1, 4).to_bytes();
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CorpusError::TruncatedPayload)
        ));

        let mut bytes = matrix(2, 1, 4).to_bytes();
        bytes.push(0);
        assert!(matches!(EmbeddingMatrix::from_bytes(&bytes), Err(CorpusError::TrailingBytes)));

        assert!(matches!(
            EmbeddingMatrix::new(2, 2, vec!["a".into()], vec![0.0; 3]),
            Err(CorpusError::DimensionMismatch(_))
        ));
        assert!(matches!(
            EmbeddingMatrix::new(1, 1, vec!["a".into(), "a".into()], vec![0.0; 2]),
            Err(CorpusError::DuplicateArticleId(_))
        ));
    }

    #[test]
    fn huge_header_is_truncated_not_oom() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(EMBV_MAGIC);
        for v in [1u32, u32::MAX, 1000, 1000] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(EmbeddingMatrix::from_bytes(&bytes), Err(CorpusError::TruncatedPayload)));
    }

    proptest! {
        #[test]
        fn bit_exact_for_any_floats(raw in proptest::collection::vec(any::<u32>(), 0..64), steps in 1usize..4) {
            let dim = 4;
            let rows = raw.len() / (steps * dim);
            let mut data: Vec<f32> = raw[..rows * steps * dim].iter().map(|b| f32::from_bits(*b)).collect();
            if !data.is_empty() {
                data[0] = -0.0;
            }
            let ids = (0..rows).map(|i| format!("r{i}")).collect();
            let m = EmbeddingMatrix::new(steps, dim, ids, data).unwrap();
            let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
            prop_assert_eq!(bits(&m), bits(&back));
        }
    }
}
