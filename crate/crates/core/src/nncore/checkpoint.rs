//! `NNPK` parameter checkpoints.
//!
//! ```text
//! magic "NNPK" | u32 version=1 | u32 tensor_count
//! per tensor: u16 name_len | name | u8 rank | rank x u32 dims | f32 payload
//! ```
//!
//! Little-endian throughout; tensors appear in store order.

use std::path::Path;

use super::{NnError, ParamStore, Result, Tensor};

pub const NNPK_MAGIC: &[u8; 4] = b"NNPK";
pub const NNPK_VERSION: u32 = 1;

pub fn to_nnpk_bytes(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + store.num_scalars() * 4);
    out.extend_from_slice(NNPK_MAGIC);
    out.extend_from_slice(&NNPK_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for d in t.shape() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(NnError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(NnError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn from_nnpk_bytes(bytes: &[u8]) -> Result<ParamStore> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = c.take(4)?.try_into().expect("4 bytes");
    if &magic != NNPK_MAGIC {
        return Err(NnError::BadMagic(magic));
    }
    let version = c.u32()?;
    if version != NNPK_VERSION {
        return Err(NnError::VersionUnsupported(version));
    }
    let count = c.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let n = u16::from_le_bytes(c.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(c.take(n)?).map_err(|_| NnError::BadName)?.to_string();
        let rank = c.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, d| a.checked_mul(*d))
            .and_then(|n| n.checked_mul(4))
            .ok_or(NnError::Truncated)?;
        let payload = c.take(len)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        store.add(name, Tensor::new(shape, data)?)?;
    }
    if c.pos != bytes.len() {
        return Err(NnError::TrailingBytes);
    }
    Ok(store)
}

pub fn save_nnpk(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_nnpk_bytes(store)).map_err(|source| NnError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_nnpk(path: impl AsRef<Path>) -> Result<ParamStore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| NnError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_nnpk_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(s: &ParamStore) -> Vec<(String, Vec<usize>, Vec<u32>)> {
        s.iter()
            .map(|(_, n, t)| (n.to_string(), t.shape().to_vec(), t.data().iter().map(|x| x.to_bits()).collect()))
            .collect()
    }

    #[test]
    fn round_trip_with_negative_zero() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::matrix(2, 2, vec![-0.0, 1.5, f32::MIN_POSITIVE, -3.0]).unwrap()).unwrap();
        s.add("b", Tensor::vector(vec![0.0, -0.0])).unwrap();
        s.add("empty", Tensor::zeros(&[0, 3])).unwrap();
        let back = from_nnpk_bytes(&to_nnpk_bytes(&s)).unwrap();
        assert_eq!(bits(&s), bits(&back));
    }

    #[test]
    fn rejects_corruption() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let bytes = to_nnpk_bytes(&s);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_nnpk_bytes(&bad), Err(NnError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(from_nnpk_bytes(&bad), Err(NnError::VersionUnsupported(9))));
        assert!(matches!(from_nnpk_bytes(&bytes[..bytes.len() - 2]), Err(NnError::Truncated)));
        let mut bad = bytes.clone();
        bad.push(1);
        assert!(matches!(from_nnpk_bytes(&bad), Err(NnError::TrailingBytes)));
    }

    proptest! {
        #[test]
        fn bit_exact(raw in proptest::collection::vec(any::<u32>(), 1..40), split in 0usize..40) {
            let split = split.min(raw.len());
            let mut s = ParamStore::new();
            s.add("a", Tensor::vector(raw[..split].iter().map(|b| f32::from_bits(*b)).collect())).unwrap();
            s.add("b", Tensor::vector(raw[split..].iter().map(|b| f32::from_bits(*b)).collect())).unwrap();
            let back = from_nnpk_bytes(&to_nnpk_bytes(&s)).unwrap();
            prop_assert_eq!(bits(&s), bits(&back));
        }
    }
}
