use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NnError, Result, Tensor};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named parameter tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
    frozen_rows: Vec<Option<Vec<bool>>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::DuplicateName(name));
        }
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(t);
        self.frozen_rows.push(None);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Marks rows of a matrix parameter as excluded from optimizer updates.
    pub fn set_frozen_rows(&mut self, id: ParamId, rows: Vec<bool>) -> Result<()> {
        if rows.len() != self.get(id).lead() {
            return Err(NnError::ShapeMismatch(format!(
                "{} frozen-row flags for {:?}",
                rows.len(),
                self.get(id).shape()
            )));
        }
        self.frozen_rows[id.0] = rows.iter().any(|f| *f).then_some(rows);
        Ok(())
    }

    pub fn frozen_rows(&self, id: ParamId) -> Option<&[bool]> {
        self.frozen_rows[id.0].as_deref()
    }

    /// Copies every tensor of `other` into the same-named slot here.
    /// Names and shapes must agree one-to-one.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(NnError::ShapeMismatch(format!(
                "expected {} tensors, got {}",
                self.len(),
                other.len()
            )));
        }
        for (_, name, t) in other.iter() {
            let id = self.id(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
            if self.get(id).shape() != t.shape() {
                return Err(NnError::ShapeMismatch(format!(
                    "{name}: expected {:?}, got {:?}",
                    self.get(id).shape(),
                    t.shape()
                )));
            }
            *self.get_mut(id) = t.clone();
        }
        Ok(())
    }
}

/// Seeded parameter initializer.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-s..=s)).collect();
        Tensor::new(shape.to_vec(), data).expect("sized from shape")
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Tensor {
        self.glorot(&[rows, cols], cols, rows)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Fully connected layer `y = x Wᵀ + b`, `W: out x in`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseIds {
    pub w: ParamId,
    pub b: ParamId,
}

impl DenseIds {
    pub fn create(store: &mut ParamStore, init: &mut Initializer, prefix: &str, out: usize, inp: usize) -> Result<Self> {
        Ok(Self {
            w: store.add(format!("{prefix}.w"), init.matrix(out, inp))?,
            b: store.add(format!("{prefix}.b"), Tensor::zeros(&[out]))?,
        })
    }

    pub fn param_count(out: usize, inp: usize) -> usize {
        out * inp + out
    }
}

/// Nine GRU arrays: input weights `H x D`, recurrent weights `H x H`, biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruIds {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
}

impl GruIds {
    pub fn create(store: &mut ParamStore, init: &mut Initializer, prefix: &str, input: usize, hidden: usize) -> Result<Self> {
        let mut w = |s: &mut ParamStore, n: &str, cols: usize| s.add(format!("{prefix}.{n}"), init.matrix(hidden, cols));
        let w_z = w(store, "w_z", input)?;
        let w_r = w(store, "w_r", input)?;
        let w_h = w(store, "w_h", input)?;
        let u_z = w(store, "u_z", hidden)?;
        let u_r = w(store, "u_r", hidden)?;
        let u_h = w(store, "u_h", hidden)?;
        let mut b = |n: &str| store.add(format!("{prefix}.{n}"), Tensor::zeros(&[hidden]));
        Ok(Self {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z: b("b_z")?,
            b_r: b("b_r")?,
            b_h: b("b_h")?,
        })
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        3 * (hidden * input + hidden * hidden + hidden)
    }

    /// `(input, hidden)` sizes, validated across all nine arrays.
    pub fn dims(&self, store: &ParamStore) -> Result<(usize, usize)> {
        let h = store.get(self.b_z).len();
        let d = store.get(self.w_z).last_dim();
        let ok = [self.w_z, self.w_r, self.w_h].iter().all(|id| store.get(*id).shape() == [h, d])
            && [self.u_z, self.u_r, self.u_h].iter().all(|id| store.get(*id).shape() == [h, h])
            && [self.b_z, self.b_r, self.b_h].iter().all(|id| store.get(*id).shape() == [h]);
        if ok {
            Ok((d, h))
        } else {
            Err(NnError::ShapeMismatch("inconsistent GRU parameter shapes".into()))
        }
    }
}

/// Additive attention scoring `s_i = vᵀ tanh(W e_i + b)`, `W: A x E`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionIds {
    pub w: ParamId,
    pub b: ParamId,
    pub v: ParamId,
}

impl AttentionIds {
    pub fn create(store: &mut ParamStore, init: &mut Initializer, prefix: &str, dim: usize, att: usize) -> Result<Self> {
        Ok(Self {
            w: store.add(format!("{prefix}.w"), init.matrix(att, dim))?,
            b: store.add(format!("{prefix}.b"), Tensor::zeros(&[att]))?,
            v: store.add(format!("{prefix}.v"), init.glorot(&[att], att, 1))?,
        })
    }

    pub fn param_count(dim: usize, att: usize) -> usize {
        att * dim + 2 * att
    }
}

/// Gradient of one parameter: dense, or a sparse set of rows.
#[derive(Clone, Debug, PartialEq)]
pub enum GradBuf {
    Dense(Vec<f32>),
    Rows { cols: usize, rows: BTreeMap<usize, Vec<f32>> },
}

impl GradBuf {
    /// Value at flat index `i`.
    pub fn at(&self, i: usize) -> f32 {
        match self {
            GradBuf::Dense(v) => v[i],
            GradBuf::Rows { cols, rows } => rows.get(&(i / cols)).map_or(0.0, |r| r[i % cols]),
        }
    }

    /// Flat indices that may hold a nonzero value.
    pub fn support(&self) -> Vec<usize> {
        match self {
            GradBuf::Dense(v) => (0..v.len()).filter(|i| v[*i] != 0.0).collect(),
            GradBuf::Rows { cols, rows } => rows
                .keys()
                .flat_map(|r| r * cols..(r + 1) * cols)
                .collect(),
        }
    }

    pub fn to_dense(&self, len: usize) -> Vec<f32> {
        match self {
            GradBuf::Dense(v) => v.clone(),
            GradBuf::Rows { cols, rows } => {
                let mut out = vec![0.0; len];
                for (r, vals) in rows {
                    out[r * cols..(r + 1) * cols].copy_from_slice(vals);
                }
                out
            }
        }
    }

    fn values_mut(&mut self) -> Box<dyn Iterator<Item = &mut f32> + '_> {
        match self {
            GradBuf::Dense(v) => Box::new(v.iter_mut()),
            GradBuf::Rows { rows, .. } => Box::new(rows.values_mut().flat_map(|r| r.iter_mut())),
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = &f32> + '_> {
        match self {
            GradBuf::Dense(v) => Box::new(v.iter()),
            GradBuf::Rows { rows, .. } => Box::new(rows.values().flat_map(|r| r.iter())),
        }
    }
}

/// Per-parameter gradients, indexed by [`ParamId`].
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Grads {
    bufs: Vec<Option<GradBuf>>,
}

impl Grads {
    pub fn new(n_params: usize) -> Self {
        Self {
            bufs: vec![None; n_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&GradBuf> {
        self.bufs.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.bufs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bufs.iter().all(Option::is_none)
    }

    /// Dense accumulation slot of `len` values.
    pub fn dense_mut(&mut self, id: ParamId, len: usize) -> &mut [f32] {
        let slot = &mut self.bufs[id.0];
        match slot {
            None => *slot = Some(GradBuf::Dense(vec![0.0; len])),
            Some(GradBuf::Rows { .. }) => {
                let d = slot.as_ref().unwrap().to_dense(len);
                *slot = Some(GradBuf::Dense(d));
            }
            Some(GradBuf::Dense(_)) => {}
        }
        match slot {
            Some(GradBuf::Dense(v)) => v,
            _ => unreachable!(),
        }
    }

    /// Accumulation slot for one row of a matrix parameter.
    pub fn row_mut(&mut self, id: ParamId, cols: usize, row: usize) -> &mut [f32] {
        let slot = self.bufs[id.0].get_or_insert_with(|| GradBuf::Rows {
            cols,
            rows: BTreeMap::new(),
        });
        match slot {
            GradBuf::Dense(v) => &mut v[row * cols..(row + 1) * cols],
            GradBuf::Rows { rows, .. } => rows.entry(row).or_insert_with(|| vec![0.0; cols]),
        }
    }

    /// `self += other`, parameter by parameter.
    pub fn merge(&mut self, other: &Grads) {
        if self.bufs.len() < other.bufs.len() {
            self.bufs.resize(other.bufs.len(), None);
        }
        for (i, b) in other.bufs.iter().enumerate() {
            let Some(b) = b else { continue };
            match b {
                GradBuf::Dense(v) => {
                    let dst = self.dense_mut(ParamId(i), v.len());
                    for (d, x) in dst.iter_mut().zip(v) {
                        *d += x;
                    }
                }
                GradBuf::Rows { cols, rows } => {
                    for (r, vals) in rows {
                        let dst = self.row_mut(ParamId(i), *cols, *r);
                        for (d, x) in dst.iter_mut().zip(vals) {
                            *d += x;
                        }
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, s: f32) {
        for b in self.bufs.iter_mut().flatten() {
            for x in b.values_mut() {
                *x *= s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.bufs.iter().flatten().all(|b| b.values().all(|x| x.is_finite()))
    }

    pub fn sq_norm(&self) -> f64 {
        self.bufs
            .iter()
            .flatten()
            .flat_map(|b| b.values())
            .map(|x| (*x as f64) * (*x as f64))
            .sum()
    }
}
