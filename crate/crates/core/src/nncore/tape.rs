use super::linalg::{add_acc, matvec_acc, matvec_t_acc, outer_acc, sigmoid};
use super::{AttentionIds, DenseIds, Grads, GruIds, NnError, ParamId, ParamStore, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
struct GruStep {
    t: usize,
    h_prev: Vec<f32>,
    z: Vec<f32>,
    r: Vec<f32>,
    hh: Vec<f32>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    ParamValue(ParamId),
    Dense { x: Var, p: DenseIds },
    Relu { x: Var },
    Softmax { x: Var },
    CrossEntropy { p: Var, labels: Vec<usize>, weights: Option<Vec<f32>> },
    Embedding { table: ParamId, ids: Vec<u32> },
    GruCell { x: Var, h: Var, p: GruIds, step: GruStep },
    GruSeq { xs: Var, p: GruIds, steps: Vec<GruStep> },
    Attention { x: Var, p: AttentionIds, alpha: Vec<f32>, act: Vec<Option<Vec<f32>>> },
    Concat { parts: Vec<Var> },
    StackRows { parts: Vec<Var> },
    ReplaceRows { base: Var, rows: Var, positions: Vec<usize> },
    MeanRows { x: Var },
    Reshape { x: Var },
    Dot { x: Var, w: Vec<f32> },
}

/// Records ops over parameters borrowed from a [`ParamStore`].
///
/// Every op checks that its output is finite.
pub struct Tape<'s> {
    store: &'s ParamStore,
    vals: Vec<Tensor>,
    ops: Vec<Op>,
}

fn mismatch(msg: String) -> NnError {
    NnError::ShapeMismatch(msg)
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            vals: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.vals[v.0]
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, t: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !t.is_finite() {
            return Err(NnError::NonFiniteValue(name));
        }
        self.vals.push(t);
        self.ops.push(op);
        Ok(Var(self.vals.len() - 1))
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, "input")
    }

    /// A parameter used directly as a value.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        let t = self.store.get(id).clone();
        self.push(t, Op::ParamValue(id), "param")
    }

    /// `y = x Wᵀ + b` over the last axis of `x`.
    pub fn dense(&mut self, x: Var, p: DenseIds) -> Result<Var> {
        let w = self.store.get(p.w);
        let b = self.store.get(p.b);
        let xv = self.value(x);
        let (out, inp) = match w.shape() {
            [o, i] => (*o, *i),
            s => return Err(mismatch(format!("dense weight shape {s:?}"))),
        };
        if xv.last_dim() != inp || b.shape() != [out] || xv.rank() == 0 {
            return Err(mismatch(format!(
                "dense {out}x{inp} (bias {:?}) applied to {:?}",
                b.shape(),
                xv.shape()
            )));
        }
        let n = xv.lead();
        let mut y = Vec::with_capacity(n * out);
        for i in 0..n {
            let mut row = b.data().to_vec();
            matvec_acc(w.data(), inp, xv.row(i), &mut row);
            y.extend(row);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = out;
        self.push(Tensor::new(shape, y)?, Op::Dense { x, p }, "dense")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let y = xv.data().iter().map(|v| v.max(0.0)).collect();
        let t = Tensor::new(xv.shape().to_vec(), y)?;
        self.push(t, Op::Relu { x }, "relu")
    }

    /// Max-shifted softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.last_dim();
        if c == 0 {
            return Err(mismatch("softmax over an empty axis".into()));
        }
        let mut y = Vec::with_capacity(xv.len());
        for i in 0..xv.lead() {
            y.extend(softmax_row(xv.row(i)));
        }
        let t = Tensor::new(xv.shape().to_vec(), y)?;
        self.push(t, Op::Softmax { x }, "softmax")
    }

    /// Mean over rows of `-w[y] ln p[i, y_i]`; `p` is `N x C`.
    /// Probabilities are clamped to the smallest positive normal float.
    pub fn cross_entropy(&mut self, p: Var, labels: &[usize], weights: Option<&[f32]>) -> Result<Var> {
        let pv = self.value(p);
        let c = pv.last_dim();
        if pv.lead() != labels.len() || labels.is_empty() {
            return Err(mismatch(format!("{} labels for probabilities {:?}", labels.len(), pv.shape())));
        }
        if let Some(w) = weights {
            if w.len() != c {
                return Err(mismatch(format!("{} class weights for {c} classes", w.len())));
            }
        }
        let mut total = 0.0f32;
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(NnError::LabelOutOfRange { label: y, classes: c });
            }
            let w = weights.map_or(1.0, |w| w[y]);
            total += -w * pv.row(i)[y].max(f32::MIN_POSITIVE).ln();
        }
        let loss = total / labels.len() as f32;
        let op = Op::CrossEntropy {
            p,
            labels: labels.to_vec(),
            weights: weights.map(<[f32]>::to_vec),
        };
        self.push(Tensor::scalar(loss), op, "cross_entropy")
    }

    /// Gathers rows of an `V x E` table.
    pub fn embedding(&mut self, table: ParamId, ids: &[u32]) -> Result<Var> {
        let t = self.store.get(table);
        if t.rank() != 2 {
            return Err(mismatch(format!("embedding table shape {:?}", t.shape())));
        }
        let (v, e) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            if id as usize >= v {
                return Err(NnError::IdOutOfRange { id, rows: v });
            }
            out.extend_from_slice(t.row(id as usize));
        }
        let y = Tensor::matrix(ids.len(), e, out)?;
        self.push(y, Op::Embedding { table, ids: ids.to_vec() }, "embedding")
    }

    /// One GRU step from `h` on input `x`.
    pub fn gru_cell(&mut self, x: Var, h: Var, p: GruIds) -> Result<Var> {
        let (d, hd) = p.dims(self.store)?;
        let (xv, hv) = (self.value(x), self.value(h));
        if xv.len() != d || hv.len() != hd {
            return Err(mismatch(format!(
                "GRU {d}->{hd} applied to x {:?}, h {:?}",
                xv.shape(),
                hv.shape()
            )));
        }
        let step = gru_forward(self.store, &p, 0, xv.data(), hv.data());
        let h_new = Tensor::vector(next_state(&step));
        self.push(h_new, Op::GruCell { x, h, p, step }, "gru_cell")
    }

    /// Runs a GRU from a zero state over the rows of `xs` (`T x D`), skipping
    /// masked steps, and returns the final state. `reverse` reads `T..1`.
    pub fn gru_seq(&mut self, xs: Var, mask: &[bool], p: GruIds, reverse: bool) -> Result<Var> {
        let (d, hd) = p.dims(self.store)?;
        let xv = self.value(xs);
        if xv.rank() != 2 || xv.last_dim() != d || xv.lead() != mask.len() {
            return Err(mismatch(format!(
                "GRU input {:?} with {} mask entries, expected T x {d}",
                xv.shape(),
                mask.len()
            )));
        }
        if !mask.iter().any(|m| *m) {
            return Err(NnError::AllMasked);
        }
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..mask.len()).rev())
        } else {
            Box::new(0..mask.len())
        };
        let mut h = vec![0.0; hd];
        let mut steps = Vec::new();
        for t in order.filter(|t| mask[*t]) {
            let step = gru_forward(self.store, &p, t, xv.row(t), &h);
            h = next_state(&step);
            steps.push(step);
        }
        self.push(Tensor::vector(h), Op::GruSeq { xs, p, steps }, "gru_seq")
    }

    /// Concatenated final states of a forward and a backward GRU.
    pub fn bigru(&mut self, xs: Var, mask: &[bool], fwd: GruIds, bwd: GruIds) -> Result<Var> {
        let f = self.gru_seq(xs, mask, fwd, false)?;
        let b = self.gru_seq(xs, mask, bwd, true)?;
        self.concat(&[f, b])
    }

    /// Attention pooling of the rows of `x` (`S x E`). Masked rows get zero
    /// weight. Returns the pooled vector and the weights.
    pub fn attention(&mut self, x: Var, mask: &[bool], p: AttentionIds) -> Result<(Var, Vec<f32>)> {
        let (w, b, v) = (self.store.get(p.w), self.store.get(p.b), self.store.get(p.v));
        let xv = self.value(x);
        let (a, e) = match w.shape() {
            [a, e] => (*a, *e),
            s => return Err(mismatch(format!("attention weight shape {s:?}"))),
        };
        if xv.rank() != 2 || xv.last_dim() != e || xv.lead() != mask.len() || b.shape() != [a] || v.shape() != [a] {
            return Err(mismatch(format!(
                "attention {a}x{e} over {:?} with {} mask entries",
                xv.shape(),
                mask.len()
            )));
        }
        if !mask.iter().any(|m| *m) {
            return Err(NnError::AllMasked);
        }
        let mut act = Vec::with_capacity(mask.len());
        let mut scores = Vec::new();
        for (i, m) in mask.iter().enumerate() {
            if !m {
                act.push(None);
                continue;
            }
            let mut u = b.data().to_vec();
            matvec_acc(w.data(), e, xv.row(i), &mut u);
            u.iter_mut().for_each(|x| *x = x.tanh());
            scores.push(u.iter().zip(v.data()).map(|(a, b)| a * b).sum::<f32>());
            act.push(Some(u));
        }
        let weights = softmax_row(&scores);
        let mut alpha = vec![0.0; mask.len()];
        let mut k = 0;
        for (i, m) in mask.iter().enumerate() {
            if *m {
                alpha[i] = weights[k];
                k += 1;
            }
        }
        let mut out = vec![0.0; e];
        for (i, ai) in alpha.iter().enumerate() {
            if mask[i] {
                for (o, xi) in out.iter_mut().zip(xv.row(i)) {
                    *o += ai * xi;
                }
            }
        }
        let op = Op::Attention {
            x,
            p,
            alpha: alpha.clone(),
            act,
        };
        let var = self.push(Tensor::vector(out), op, "attention")?;
        Ok((var, alpha))
    }

    /// Concatenation along the last axis; leading shapes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| mismatch("concat of nothing".into()))?;
        let lead_shape = {
            let s = self.value(*first).shape();
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let mut width = 0;
        for p in parts {
            let s = self.value(*p).shape();
            if s.is_empty() || s[..s.len() - 1] != lead_shape[..] {
                return Err(mismatch(format!("concat part {s:?} vs leading {lead_shape:?}")));
            }
            width += s[s.len() - 1];
        }
        let n: usize = lead_shape.iter().product();
        let mut out = Vec::with_capacity(n * width);
        for i in 0..n {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(i));
            }
        }
        let mut shape = lead_shape;
        shape.push(width);
        let t = Tensor::new(shape, out)?;
        self.push(t, Op::Concat { parts: parts.to_vec() }, "concat")
    }

    /// Stacks equally sized values as rows of an `S x E` matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let e = parts.first().map_or(0, |p| self.value(*p).len());
        let mut out = Vec::with_capacity(parts.len() * e);
        for p in parts {
            let v = self.value(*p);
            if v.len() != e {
                return Err(mismatch(format!("stack of {} and {} values", e, v.len())));
            }
            out.extend_from_slice(v.data());
        }
        let t = Tensor::matrix(parts.len(), e, out)?;
        self.push(t, Op::StackRows { parts: parts.to_vec() }, "stack_rows")
    }

    /// Copy of `base` (`N x E`) with row `positions[j]` replaced by row `j` of `rows`.
    pub fn replace_rows(&mut self, base: Var, rows: Var, positions: &[usize]) -> Result<Var> {
        let (bv, rv) = (self.value(base), self.value(rows));
        let e = bv.last_dim();
        if bv.rank() != 2 || rv.rank() != 2 || rv.last_dim() != e || rv.lead() != positions.len() {
            return Err(mismatch(format!(
                "replace {:?} rows at {} positions of {:?}",
                rv.shape(),
                positions.len(),
                bv.shape()
            )));
        }
        let mut seen = vec![false; bv.lead()];
        let mut out = bv.data().to_vec();
        for (j, &pos) in positions.iter().enumerate() {
            if pos >= bv.lead() || std::mem::replace(&mut seen[pos], true) {
                return Err(mismatch(format!("bad replacement position {pos}")));
            }
            out[pos * e..(pos + 1) * e].copy_from_slice(rv.row(j));
        }
        let t = Tensor::new(bv.shape().to_vec(), out)?;
        let op = Op::ReplaceRows {
            base,
            rows,
            positions: positions.to_vec(),
        };
        self.push(t, op, "replace_rows")
    }

    /// Mean of the rows of an `N x E` matrix, `N >= 1`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, e) = (xv.lead(), xv.last_dim());
        if xv.rank() != 2 || n == 0 {
            return Err(mismatch(format!("mean over rows of {:?}", xv.shape())));
        }
        let mut out = vec![0.0; e];
        for i in 0..n {
            add_acc(&mut out, xv.row(i));
        }
        let inv = 1.0 / n as f32;
        out.iter_mut().for_each(|o| *o *= inv);
        self.push(Tensor::vector(out), Op::MeanRows { x }, "mean_rows")
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        self.push(t, Op::Reshape { x }, "reshape")
    }

    /// Scalar `Σ w_i x_i`.
    pub fn dot(&mut self, x: Var, w: Vec<f32>) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != w.len() {
            return Err(mismatch(format!("dot of {} and {} values", xv.len(), w.len())));
        }
        let s = xv.data().iter().zip(&w).map(|(a, b)| a * b).sum::<f32>();
        self.push(Tensor::scalar(s), Op::Dot { x, w }, "dot")
    }

    /// Gradients of the scalar `loss` with respect to every parameter reached.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).len() != 1 {
            return Err(mismatch(format!("backward from non-scalar {:?}", self.value(loss).shape())));
        }
        let mut vg: Vec<Option<Vec<f32>>> = vec![None; self.vals.len()];
        vg[loss.0] = Some(vec![1.0]);
        let mut pg = Grads::new(self.store.len());
        for i in (0..=loss.0).rev() {
            let Some(g) = vg[i].take() else { continue };
            self.backward_op(i, &g, &mut vg, &mut pg);
        }
        if !pg.all_finite() {
            return Err(NnError::NonFiniteValue("backward"));
        }
        Ok(pg)
    }

    fn backward_op(&self, i: usize, g: &[f32], vg: &mut [Option<Vec<f32>>], pg: &mut Grads) {
        let s = self.store;
        match &self.ops[i] {
            Op::Leaf => {}
            Op::ParamValue(id) => add_acc(pg.dense_mut(*id, g.len()), g),
            Op::Dense { x, p } => {
                let w = s.get(p.w);
                let (out, inp) = (w.shape()[0], w.shape()[1]);
                let xv = self.value(*x);
                let gx = slot(vg, *x, xv.len());
                for (r, gr) in g.chunks_exact(out).enumerate() {
                    matvec_t_acc(w.data(), inp, gr, &mut gx[r * inp..(r + 1) * inp]);
                }
                let gw = pg.dense_mut(p.w, out * inp);
                for (r, gr) in g.chunks_exact(out).enumerate() {
                    outer_acc(gw, gr, xv.row(r));
                }
                let gb = pg.dense_mut(p.b, out);
                for gr in g.chunks_exact(out) {
                    add_acc(gb, gr);
                }
            }
            Op::Relu { x } => {
                let xv = self.value(*x);
                let gx = slot(vg, *x, xv.len());
                for ((o, xi), gi) in gx.iter_mut().zip(xv.data()).zip(g) {
                    if *xi > 0.0 {
                        *o += gi;
                    }
                }
            }
            Op::Softmax { x } => {
                let y = &self.vals[i];
                let c = y.last_dim();
                let gx = slot(vg, *x, y.len());
                for r in 0..y.lead() {
                    let (yr, gr) = (y.row(r), &g[r * c..(r + 1) * c]);
                    let dot: f32 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for k in 0..c {
                        gx[r * c + k] += yr[k] * (gr[k] - dot);
                    }
                }
            }
            Op::CrossEntropy { p, labels, weights } => {
                let pv = self.value(*p);
                let c = pv.last_dim();
                let n = labels.len() as f32;
                let gp = slot(vg, *p, pv.len());
                for (r, &y) in labels.iter().enumerate() {
                    let w = weights.as_ref().map_or(1.0, |w| w[y]);
                    let prob = pv.row(r)[y];
                    if prob >= f32::MIN_POSITIVE {
                        gp[r * c + y] += -g[0] * w / (n * prob);
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let e = s.get(*table).last_dim();
                for (r, &id) in ids.iter().enumerate() {
                    add_acc(pg.row_mut(*table, e, id as usize), &g[r * e..(r + 1) * e]);
                }
            }
            Op::GruCell { x, h, p, step } => {
                let (xv, hv) = (self.value(*x), self.value(*h));
                let mut gx = vec![0.0; xv.len()];
                let gh = gru_backward(s, p, step, xv.data(), g, &mut gx, pg);
                add_acc(slot(vg, *x, xv.len()), &gx);
                add_acc(slot(vg, *h, hv.len()), &gh);
            }
            Op::GruSeq { xs, p, steps } => {
                let xv = self.value(*xs);
                let d = xv.last_dim();
                let mut gx = vec![0.0; xv.len()];
                let mut gh = g.to_vec();
                for step in steps.iter().rev() {
                    let t = step.t;
                    gh = gru_backward(s, p, step, xv.row(t), &gh, &mut gx[t * d..(t + 1) * d], pg);
                }
                add_acc(slot(vg, *xs, xv.len()), &gx);
            }
            Op::Attention { x, p, alpha, act } => {
                let xv = self.value(*x);
                let (w, v) = (s.get(p.w), s.get(p.v));
                let (a, e) = (w.shape()[0], w.shape()[1]);
                let d_alpha: Vec<f32> = (0..alpha.len())
                    .map(|r| xv.row(r).iter().zip(g).map(|(a, b)| a * b).sum())
                    .collect();
                let mean: f32 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
                let mut gx = vec![0.0; xv.len()];
                let mut gw = vec![0.0; a * e];
                let mut gb = vec![0.0; a];
                let mut gv = vec![0.0; a];
                for (r, u) in act.iter().enumerate() {
                    let Some(u) = u else { continue };
                    let gxr = &mut gx[r * e..(r + 1) * e];
                    for (o, gi) in gxr.iter_mut().zip(g) {
                        *o += alpha[r] * gi;
                    }
                    let ds = alpha[r] * (d_alpha[r] - mean);
                    let mut da = vec![0.0; a];
                    for k in 0..a {
                        gv[k] += ds * u[k];
                        da[k] = ds * v.data()[k] * (1.0 - u[k] * u[k]);
                    }
                    outer_acc(&mut gw, &da, xv.row(r));
                    add_acc(&mut gb, &da);
                    matvec_t_acc(w.data(), e, &da, gxr);
                }
                add_acc(slot(vg, *x, xv.len()), &gx);
                add_acc(pg.dense_mut(p.w, a * e), &gw);
                add_acc(pg.dense_mut(p.b, a), &gb);
                add_acc(pg.dense_mut(p.v, a), &gv);
            }
            Op::Concat { parts } => {
                let width = self.vals[i].last_dim();
                let rows = self.vals[i].lead();
                let mut off = 0;
                for p in parts {
                    let pv = self.value(*p);
                    let c = pv.last_dim();
                    let gp = slot(vg, *p, pv.len());
                    for r in 0..rows {
                        add_acc(&mut gp[r * c..(r + 1) * c], &g[r * width + off..r * width + off + c]);
                    }
                    off += c;
                }
            }
            Op::StackRows { parts } => {
                let e = self.vals[i].last_dim();
                for (r, p) in parts.iter().enumerate() {
                    add_acc(slot(vg, *p, e), &g[r * e..(r + 1) * e]);
                }
            }
            Op::ReplaceRows { base, rows, positions } => {
                let bv = self.value(*base);
                let e = bv.last_dim();
                let mut gb = g.to_vec();
                let mut gr = vec![0.0; positions.len() * e];
                for (j, &pos) in positions.iter().enumerate() {
                    gr[j * e..(j + 1) * e].copy_from_slice(&g[pos * e..(pos + 1) * e]);
                    gb[pos * e..(pos + 1) * e].iter_mut().for_each(|x| *x = 0.0);
                }
                add_acc(slot(vg, *base, bv.len()), &gb);
                add_acc(slot(vg, *rows, gr.len()), &gr);
            }
            Op::MeanRows { x } => {
                let xv = self.value(*x);
                let inv = 1.0 / xv.lead() as f32;
                let e = xv.last_dim();
                let gx = slot(vg, *x, xv.len());
                for r in 0..xv.lead() {
                    for k in 0..e {
                        gx[r * e + k] += g[k] * inv;
                    }
                }
            }
            Op::Reshape { x } => add_acc(slot(vg, *x, g.len()), g),
            Op::Dot { x, w } => {
                let gx = slot(vg, *x, w.len());
                for (o, wi) in gx.iter_mut().zip(w) {
                    *o += g[0] * wi;
                }
            }
        }
    }
}

fn slot(vg: &mut [Option<Vec<f32>>], v: Var, len: usize) -> &mut [f32] {
    vg[v.0].get_or_insert_with(|| vec![0.0; len])
}

pub(crate) fn softmax_row(x: &[f32]) -> Vec<f32> {
    let m = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let e: Vec<f32> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f32 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn gru_forward(s: &ParamStore, p: &GruIds, t: usize, x: &[f32], h: &[f32]) -> GruStep {
    let hd = h.len();
    let d = x.len();
    let gate = |w: ParamId, u: ParamId, b: ParamId, hin: &[f32]| -> Vec<f32> {
        let mut a = s.get(b).data().to_vec();
        matvec_acc(s.get(w).data(), d, x, &mut a);
        matvec_acc(s.get(u).data(), hd, hin, &mut a);
        a
    };
    let z: Vec<f32> = gate(p.w_z, p.u_z, p.b_z, h).into_iter().map(sigmoid).collect();
    let r: Vec<f32> = gate(p.w_r, p.u_r, p.b_r, h).into_iter().map(sigmoid).collect();
    let rh: Vec<f32> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let hh: Vec<f32> = gate(p.w_h, p.u_h, p.b_h, &rh).into_iter().map(f32::tanh).collect();
    GruStep {
        t,
        h_prev: h.to_vec(),
        z,
        r,
        hh,
    }
}

fn next_state(st: &GruStep) -> Vec<f32> {
    (0..st.z.len())
        .map(|k| (1.0 - st.z[k]) * st.h_prev[k] + st.z[k] * st.hh[k])
        .collect()
}

/// Backward through one GRU step. Adds the input gradient into `gx`,
/// parameter gradients into `pg`, and returns the gradient on `h_prev`.
fn gru_backward(s: &ParamStore, p: &GruIds, st: &GruStep, x: &[f32], gh: &[f32], gx: &mut [f32], pg: &mut Grads) -> Vec<f32> {
    let hd = gh.len();
    let d = x.len();
    let h = &st.h_prev;
    let mut da_z = vec![0.0; hd];
    let mut da_h = vec![0.0; hd];
    let mut dh = vec![0.0; hd];
    for k in 0..hd {
        let (z, hh) = (st.z[k], st.hh[k]);
        da_z[k] = gh[k] * (hh - h[k]) * z * (1.0 - z);
        da_h[k] = gh[k] * z * (1.0 - hh * hh);
        dh[k] = gh[k] * (1.0 - z);
    }
    let mut d_rh = vec![0.0; hd];
    matvec_t_acc(s.get(p.u_h).data(), hd, &da_h, &mut d_rh);
    let mut da_r = vec![0.0; hd];
    for k in 0..hd {
        let r = st.r[k];
        da_r[k] = d_rh[k] * h[k] * r * (1.0 - r);
        dh[k] += d_rh[k] * r;
    }
    matvec_t_acc(s.get(p.u_z).data(), hd, &da_z, &mut dh);
    matvec_t_acc(s.get(p.u_r).data(), hd, &da_r, &mut dh);
    matvec_t_acc(s.get(p.w_z).data(), d, &da_z, gx);
    matvec_t_acc(s.get(p.w_r).data(), d, &da_r, gx);
    matvec_t_acc(s.get(p.w_h).data(), d, &da_h, gx);

    let rh: Vec<f32> = st.r.iter().zip(h).map(|(a, b)| a * b).collect();
    outer_acc(pg.dense_mut(p.w_z, hd * d), &da_z, x);
    outer_acc(pg.dense_mut(p.w_r, hd * d), &da_r, x);
    outer_acc(pg.dense_mut(p.w_h, hd * d), &da_h, x);
    outer_acc(pg.dense_mut(p.u_z, hd * hd), &da_z, h);
    outer_acc(pg.dense_mut(p.u_r, hd * hd), &da_r, h);
    outer_acc(pg.dense_mut(p.u_h, hd * hd), &da_h, &rh);
    add_acc(pg.dense_mut(p.b_z, hd), &da_z);
    add_acc(pg.dense_mut(p.b_r, hd), &da_r);
    add_acc(pg.dense_mut(p.b_h, hd), &da_h);
    dh
}
