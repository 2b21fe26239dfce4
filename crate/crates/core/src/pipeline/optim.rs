use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::nncore::{GradBuf, Grads, ParamId, ParamStore};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments per parameter, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// Calls `f(flat_index, gradient)` for each stored coordinate of `buf` that
/// is nonzero and not in a frozen row.
fn for_each_coord(buf: &GradBuf, len: usize, cols: usize, frozen: Option<&[bool]>, mut f: impl FnMut(usize, f32)) {
    let live = |i: usize| frozen.is_none_or(|fr| !fr[i / cols]);
    match buf {
        GradBuf::Dense(g) => {
            for (i, gi) in g.iter().enumerate().take(len) {
                if *gi != 0.0 && live(i) {
                    f(i, *gi);
                }
            }
        }
        GradBuf::Rows { cols: c, rows } => {
            for (r, vals) in rows {
                for (j, gi) in vals.iter().enumerate() {
                    let i = r * c + j;
                    if *gi != 0.0 && live(i) {
                        f(i, *gi);
                    }
                }
            }
        }
    }
}

fn check_shapes(params: &ParamStore, grads: &Grads) -> Result<()> {
    if grads.len() > params.len() {
        return Err(PipelineError::ShapeMismatch(format!(
            "{} gradient slots for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for id in params.ids().take(grads.len()) {
        let len = params.get(id).len();
        let ok = match grads.get(id) {
            None => true,
            Some(GradBuf::Dense(g)) => g.len() == len,
            Some(GradBuf::Rows { cols, rows }) => {
                *cols == params.get(id).last_dim() && rows.keys().all(|r| (r + 1) * cols <= len)
            }
        };
        if !ok {
            return Err(PipelineError::ShapeMismatch(format!("gradient for {}", params.name(id))));
        }
    }
    Ok(())
}

fn frozen_and_cols(params: &ParamStore, id: ParamId) -> (Option<&[bool]>, usize) {
    let t = params.get(id);
    (params.frozen_rows(id), t.last_dim().max(1))
}

/// `θ ← θ − lr·g`, skipping frozen rows.
pub fn sgd_step(params: &mut ParamStore, grads: &Grads, lr: f64) -> Result<()> {
    check_shapes(params, grads)?;
    for id in params.ids().take(grads.len()).collect::<Vec<_>>() {
        let Some(buf) = grads.get(id) else { continue };
        let (frozen, cols) = frozen_and_cols(params, id);
        let frozen = frozen.map(<[bool]>::to_vec);
        let len = params.get(id).len();
        let data = params.get_mut(id).data_mut();
        for_each_coord(buf, len, cols, frozen.as_deref(), |i, g| {
            data[i] = (data[i] as f64 - lr * g as f64) as f32;
        });
    }
    Ok(())
}

/// Bias-corrected Adam update. Coordinates whose gradient is exactly zero
/// (and frozen rows) keep their value and moments; the step count always
/// advances.
pub fn adam_step(params: &mut ParamStore, grads: &Grads, state: &mut AdamState, cfg: &AdamConfig, lr: f64) -> Result<()> {
    check_shapes(params, grads)?;
    let fits = state.m.len() == params.len()
        && params
            .iter()
            .zip(state.m.iter().zip(&state.v))
            .all(|((_, _, t), (m, v))| m.len() == t.len() && v.len() == t.len());
    if !fits {
        return Err(PipelineError::ShapeMismatch("optimizer state does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for id in params.ids().take(grads.len()).collect::<Vec<_>>() {
        let Some(buf) = grads.get(id) else { continue };
        let (frozen, cols) = frozen_and_cols(params, id);
        let frozen = frozen.map(<[bool]>::to_vec);
        let len = params.get(id).len();
        let data = params.get_mut(id).data_mut();
        let (m, v) = (&mut state.m[id.0], &mut state.v[id.0]);
        for_each_coord(buf, len, cols, frozen.as_deref(), |i, g| {
            let g = g as f64;
            let mi = b1 * m[i] as f64 + (1.0 - b1) * g;
            let vi = b2 * v[i] as f64 + (1.0 - b2) * g * g;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + cfg.epsilon);
            data[i] = (data[i] as f64 - update) as f32;
        });
    }
    Ok(())
}
