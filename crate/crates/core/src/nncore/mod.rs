//! Dense `f32` tensors with a reverse-mode tape.
//!
//! Only the layers the classifiers need are implemented, each as a fused op
//! with a hand-written backward pass: dense, ReLU, softmax, cross-entropy,
//! embedding lookup, GRU cell, masked GRU over a sequence, single-query
//! additive attention, and a few shape ops. Parameters live in a
//! [`ParamStore`] that a [`Tape`] borrows immutably; the backward pass returns
//! a [`Grads`] value keyed by [`ParamId`].

use std::path::PathBuf;

use thiserror::Error;

mod checkpoint;
mod gradcheck;
mod linalg;
mod params;
mod tape;
mod tensor;

#[cfg(test)]
pub(crate) mod oracle;

pub use checkpoint::{from_nnpk_bytes, load_nnpk, save_nnpk, to_nnpk_bytes, NNPK_MAGIC, NNPK_VERSION};
pub use gradcheck::{grad_check, grad_check_tape, relative_error, GradCheckOptions, GradCheckReport};
pub use params::{AttentionIds, DenseIds, GradBuf, Grads, GruIds, Initializer, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("id {id} out of range for table of {rows} rows")]
    IdOutOfRange { id: u32, rows: usize },
    #[error("every step of the sequence is masked")]
    AllMasked,
    #[error("non-finite value produced by {0}")]
    NonFiniteValue(&'static str),
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    VersionUnsupported(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("trailing bytes after checkpoint payload")]
    TrailingBytes,
    #[error("parameter name is not valid UTF-8")]
    BadName,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, NnError>;
