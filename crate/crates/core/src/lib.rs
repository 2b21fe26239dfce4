//! Financial news classification toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: tagged-article parsing, label sidecars, stratified splits,
//!   corpus statistics and the `EMBV` embedding file format.
//! * [`preprocess`]: tokenization, token classing against a lexicon,
//!   word-context features, a bundled averaged-perceptron POS tagger,
//!   vocabulary building and fixed-length sequence encoding.
//! * [`nncore`]: a small dense tensor type with a reverse-mode tape covering
//!   the layers used here (dense, embedding, GRU, attention, ...), a
//!   finite-difference gradient checker and the `NNPK` checkpoint format.
//! * [`models`]: the dual-branch Bi-GRU classifier (RNN-Plus) and the dense
//!   and attention fine-tuning heads over precomputed embeddings.
//! * [`pipeline`]: mini-batch training with early stopping, Adam/SGD,
//!   evaluation and report rendering.
//!
//! Per-example work inside a mini-batch, evaluation and preprocessing run on
//! rayon when the `parallel` feature is enabled (the default). Reductions are
//! always performed sequentially in input order, so results are bit-identical
//! regardless of thread count.

pub mod corpus;
pub mod models;
pub mod nncore;
pub mod par;
pub mod pipeline;
pub mod preprocess;

pub use corpus::{Article, Label};
