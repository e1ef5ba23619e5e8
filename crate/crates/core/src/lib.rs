//! Compositional vector-space models: WSABIE frame identification,
//! CCG-conditioned recursive autoencoders, and multilingual compositional
//! sentence and document embeddings, with the optimizers, tree
//! backpropagation and evaluation code they share.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bicvm;
pub mod checkpoint;
pub mod compose;
pub mod error;
pub mod evalkit;
pub mod frameid;
pub mod gradcheck;
pub mod io;
pub mod lexicon;
pub mod numerics;
pub mod optimize;
pub mod treegrad;

pub use error::{Error, Result};
pub use lexicon::{EmbeddingTable, UnknownPolicy, Vocab};
pub use numerics::{DenseMatrix, DenseVector, RngStream};
pub use optimize::ParamVector;
