//! Training and analysis toolkit for shallow log-bilinear word embeddings.
//!
//! Three architectures share one code path:
//!
//! * the subword model, where a word's input vector is the sum of its
//!   character n-gram vectors and the context vector is their plain mean;
//! * the positional model, where every context word is reweighted
//!   elementwise by a learned vector tied to its relative position;
//! * the constrained positional model, where only the first `D'` features
//!   are position dependent and the remaining ones pass through unweighted.
//!
//! The crate covers corpus ingestion ([`corpus`]), n-gram hashing
//! ([`subword`]), the forward math ([`model`]), initialization ([`init`]),
//! lock-free negative-sampling SGD ([`trainer`]), evaluation and
//! introspection ([`eval`]) and model persistence ([`io`]).

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod init;
pub mod io;
pub mod matrix;
pub mod model;
pub mod subword;
pub mod trainer;

pub use embedding::Model;
pub use corpus::{build_vocab, discard_prob, subsampled_stream, tokenize, Vocab};
pub use error::{Error, Result};
pub use init::{init_model, InitScheme};
pub use matrix::{Matrix, Real};
pub use model::{ContextSlot, ModelKind, ModelParams};
pub use subword::{SubwordIndex, SubwordTable};
pub use trainer::{train, TrainConfig, TrainedModel, TrainingLog, WindowMode};
