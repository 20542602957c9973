//! Factuality regressors: linear-chain, dependency-tree and hybrid stacked
//! biLSTM encoders over a shared embedding table, plus the two-layer
//! regression head applied at the target predicate.

mod checkpoint;
mod embedding;
mod encoder;
mod model;
mod tree;

pub use checkpoint::{restore, snapshot, Checkpoint, TensorRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use embedding::{embed, EmbeddingTable, Vocabulary, UNK_TOKEN};
pub use encoder::{
    lbilstm_encode, tbilstm_encode, Direction, EncoderParams, EncoderStates, GateParams,
};
pub use model::{predict_factuality, Encoder, ModelConfig, ModelKind, RegressionHead, SentenceInput};
pub use tree::DepTree;

use thiserror::Error;

use crate::gradcore::GradError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("invalid dependency tree: {0}")]
    Tree(String),
    #[error("non-finite activation at position {position}, layer {layer}, direction {direction}")]
    NonFinite {
        position: usize,
        layer: usize,
        direction: &'static str,
    },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("target index {target} out of range for {len} tokens")]
    TargetOutOfRange { target: usize, len: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(String),
}
