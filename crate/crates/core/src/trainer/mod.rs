//! Multi-task training of one shared encoder with a regression head per
//! corpus, plus prediction (lexical and UNK-ablated) and evaluation.

mod corpus;
mod model;
mod train;

pub use corpus::{
    examples_from_rows, read_corpus, rule_labelled_examples, write_corpus, CorpusRow, CORPUS_COLUMNS,
};
pub use model::{FactualityExample, MultiTaskModel};
pub use train::{
    evaluate, predict_all, predict_unk_ablated, train_multitask, write_log, EpochLog, Evaluation,
    TrainConfig, Trainer,
};

use thiserror::Error;

use crate::factmodels::ModelError;
use crate::gradcore::GradError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("corpus {0} is empty")]
    EmptyCorpus(String),
    #[error("no head for corpus {0}")]
    UnknownHead(String),
    #[error("loss diverged at epoch {epoch}, step {step} (corpus {corpus}, example {example})")]
    Diverged {
        epoch: usize,
        step: usize,
        corpus: String,
        example: String,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("correlation undefined for constant gold (MAE {mae})")]
    UndefinedCorrelation { mae: f64 },
}
