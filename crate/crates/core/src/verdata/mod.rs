//! Bleached clause-embedding sentences: the nine syntactic frames, polarity
//! manipulation, inflection, indefinite substitution, TSV/CoNLL-U ingestion
//! and ordinal normalisation of annotator responses.

mod dataset;
mod frames;
mod lexicon;
mod morphology;
mod normalize;

pub use dataset::{
    generate_dataset, load_conllu, load_megaveridicality, parse_conllu, read_annotations,
    read_dataset, read_verb_inventory, write_annotations, write_dataset, AnnotationRecord,
    DatasetRow, Response, ANNOTATION_COLUMNS, DATASET_COLUMNS, INVENTORY_COLUMNS,
};
pub use frames::{
    enumerate_frames, frame_by_id, render_sentence, substitute_indefinites, Eventivity, FrameSpec,
    Polarity, RenderedSentence, Voice,
};
pub use lexicon::{rule_label, signature_of, Signature, FACTIVE_LABEL};
pub use morphology::{inflect, VerbForms};
pub use normalize::{
    fit_ordinal, normalize_responses, normalize_with, raw_mean_scores, NormalizeOptions,
    NormalizedItem, OrdinalFit,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerdataError {
    #[error("no inflection for '{lemma}': {reason}")]
    Morphology { lemma: String, reason: String },
    #[error("duplicate sentence id {0}")]
    Duplicate(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Invalid(String),
    #[error("degenerate responses: {0}")]
    Degenerate(String),
}
