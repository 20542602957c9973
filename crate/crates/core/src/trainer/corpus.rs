use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::model::FactualityExample;
use super::TrainError;
use crate::factmodels::{DepTree, SentenceInput};
use crate::verdata::{rule_label, signature_of, DatasetRow, RenderedSentence};

pub const CORPUS_COLUMNS: [&str; 6] = [
    "sentence_id",
    "dataset_tag",
    "tokens",
    "head_of",
    "target_index",
    "gold",
];

/// One line of the corpus TSV. `tokens` is space-separated; `head_of` is
/// comma-separated 1-based heads with 0 for the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub sentence_id: String,
    pub dataset_tag: String,
    pub tokens: String,
    pub head_of: String,
    pub target_index: usize,
    pub gold: f64,
}

impl CorpusRow {
    pub fn from_example(ex: &FactualityExample) -> Self {
        CorpusRow {
            sentence_id: ex.id.clone(),
            dataset_tag: ex.dataset_tag.clone(),
            tokens: ex.input.tokens.join(" "),
            head_of: ex
                .input
                .tree
                .conll_heads()
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
            target_index: ex.input.target_index,
            gold: ex.gold,
        }
    }

    pub fn to_example(&self) -> Result<FactualityExample, TrainError> {
        let data_err = |m: String| TrainError::Data(format!("{}: {m}", self.sentence_id));
        let tokens: Vec<String> = self.tokens.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
        let heads = self
            .head_of
            .split(',')
            .map(|h| h.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| data_err(format!("bad head_of: {e}")))?;
        let tree = DepTree::from_conll_heads(&heads).map_err(|e| data_err(e.to_string()))?;
        let input = SentenceInput::new(tokens, tree, self.target_index).map_err(|e| data_err(e.to_string()))?;
        FactualityExample::new(self.sentence_id.clone(), input, self.gold, self.dataset_tag.clone())
    }
}

/// Reads a corpus TSV; errors name the offending line.
pub fn read_corpus<R: Read>(reader: R) -> Result<Vec<FactualityExample>, TrainError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| TrainError::Data(format!("line 1: {e}")))?
        .clone();
    if header.iter().collect::<Vec<_>>() != CORPUS_COLUMNS {
        return Err(TrainError::Data(format!(
            "line 1: expected columns {CORPUS_COLUMNS:?}"
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CorpusRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| TrainError::Data(format!("line {line}: {e}")))?;
        out.push(row.to_example().map_err(|e| TrainError::Data(format!("line {line}: {e}")))?);
    }
    Ok(out)
}

pub fn write_corpus<W: Write>(writer: W, examples: &[FactualityExample]) -> Result<(), TrainError> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .has_headers(false)
        .from_writer(writer);
    let io = |e: csv::Error| TrainError::Data(e.to_string());
    wtr.write_record(CORPUS_COLUMNS).map_err(io)?;
    for ex in examples {
        wtr.serialize(CorpusRow::from_example(ex)).map_err(io)?;
    }
    wtr.flush().map_err(|e| TrainError::Data(e.to_string()))
}

/// Dataset rows with gold values as examples tagged `tag`. A row without gold
/// is an error.
pub fn examples_from_rows(rows: &[DatasetRow], tag: &str) -> Result<Vec<FactualityExample>, TrainError> {
    rows.iter()
        .map(|row| {
            let gold = row
                .gold_factuality
                .ok_or_else(|| TrainError::Data(format!("{}: missing gold factuality", row.sentence_id)))?;
            let rendered = row
                .to_rendered()
                .map_err(|e| TrainError::Data(e.to_string()))?;
            FactualityExample::new(row.sentence_id.clone(), rendered.to_input(), gold, tag)
        })
        .collect()
}

/// Examples labelled by the verb's inference signature and matrix polarity.
pub fn rule_labelled_examples(sentences: &[RenderedSentence], tag: &str) -> Vec<FactualityExample> {
    sentences
        .iter()
        .map(|s| FactualityExample {
            id: s.id.clone(),
            input: s.to_input(),
            gold: rule_label(signature_of(&s.verb), s.polarity),
            dataset_tag: tag.to_string(),
        })
        .collect()
}
