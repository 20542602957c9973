use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::frames::{frame_by_id, render_sentence, FrameSpec, Polarity, RenderedSentence};
use super::VerdataError;
use crate::factmodels::{DepTree, SentenceInput};

pub const DATASET_COLUMNS: [&str; 9] = [
    "sentence_id",
    "verb",
    "frame_id",
    "polarity",
    "sentence",
    "verb_index",
    "target_index",
    "question",
    "gold_factuality",
];

pub const ANNOTATION_COLUMNS: [&str; 3] = ["sentence_id", "annotator_id", "response"];

pub const INVENTORY_COLUMNS: [&str; 2] = ["verb", "frame_id"];

/// Two sentences (positive, negative) per verb-frame pair, in input order.
pub fn generate_dataset(pairs: &[(String, &FrameSpec)]) -> Result<Vec<RenderedSentence>, VerdataError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(2 * pairs.len());
    for (verb, frame) in pairs {
        for polarity in [Polarity::Positive, Polarity::Negative] {
            let s = render_sentence(verb, frame, polarity)?;
            if !seen.insert(s.id.clone()) {
                return Err(VerdataError::Duplicate(s.id));
            }
            out.push(s);
        }
    }
    Ok(out)
}

/// One row of the dataset TSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub sentence_id: String,
    pub verb: String,
    pub frame_id: String,
    pub polarity: Polarity,
    pub sentence: String,
    pub verb_index: usize,
    pub target_index: usize,
    pub question: String,
    pub gold_factuality: Option<f64>,
}

impl DatasetRow {
    pub fn from_rendered(s: &RenderedSentence, gold: Option<f64>) -> Self {
        DatasetRow {
            sentence_id: s.id.clone(),
            verb: s.verb.clone(),
            frame_id: s.frame_id.clone(),
            polarity: s.polarity,
            sentence: s.text(),
            verb_index: s.verb_index,
            target_index: s.target_index,
            question: s.question.clone(),
            gold_factuality: gold,
        }
    }

    pub fn tokens(&self) -> Vec<String> {
        self.sentence.split_whitespace().map(str::to_string).collect()
    }

    /// Recovers the dependency structure from the frame skeleton, checking
    /// that the row's tokens and indices agree with it.
    pub fn to_rendered(&self) -> Result<RenderedSentence, VerdataError> {
        let frame = frame_by_id(&self.frame_id)?;
        let tokens = self.tokens();
        let candidates = [frame.skeleton(self.polarity, true), frame.skeleton(self.polarity, false)];
        let skeleton = candidates
            .into_iter()
            .find(|s| s.tokens.len() == tokens.len())
            .ok_or_else(|| {
                VerdataError::Invalid(format!(
                    "{}: {} tokens do not fit frame '{}'",
                    self.sentence_id,
                    tokens.len(),
                    frame.id
                ))
            })?;
        let fixed_mismatch = skeleton
            .tokens
            .iter()
            .zip(&tokens)
            .enumerate()
            .any(|(i, (a, b))| i != skeleton.verb_index && a != b);
        if fixed_mismatch
            || skeleton.verb_index != self.verb_index
            || skeleton.target_index != self.target_index
        {
            return Err(VerdataError::Invalid(format!(
                "{}: sentence '{}' does not match frame '{}'",
                self.sentence_id, self.sentence, frame.id
            )));
        }
        Ok(RenderedSentence {
            id: self.sentence_id.clone(),
            verb: self.verb.clone(),
            frame_id: frame.id.to_string(),
            polarity: self.polarity,
            tokens,
            heads: skeleton.heads,
            verb_index: self.verb_index,
            target_index: self.target_index,
            question: self.question.clone(),
        })
    }
}

fn tsv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(reader)
}

fn tsv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(writer)
}

fn csv_error(e: csv::Error) -> VerdataError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    VerdataError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Reads a headed TSV whose header must be exactly `columns`. An empty
/// input is an empty table.
fn read_tsv<T: DeserializeOwned, R: Read>(reader: R, columns: &[&str]) -> Result<Vec<T>, VerdataError> {
    let mut rdr = tsv_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Ok(Vec::new());
    }
    let found: Vec<&str> = header.iter().collect();
    if found != columns {
        return Err(VerdataError::Parse {
            line: 1,
            message: format!("expected columns {columns:?}, found {found:?}"),
        });
    }
    rdr.deserialize().map(|r| r.map_err(csv_error)).collect()
}

fn write_tsv<T: Serialize, W: Write>(writer: W, columns: &[&str], rows: &[T]) -> Result<(), VerdataError> {
    let mut wtr = tsv_writer(writer);
    if rows.is_empty() {
        wtr.write_record(columns).map_err(csv_error)?;
    }
    for row in rows {
        wtr.serialize(row).map_err(csv_error)?;
    }
    wtr.flush().map_err(|e| VerdataError::Io(e.to_string()))
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<DatasetRow>, VerdataError> {
    let rows: Vec<DatasetRow> = read_tsv(reader, &DATASET_COLUMNS)?;
    for (i, row) in rows.iter().enumerate() {
        if row.gold_factuality.is_some_and(|g| !g.is_finite()) {
            return Err(VerdataError::Parse {
                line: i + 2,
                message: format!("non-finite gold for {}", row.sentence_id),
            });
        }
    }
    Ok(rows)
}

pub fn write_dataset<W: Write>(writer: W, rows: &[DatasetRow]) -> Result<(), VerdataError> {
    write_tsv(writer, &DATASET_COLUMNS, rows)
}

fn open(path: &Path) -> Result<File, VerdataError> {
    File::open(path).map_err(|e| VerdataError::Io(format!("{}: {e}", path.display())))
}

/// Loads a dataset TSV carrying gold factuality values.
pub fn load_megaveridicality(path: &Path) -> Result<Vec<DatasetRow>, VerdataError> {
    read_dataset(open(path)?)
}

#[derive(Debug, Clone, Deserialize)]
struct InventoryRow {
    verb: String,
    frame_id: String,
}

/// Reads `(verb, frame_id)` pairs.
pub fn read_verb_inventory<R: Read>(reader: R) -> Result<Vec<(String, &'static FrameSpec)>, VerdataError> {
    let rows: Vec<InventoryRow> = read_tsv(reader, &INVENTORY_COLUMNS)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let frame = frame_by_id(&r.frame_id).map_err(|e| VerdataError::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            Ok((r.verb, frame))
        })
        .collect()
}

/// Ordinal response to the probe question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Response {
    No,
    Maybe,
    Yes,
}

impl Response {
    pub const LEVELS: usize = 3;

    pub fn level(self) -> usize {
        self as usize
    }

    pub fn from_level(level: usize) -> Option<Self> {
        [Response::No, Response::Maybe, Response::Yes].get(level).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Response::No => "no",
            Response::Maybe => "maybe",
            Response::Yes => "yes",
        }
    }
}

impl FromStr for Response {
    type Err = VerdataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "no" | "0" => Ok(Response::No),
            "maybe" | "maybe or maybe not" | "1" => Ok(Response::Maybe),
            "yes" | "2" => Ok(Response::Yes),
            other => Err(VerdataError::Invalid(format!("unknown response '{other}'"))),
        }
    }
}

impl Serialize for Response {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Response {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sentence_id: String,
    pub annotator_id: String,
    pub response: Response,
}

pub fn read_annotations<R: Read>(reader: R) -> Result<Vec<AnnotationRecord>, VerdataError> {
    read_tsv(reader, &ANNOTATION_COLUMNS)
}

pub fn write_annotations<W: Write>(writer: W, records: &[AnnotationRecord]) -> Result<(), VerdataError> {
    write_tsv(writer, &ANNOTATION_COLUMNS, records)
}

/// Reads CoNLL-U sentences. The target predicate is the token whose MISC
/// column contains `Target=Yes`, or the root when no token is marked.
/// Multiword-token and empty-node lines are skipped.
pub fn load_conllu(path: &Path) -> Result<Vec<SentenceInput>, VerdataError> {
    parse_conllu(BufReader::new(open(path)?))
}

pub fn parse_conllu<R: BufRead>(reader: R) -> Result<Vec<SentenceInput>, VerdataError> {
    struct Pending {
        tokens: Vec<String>,
        heads: Vec<usize>,
        target: Option<usize>,
        start_line: usize,
    }
    fn finish(p: Pending) -> Result<SentenceInput, VerdataError> {
        let invalid = |m: String| VerdataError::Parse {
            line: p.start_line,
            message: m,
        };
        let tree = DepTree::from_conll_heads(&p.heads).map_err(|e| invalid(e.to_string()))?;
        let target = p.target.unwrap_or(tree.root());
        SentenceInput::new(p.tokens, tree, target).map_err(|e| invalid(e.to_string()))
    }
    let mut out = Vec::new();
    let mut cur: Option<Pending> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| VerdataError::Io(e.to_string()))?;
        let line = line.trim_end();
        if line.is_empty() {
            if let Some(p) = cur.take() {
                out.push(finish(p)?);
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(VerdataError::Parse {
                line: lineno,
                message: format!("expected 10 columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let p = cur.get_or_insert_with(|| Pending {
            tokens: Vec::new(),
            heads: Vec::new(),
            target: None,
            start_line: lineno,
        });
        let id: usize = cols[0].parse().map_err(|_| VerdataError::Parse {
            line: lineno,
            message: format!("bad token id '{}'", cols[0]),
        })?;
        if id != p.tokens.len() + 1 {
            return Err(VerdataError::Parse {
                line: lineno,
                message: format!("token id {id} out of sequence"),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| VerdataError::Parse {
            line: lineno,
            message: format!("bad head '{}'", cols[6]),
        })?;
        if cols[9].split('|').any(|kv| kv == "Target=Yes") {
            p.target = Some(id - 1);
        }
        p.tokens.push(cols[1].to_string());
        p.heads.push(head);
    }
    if let Some(p) = cur.take() {
        out.push(finish(p)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verdata::frames::enumerate_frames;

    #[test]
    fn one_pair_gives_two_sentences() {
        let f = &enumerate_frames()[0];
        let out = generate_dataset(&[("know".to_string(), f)]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].polarity, Polarity::Positive);
        assert_eq!(out[1].polarity, Polarity::Negative);
    }

    #[test]
    fn duplicate_pair_rejected() {
        let f = &enumerate_frames()[0];
        let pairs = vec![("know".to_string(), f), ("know".to_string(), f)];
        assert!(matches!(generate_dataset(&pairs), Err(VerdataError::Duplicate(id)) if id == "know-that_s-pos"));
    }

    #[test]
    fn dataset_round_trip_and_skeleton_recovery() {
        let pairs: Vec<_> = enumerate_frames().iter().map(|f| ("want".to_string(), f)).collect();
        let sentences = generate_dataset(&pairs).unwrap();
        let rows: Vec<_> = sentences
            .iter()
            .map(|s| DatasetRow::from_rendered(&crate::verdata::substitute_indefinites(s), Some(0.5)))
            .collect();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &rows).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        for (row, s) in back.iter().zip(&sentences) {
            let r = row.to_rendered().unwrap();
            assert_eq!(r.heads, crate::verdata::substitute_indefinites(s).heads);
        }
        // unsubstituted text also recovers its skeleton
        let raw = DatasetRow::from_rendered(&sentences[3], None);
        assert_eq!(raw.to_rendered().unwrap().heads, sentences[3].heads);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = "sentence_id\tverb\tframe_id\tpolarity\tsentence\tverb_index\ttarget_index\tquestion\tgold_factuality\n\
                    a\tknow\tNP _ed that S\tpositive\tSomeone knew that something happened .\t1\t4\tq\t1.0\n\
                    b\tknow\tNP _ed that S\tpositive\tSomeone knew that something happened .\tx\t4\tq\t1.0\n";
        match read_dataset(text.as_bytes()) {
            Err(VerdataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_dataset("".as_bytes()).unwrap().is_empty());
        assert!(read_dataset("wrong\theader\n".as_bytes()).is_err());
    }

    #[test]
    fn conllu_target_and_fallback() {
        let text = "# text = Someone faked that something happened .\n\
1\tSomeone\t_\t_\t_\t_\t2\tnsubj\t_\t_\n\
2\tfaked\t_\t_\t_\t_\t0\troot\t_\t_\n\
3\tthat\t_\t_\t_\t_\t5\tmark\t_\t_\n\
4\tsomething\t_\t_\t_\t_\t5\tnsubj\t_\t_\n\
5\thappened\t_\t_\t_\t_\t2\tccomp\t_\tTarget=Yes\n\
6\t.\t_\t_\t_\t_\t2\tpunct\t_\t_\n\
\n\
1\tIt\t_\t_\t_\t_\t2\tnsubj\t_\t_\n\
2\trained\t_\t_\t_\t_\t0\troot\t_\t_\n";
        let out = parse_conllu(text.as_bytes()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].target_index, 4);
        assert_eq!(out[1].target_index, 1);
        assert!(parse_conllu("1\tx\t_\n".as_bytes()).is_err());
    }

    #[test]
    fn responses_parse() {
        assert_eq!("maybe or maybe not".parse::<Response>().unwrap(), Response::Maybe);
        assert!("perhaps".parse::<Response>().is_err());
    }
}
