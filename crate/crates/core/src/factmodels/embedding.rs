use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use rand::Rng;

use super::ModelError;
use crate::gradcore::{Graph, ParamId, ParamStore, Tensor, Var};

pub const UNK_TOKEN: &str = "<unk>";

/// Token inventory with a single UNK entry at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from `words`, deduplicated, in sorted order after UNK.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sorted: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_string())
            .filter(|w| w != UNK_TOKEN)
            .collect();
        let mut list = vec![UNK_TOKEN.to_string()];
        list.extend(sorted);
        Self::from_list(list).expect("deduplicated list")
    }

    /// Rebuilds a vocabulary from an explicit index order (UNK first).
    pub fn from_list(words: Vec<String>) -> Result<Self, ModelError> {
        if words.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(ModelError::Checkpoint(format!(
                "vocabulary must start with {UNK_TOKEN}"
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(ModelError::Checkpoint(format!("duplicate vocabulary entry {w}")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn unk_index(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Index of `word`, or the UNK index for out-of-vocabulary tokens.
    pub fn lookup(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Embedding matrix `[V × e]` stored in a [`ParamStore`], row `unk_index` is UNK.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vocab: Vocabulary,
    pub param: ParamId,
    pub dim: usize,
}

impl EmbeddingTable {
    /// Registers a uniformly initialised (±0.1) table, UNK row included.
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        vocab: Vocabulary,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let values = (0..vocab.len() * dim)
            .map(|_| rng.random_range(-0.1..0.1))
            .collect();
        let tensor = Tensor::matrix(vocab.len(), dim, values)?;
        let param = store.add(name, tensor)?;
        Ok(EmbeddingTable { vocab, param, dim })
    }

    pub fn unk_index(&self) -> usize {
        self.vocab.unk_index()
    }

    pub fn row_index(&self, token: &str) -> usize {
        self.vocab.lookup(token)
    }

    pub fn row<'a>(&self, store: &'a ParamStore, token: &str) -> &'a [f64] {
        store.get(self.param).row(self.row_index(token))
    }

    /// Overwrites rows with vectors from a whitespace-separated text file
    /// (`word v1 … ve` per line). Returns the number of rows replaced.
    pub fn load_pretrained<R: BufRead>(
        &self,
        store: &mut ParamStore,
        reader: R,
    ) -> Result<usize, ModelError> {
        let mut replaced = 0;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| ModelError::Io(e.to_string()))?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let values = values.map_err(|e| {
                ModelError::Io(format!("line {}: {e}", lineno + 1))
            })?;
            if values.len() != self.dim {
                return Err(ModelError::Io(format!(
                    "line {}: expected {} values, found {}",
                    lineno + 1,
                    self.dim,
                    values.len()
                )));
            }
            if let Some(&row) = self.vocab.index.get(word) {
                let t = store.get_mut(self.param);
                t.values_mut()[row * self.dim..(row + 1) * self.dim].copy_from_slice(&values);
                replaced += 1;
            }
        }
        Ok(replaced)
    }
}

/// Looks up one embedding per token. Out-of-vocabulary tokens and every
/// position in `unk_positions` resolve to the UNK row.
pub fn embed(
    graph: &mut Graph,
    store: &ParamStore,
    table: &EmbeddingTable,
    tokens: &[String],
    unk_positions: &BTreeSet<usize>,
) -> Vec<Var> {
    tokens
        .iter()
        .enumerate()
        .map(|(t, tok)| {
            let row = if unk_positions.contains(&t) {
                table.unk_index()
            } else {
                table.row_index(tok)
            };
            graph.param_row(store, table.param, row)
        })
        .collect()
}
