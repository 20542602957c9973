use std::collections::BTreeSet;

use nalgebra::DMatrix;

use super::ProbeError;
use crate::gradcore::Graph;
use crate::trainer::{FactualityExample, MultiTaskModel};

/// Row i of `X` is the embedding of sentence i's embedding verb; row i of
/// `Y` is the model's final bidirectional state at its embedded predicate.
/// With `ablate` the verb is read through the UNK row, so every `X` row is
/// the same.
pub fn extract_probe_matrices<F>(
    model: &MultiTaskModel,
    data: &[FactualityExample],
    verb_position: F,
    ablate: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ProbeError>
where
    F: Fn(&FactualityExample) -> usize,
{
    let e = model.config.embedding_dim;
    let d = model.encoder.output_dim();
    let mut x = DMatrix::zeros(data.len(), e);
    let mut y = DMatrix::zeros(data.len(), d);
    let table = &model.encoder.embedding;
    for (i, ex) in data.iter().enumerate() {
        let p = verb_position(ex);
        let token = ex.input.tokens.get(p).ok_or_else(|| {
            ProbeError::Invalid(format!(
                "{}: embedding verb position {p} out of range for {} tokens",
                ex.id,
                ex.input.tokens.len()
            ))
        })?;
        let unk = if ablate { BTreeSet::from([p]) } else { BTreeSet::new() };
        let row = if ablate {
            model.store.get(table.param).row(table.unk_index())
        } else {
            table.row(&model.store, token)
        };
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
        let mut g = Graph::new();
        let h = model
            .encoder
            .encode_at_target(&mut g, &model.store, &ex.input, &unk)
            .map_err(|e| ProbeError::Invalid(format!("{}: {e}", ex.id)))?;
        for (j, v) in g.value(h).iter().enumerate() {
            y[(i, j)] = *v;
        }
    }
    Ok((x, y))
}
