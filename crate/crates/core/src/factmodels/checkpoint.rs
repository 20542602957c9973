use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::gradcore::{ParamStore, Tensor};

pub const CHECKPOINT_FORMAT: &str = "factprobe-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Versioned JSON document holding hyperparameters, vocabulary and every
/// tensor by name. Floats are written in shortest round-trip form, so a
/// save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<C> {
    pub format: String,
    pub version: u32,
    pub config: C,
    pub vocabulary: Vec<String>,
    pub heads: Vec<String>,
    pub tensors: Vec<TensorRecord>,
}

impl<C: Serialize + for<'de> Deserialize<'de>> Checkpoint<C> {
    pub fn new(config: C, vocabulary: Vec<String>, heads: Vec<String>, store: &ParamStore) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            vocabulary,
            heads,
            tensors: snapshot(store),
        }
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        serde_json::to_writer(writer, self).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, ModelError> {
        let ckpt: Self =
            serde_json::from_reader(reader).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unexpected format tag {:?}",
                ckpt.format
            )));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

pub fn snapshot(store: &ParamStore) -> Vec<TensorRecord> {
    store
        .iter()
        .map(|(_, name, t)| TensorRecord {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            values: t.values().to_vec(),
        })
        .collect()
}

/// Copies every record into the same-named, same-shaped tensor of `store`.
/// The record set must match the store exactly.
pub fn restore(store: &mut ParamStore, records: &[TensorRecord]) -> Result<(), ModelError> {
    if records.len() != store.len() {
        return Err(ModelError::Checkpoint(format!(
            "checkpoint holds {} tensors, model expects {}",
            records.len(),
            store.len()
        )));
    }
    for rec in records {
        let id = store
            .id(&rec.name)
            .ok_or_else(|| ModelError::Checkpoint(format!("unexpected tensor {}", rec.name)))?;
        let t = store.get_mut(id);
        if t.shape() != rec.shape.as_slice() {
            return Err(ModelError::Checkpoint(format!(
                "tensor {} has shape {:?}, model expects {:?}",
                rec.name,
                rec.shape,
                t.shape()
            )));
        }
        let fresh = Tensor::new(rec.shape.clone(), rec.values.clone())?;
        t.values_mut().copy_from_slice(fresh.values());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn values_round_trip_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let mut store = ParamStore::new();
            store.add("t", Tensor::vector(values.clone())).unwrap();
            let ckpt = Checkpoint::new((), vec!["<unk>".into()], vec![], &store);
            let mut buf = Vec::new();
            ckpt.write(&mut buf).unwrap();
            let back: Checkpoint<()> = Checkpoint::read(buf.as_slice()).unwrap();
            let mut other = ParamStore::new();
            other.add("t", Tensor::vector(vec![0.0; values.len()])).unwrap();
            restore(&mut other, &back.tensors).unwrap();
            let got = other.get(other.id("t").unwrap()).values();
            for (a, b) in got.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut store = ParamStore::new();
        store.add("t", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let recs = vec![TensorRecord {
            name: "t".into(),
            shape: vec![3],
            values: vec![0.0; 3],
        }];
        assert!(restore(&mut store, &recs).is_err());
    }
}
