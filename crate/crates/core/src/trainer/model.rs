use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::factmodels::{
    predict_factuality, restore, Checkpoint, Encoder, ModelConfig, RegressionHead, SentenceInput,
    Vocabulary,
};
use crate::gradcore::{Graph, ParamStore};

/// One training or evaluation item.
#[derive(Debug, Clone, PartialEq)]
pub struct FactualityExample {
    pub id: String,
    pub input: SentenceInput,
    pub gold: f64,
    pub dataset_tag: String,
}

impl FactualityExample {
    pub fn new(
        id: impl Into<String>,
        input: SentenceInput,
        gold: f64,
        dataset_tag: impl Into<String>,
    ) -> Result<Self, TrainError> {
        let id = id.into();
        if !gold.is_finite() {
            return Err(TrainError::Data(format!("{id}: gold value is not finite")));
        }
        Ok(FactualityExample {
            id,
            input,
            gold,
            dataset_tag: dataset_tag.into(),
        })
    }
}

/// Shared encoder and embedding table with one regression head per corpus.
/// All tensors live in a single [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub heads: BTreeMap<String, RegressionHead>,
}

fn head_name(tag: &str) -> String {
    format!("head.{tag}")
}

impl MultiTaskModel {
    /// Registers the encoder, then one head per tag in sorted order.
    pub fn init<R: Rng>(
        config: ModelConfig,
        vocab: Vocabulary,
        tags: &BTreeSet<String>,
        rng: &mut R,
    ) -> Result<Self, TrainError> {
        if tags.is_empty() {
            return Err(TrainError::Config("at least one corpus tag is required".into()));
        }
        let mut store = ParamStore::new();
        let encoder = Encoder::init(&mut store, config, vocab, rng)?;
        let mut heads = BTreeMap::new();
        for tag in tags {
            let head = RegressionHead::init(
                &mut store,
                &head_name(tag),
                encoder.output_dim(),
                config.head_hidden_dim,
                rng,
            )?;
            heads.insert(tag.clone(), head);
        }
        Ok(MultiTaskModel {
            config,
            store,
            encoder,
            heads,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.encoder.embedding.vocab
    }

    pub fn tags(&self) -> Vec<String> {
        self.heads.keys().cloned().collect()
    }

    pub fn head(&self, tag: &str) -> Result<&RegressionHead, TrainError> {
        self.heads.get(tag).ok_or_else(|| TrainError::UnknownHead(tag.to_string()))
    }

    /// Encodes once and applies every head, in tag order.
    pub fn predict_heads(&self, input: &SentenceInput, unk_positions: &BTreeSet<usize>) -> Result<Vec<f64>, TrainError> {
        let mut g = Graph::new();
        let h = self.encoder.encode_at_target(&mut g, &self.store, input, unk_positions)?;
        self.heads
            .values()
            .map(|head| {
                let y = predict_factuality(&mut g, &self.store, head, h)?;
                Ok(g.scalar(y))
            })
            .collect()
    }

    pub fn predict(&self, input: &SentenceInput, tag: &str) -> Result<f64, TrainError> {
        let head = self.head(tag)?;
        let mut g = Graph::new();
        let h = self.encoder.encode_at_target(&mut g, &self.store, input, &BTreeSet::new())?;
        let y = predict_factuality(&mut g, &self.store, head, h)?;
        Ok(g.scalar(y))
    }

    pub fn loss(&self, ex: &FactualityExample) -> Result<f64, TrainError> {
        let y = self.predict(&ex.input, &ex.dataset_tag)?;
        Ok(crate::gradcore::smooth_l1(y, ex.gold))
    }

    pub fn mean_loss(&self, examples: &[FactualityExample]) -> Result<f64, TrainError> {
        let mut total = 0.0;
        for ex in examples {
            total += self.loss(ex)?;
        }
        Ok(total / examples.len() as f64)
    }

    /// Adds the gradient of `scale * smooth_l1(prediction, gold)` to the
    /// stored gradients and returns the unscaled loss.
    pub fn accumulate_gradient(&mut self, ex: &FactualityExample, scale: f64) -> Result<f64, TrainError> {
        let head = *self.head(&ex.dataset_tag)?;
        let mut g = Graph::new();
        let h = self.encoder.encode_at_target(&mut g, &self.store, &ex.input, &BTreeSet::new())?;
        let y = predict_factuality(&mut g, &self.store, &head, h)?;
        let loss = g.smooth_l1(y, ex.gold)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Ok(value);
        }
        let scaled = g.scale(loss, scale);
        g.backward(scaled)?;
        g.export_grads(&mut self.store);
        Ok(value)
    }

    pub fn checkpoint(&self) -> Checkpoint<ModelConfig> {
        Checkpoint::new(
            self.config,
            self.vocabulary().words().to_vec(),
            self.tags(),
            &self.store,
        )
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<(), TrainError> {
        Ok(self.checkpoint().write(writer)?)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint<ModelConfig>) -> Result<Self, TrainError> {
        let vocab = Vocabulary::from_list(ckpt.vocabulary.clone())?;
        let tags: BTreeSet<String> = ckpt.heads.iter().cloned().collect();
        // placeholder values, overwritten by restore
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = MultiTaskModel::init(ckpt.config, vocab, &tags, &mut rng)?;
        restore(&mut model.store, &ckpt.tensors)?;
        Ok(model)
    }

    pub fn load<R: Read>(reader: R) -> Result<Self, TrainError> {
        Self::from_checkpoint(&Checkpoint::read(reader)?)
    }
}
