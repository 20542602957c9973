use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{FactualityExample, MultiTaskModel};
use super::TrainError;
use crate::factmodels::{restore, snapshot, ModelConfig, ModelError, TensorRecord, Vocabulary};
use crate::gradcore::{Adam, AdamConfig};
use crate::probe::{mean_absolute_error, pearson, PredictionMatrix, ProbeError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Reshuffle all examples of all corpora together every epoch.
    pub shuffle: bool,
    /// Hold out this fraction of every corpus and keep the parameters with
    /// the lowest dev loss.
    pub dev_fraction: Option<f64>,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            epochs: 20,
            learning_rate: AdamConfig::default().learning_rate,
            batch_size: 8,
            seed: 0,
            shuffle: true,
            dev_fraction: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        if let Some(f) = self.dev_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(TrainError::Config("dev fraction must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// Mean training loss of one corpus over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub corpus: String,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_loss: Option<f64>,
}

/// Stateful training loop over a fixed set of corpora.
pub struct Trainer {
    pub model: MultiTaskModel,
    pub config: TrainConfig,
    optimizer: Adam,
    rng: ChaCha8Rng,
    train: Vec<FactualityExample>,
    dev: Vec<FactualityExample>,
    epoch: usize,
    step: usize,
    best: Option<(f64, Vec<TensorRecord>)>,
}

impl Trainer {
    /// Splits off dev data if requested, builds the vocabulary from the
    /// training tokens and initialises the model, all from `config.seed`.
    pub fn new(corpora: &BTreeMap<String, Vec<FactualityExample>>, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        if corpora.is_empty() {
            return Err(TrainError::Config("no corpora given".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut train = Vec::new();
        let mut dev = Vec::new();
        for (tag, examples) in corpora {
            if examples.is_empty() {
                return Err(TrainError::EmptyCorpus(tag.clone()));
            }
            if let Some(ex) = examples.iter().find(|ex| &ex.dataset_tag != tag) {
                return Err(TrainError::Data(format!(
                    "{}: tagged {} but listed under corpus {tag}",
                    ex.id, ex.dataset_tag
                )));
            }
            match config.dev_fraction {
                Some(f) if examples.len() > 1 => {
                    let mut order: Vec<usize> = (0..examples.len()).collect();
                    order.shuffle(&mut rng);
                    let n_dev = ((f * examples.len() as f64).round() as usize).clamp(1, examples.len() - 1);
                    let (d, t) = order.split_at(n_dev);
                    let mut t = t.to_vec();
                    t.sort_unstable();
                    let mut d = d.to_vec();
                    d.sort_unstable();
                    train.extend(t.into_iter().map(|i| examples[i].clone()));
                    dev.extend(d.into_iter().map(|i| examples[i].clone()));
                }
                _ => train.extend(examples.iter().cloned()),
            }
        }
        let vocab = Vocabulary::from_words(train.iter().flat_map(|ex| ex.input.tokens.iter()));
        let tags: BTreeSet<String> = corpora.keys().cloned().collect();
        let model = MultiTaskModel::init(config.model, vocab, &tags, &mut rng)?;
        let optimizer = Adam::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
            &model.store,
        );
        info!(
            "training {} model on {} examples ({} dev), {} parameters",
            config.model.kind,
            train.len(),
            dev.len(),
            model.store.numel()
        );
        Ok(Trainer {
            model,
            config,
            optimizer,
            rng,
            train,
            dev,
            epoch: 0,
            step: 0,
            best: None,
        })
    }

    pub fn train_examples(&self) -> &[FactualityExample] {
        &self.train
    }

    pub fn dev_examples(&self) -> &[FactualityExample] {
        &self.dev
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// One pass over the training examples in minibatches; each batch
    /// gradient is the mean over its examples regardless of corpus.
    pub fn run_epoch(&mut self) -> Result<Vec<EpochLog>, TrainError> {
        self.epoch += 1;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        if self.config.shuffle {
            order.shuffle(&mut self.rng);
        }
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for batch in order.chunks(self.config.batch_size) {
            self.step += 1;
            self.model.store.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &self.train[i];
                let diverged = || TrainError::Diverged {
                    epoch: self.epoch,
                    step: self.step,
                    corpus: ex.dataset_tag.clone(),
                    example: ex.id.clone(),
                };
                let loss = match self.model.accumulate_gradient(ex, scale) {
                    Ok(l) if l.is_finite() => l,
                    Ok(_) | Err(TrainError::Model(ModelError::NonFinite { .. })) => return Err(diverged()),
                    Err(e) => return Err(e),
                };
                let e = sums.entry(ex.dataset_tag.clone()).or_insert((0.0, 0));
                e.0 += loss;
                e.1 += 1;
            }
            self.optimizer.step(&mut self.model.store)?;
        }
        let dev_loss = if self.dev.is_empty() {
            None
        } else {
            let l = self.model.mean_loss(&self.dev)?;
            if self.best.as_ref().is_none_or(|(b, _)| l < *b) {
                self.best = Some((l, snapshot(&self.model.store)));
            }
            Some(l)
        };
        let logs: Vec<EpochLog> = sums
            .into_iter()
            .map(|(corpus, (s, n))| EpochLog {
                epoch: self.epoch,
                corpus,
                mean_loss: s / n as f64,
                dev_loss,
            })
            .collect();
        for l in &logs {
            debug!("epoch {} corpus {} loss {:.6}", l.epoch, l.corpus, l.mean_loss);
        }
        Ok(logs)
    }

    /// Runs the remaining epochs and returns the model, restored to the best
    /// dev-loss parameters when a dev split exists.
    pub fn fit(mut self) -> Result<(MultiTaskModel, Vec<EpochLog>), TrainError> {
        let mut logs = Vec::new();
        while self.epoch < self.config.epochs {
            logs.extend(self.run_epoch()?);
        }
        if let Some((_, best)) = &self.best {
            restore(&mut self.model.store, best)?;
        }
        Ok((self.model, logs))
    }
}

/// Trains one shared encoder with a head per corpus.
pub fn train_multitask(
    corpora: &BTreeMap<String, Vec<FactualityExample>>,
    config: TrainConfig,
) -> Result<(MultiTaskModel, Vec<EpochLog>), TrainError> {
    Trainer::new(corpora, config)?.fit()
}

fn column_name(model: &MultiTaskModel, tag: &str, variant: &str) -> String {
    format!("{}-{tag}-{variant}", model.config.kind)
}

fn prediction_matrix(
    model: &MultiTaskModel,
    data: &[FactualityExample],
    variant: &str,
    unk: impl Fn(&FactualityExample) -> Result<BTreeSet<usize>, TrainError>,
) -> Result<PredictionMatrix, TrainError> {
    let tags = model.tags();
    let mut values = Vec::with_capacity(data.len() * tags.len());
    for ex in data {
        values.extend(model.predict_heads(&ex.input, &unk(ex)?)?);
    }
    let columns = tags.iter().map(|t| column_name(model, t, variant)).collect();
    let ids = data.iter().map(|ex| ex.id.clone()).collect();
    PredictionMatrix::new(ids, columns, values).map_err(|e| TrainError::Data(e.to_string()))
}

/// One column `{kind}-{tag}-LEX` per head, one row per example.
pub fn predict_all(model: &MultiTaskModel, data: &[FactualityExample]) -> Result<PredictionMatrix, TrainError> {
    prediction_matrix(model, data, "LEX", |_| Ok(BTreeSet::new()))
}

/// As [`predict_all`] with the embedding verb replaced by the UNK row;
/// columns are named `{kind}-{tag}-UNK`.
pub fn predict_unk_ablated<F>(
    model: &MultiTaskModel,
    data: &[FactualityExample],
    verb_position: F,
) -> Result<PredictionMatrix, TrainError>
where
    F: Fn(&FactualityExample) -> usize,
{
    prediction_matrix(model, data, "UNK", |ex| {
        let p = verb_position(ex);
        if p >= ex.input.tokens.len() {
            return Err(TrainError::Data(format!(
                "{}: embedding verb position {p} out of range for {} tokens",
                ex.id,
                ex.input.tokens.len()
            )));
        }
        Ok(BTreeSet::from([p]))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub pearson_r: f64,
    pub mae: f64,
}

/// Pearson r and mean absolute error. Constant gold leaves r undefined; the
/// error still carries the MAE.
pub fn evaluate(predictions: &[f64], gold: &[f64]) -> Result<Evaluation, TrainError> {
    if predictions.len() != gold.len() || gold.len() < 2 {
        return Err(TrainError::Data(format!(
            "evaluation needs equal lengths of at least 2 (got {} and {})",
            predictions.len(),
            gold.len()
        )));
    }
    let mae = mean_absolute_error(predictions, gold);
    let gold_constant = gold.iter().all(|g| *g == gold[0]);
    if gold_constant {
        return Err(TrainError::UndefinedCorrelation { mae });
    }
    match pearson(predictions, gold) {
        Ok(r) => Ok(Evaluation { pearson_r: r, mae }),
        // constant predictions against varying gold carry no linear signal
        Err(ProbeError::UndefinedCorrelation) => Ok(Evaluation { pearson_r: 0.0, mae }),
        Err(e) => Err(TrainError::Data(e.to_string())),
    }
}

/// Writes one JSON object per line.
pub fn write_log<W: Write>(mut writer: W, logs: &[EpochLog]) -> Result<(), TrainError> {
    for l in logs {
        let line = serde_json::to_string(l).map_err(|e| TrainError::Data(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| TrainError::Data(e.to_string()))?;
    }
    Ok(())
}
