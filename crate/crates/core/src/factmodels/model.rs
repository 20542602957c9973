use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{embed, EmbeddingTable, Vocabulary};
use super::encoder::{lbilstm_encode, tbilstm_encode, EncoderParams};
use super::tree::DepTree;
use super::ModelError;
use crate::gradcore::{Activation, Graph, ParamId, ParamStore, Tensor, Var};

/// Which encoder feeds the regression head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// linear-chain biLSTM
    #[serde(rename = "L")]
    Linear,
    /// dependency-tree biLSTM
    #[serde(rename = "T")]
    Tree,
    /// both, final states concatenated
    #[serde(rename = "H")]
    Hybrid,
}

impl ModelKind {
    pub fn uses_linear(self) -> bool {
        matches!(self, ModelKind::Linear | ModelKind::Hybrid)
    }

    pub fn uses_tree(self) -> bool {
        matches!(self, ModelKind::Tree | ModelKind::Hybrid)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "L",
            ModelKind::Tree => "T",
            ModelKind::Hybrid => "H",
        })
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" | "l" | "linear" | "L-biLSTM" => Ok(ModelKind::Linear),
            "T" | "t" | "tree" | "T-biLSTM" => Ok(ModelKind::Tree),
            "H" | "h" | "hybrid" | "H-biLSTM" => Ok(ModelKind::Hybrid),
            other => Err(ModelError::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub head_hidden_dim: usize,
    pub linear_nonlinearity: Activation,
    pub tree_nonlinearity: Activation,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            embedding_dim: 50,
            hidden_dim: 64,
            layers: 2,
            head_hidden_dim: 64,
            linear_nonlinearity: Activation::Tanh,
            tree_nonlinearity: Activation::Relu,
        }
    }

    pub fn with_dims(mut self, embedding_dim: usize, hidden_dim: usize) -> Self {
        self.embedding_dim = embedding_dim;
        self.hidden_dim = hidden_dim;
        self.head_hidden_dim = hidden_dim;
        self
    }

    /// Width of the vector handed to a regression head.
    pub fn output_dim(&self) -> usize {
        match self.kind {
            ModelKind::Hybrid => 4 * self.hidden_dim,
            _ => 2 * self.hidden_dim,
        }
    }
}

/// A tokenised sentence with its dependency tree and the predicate to judge.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceInput {
    pub tokens: Vec<String>,
    pub tree: DepTree,
    pub target_index: usize,
}

impl SentenceInput {
    pub fn new(tokens: Vec<String>, tree: DepTree, target_index: usize) -> Result<Self, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if tree.len() != tokens.len() {
            return Err(ModelError::Tree(format!(
                "tree has {} nodes but the sentence has {} tokens",
                tree.len(),
                tokens.len()
            )));
        }
        if target_index >= tokens.len() {
            return Err(ModelError::TargetOutOfRange {
                target: target_index,
                len: tokens.len(),
            });
        }
        Ok(SentenceInput {
            tokens,
            tree,
            target_index,
        })
    }
}

/// Embedding table plus the encoder(s) selected by [`ModelKind`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: ModelConfig,
    pub embedding: EmbeddingTable,
    pub linear: Option<EncoderParams>,
    pub tree: Option<EncoderParams>,
}

impl Encoder {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        config: ModelConfig,
        vocab: Vocabulary,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if config.embedding_dim == 0 || config.hidden_dim == 0 || config.head_hidden_dim == 0 {
            return Err(ModelError::Config("widths must be positive".into()));
        }
        let embedding = EmbeddingTable::init(store, "embedding", vocab, config.embedding_dim, rng)?;
        let linear = if config.kind.uses_linear() {
            Some(EncoderParams::init(
                store,
                "linear",
                config.embedding_dim,
                config.hidden_dim,
                config.layers,
                config.linear_nonlinearity,
                rng,
            )?)
        } else {
            None
        };
        let tree = if config.kind.uses_tree() {
            Some(EncoderParams::init(
                store,
                "tree",
                config.embedding_dim,
                config.hidden_dim,
                config.layers,
                config.tree_nonlinearity,
                rng,
            )?)
        } else {
            None
        };
        Ok(Encoder {
            config,
            embedding,
            linear,
            tree,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    /// Parameter ids owned by the encoder (embedding table included).
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embedding.param];
        for enc in self.linear.iter().chain(self.tree.iter()) {
            ids.extend(enc.ids());
        }
        ids
    }

    /// Final-layer bidirectional state at the target token; for the hybrid
    /// model the linear and tree concatenations are concatenated in that order.
    pub fn encode_at_target(
        &self,
        graph: &mut Graph,
        store: &ParamStore,
        input: &SentenceInput,
        unk_positions: &BTreeSet<usize>,
    ) -> Result<Var, ModelError> {
        let t = input.target_index;
        if t >= input.tokens.len() {
            return Err(ModelError::TargetOutOfRange {
                target: t,
                len: input.tokens.len(),
            });
        }
        let xs = embed(graph, store, &self.embedding, &input.tokens, unk_positions);
        let linear = match &self.linear {
            Some(p) => Some(lbilstm_encode(graph, store, p, &xs)?.final_concat(graph, t)?),
            None => None,
        };
        let tree = match &self.tree {
            Some(p) => Some(tbilstm_encode(graph, store, p, &xs, &input.tree)?.final_concat(graph, t)?),
            None => None,
        };
        match (linear, tree) {
            (Some(a), Some(b)) => Ok(graph.concat(a, b)?),
            (Some(a), None) | (None, Some(a)) => Ok(a),
            (None, None) => Err(ModelError::Config("model has no encoder".into())),
        }
    }
}

/// Two-layer regressor `V2 relu(V1 h + b1) + b2` producing one scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionHead {
    pub v1: ParamId,
    pub b1: ParamId,
    pub v2: ParamId,
    pub b2: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl RegressionHead {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let b = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let v1 = (0..hidden_dim * input_dim)
            .map(|_| rng.random_range(-b..b))
            .collect();
        let b = (6.0 / (hidden_dim + 1) as f64).sqrt();
        let v2 = (0..hidden_dim).map(|_| rng.random_range(-b..b)).collect();
        Ok(RegressionHead {
            v1: store.add(format!("{prefix}.v1"), Tensor::matrix(hidden_dim, input_dim, v1)?)?,
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(vec![hidden_dim]))?,
            v2: store.add(format!("{prefix}.v2"), Tensor::matrix(1, hidden_dim, v2)?)?,
            b2: store.add(format!("{prefix}.b2"), Tensor::zeros(vec![1]))?,
            input_dim,
            hidden_dim,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.v1, self.b1, self.v2, self.b2]
    }
}

/// Unbounded scalar factuality from the target representation `h`.
pub fn predict_factuality(
    graph: &mut Graph,
    store: &ParamStore,
    head: &RegressionHead,
    h: Var,
) -> Result<Var, ModelError> {
    let v1 = graph.param(store, head.v1);
    let b1 = graph.param(store, head.b1);
    let v2 = graph.param(store, head.v2);
    let b2 = graph.param(store, head.b2);
    let hidden_pre = graph.affine(v1, h, b1)?;
    let hidden = graph.relu(hidden_pre);
    Ok(graph.affine(v2, hidden, b2)?)
}
