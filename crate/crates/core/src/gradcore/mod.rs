//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation applied during a forward pass;
//! [`Graph::backward`] replays the record once in reverse. Trainable tensors
//! live in a [`ParamStore`] and are bound into a graph as leaves, so one
//! store can be shared by many independent graphs.

mod adam;
mod check;
mod graph;
mod tensor;

pub use adam::{Adam, AdamConfig, StepOutcome};
pub use check::{grad_check, GradCheckReport};
pub use graph::{sigmoid, smooth_l1, smooth_l1_grad, Activation, Graph, Var};
pub use tensor::{ParamId, ParamStore, Tensor};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradError {
    #[error("{op}: operand {operand} has shape {found:?}, expected {expected}")]
    Dimension {
        op: &'static str,
        operand: &'static str,
        expected: String,
        found: Vec<usize>,
    },
    #[error("value count {found} does not match shape product {expected}")]
    Length { expected: usize, found: usize },
    #[error("backward requires a single-element loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("non-finite value while perturbing parameter {param}[{coordinate}]")]
    NonFinite { param: String, coordinate: usize },
    #[error("parameter {0} already exists")]
    DuplicateParam(String),
    #[error("{0}")]
    InvalidArgument(String),
}
