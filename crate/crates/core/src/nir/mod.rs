//! Neural intermediate representation: a shape-annotated DAG of tensor
//! operators over exact rationals, with evaluation, graph surgery and ONNX
//! import/export.

mod eval;
mod graph;
pub mod linear;
pub mod onnx;
mod tensor;

use thiserror::Error;

pub use eval::{evaluate, forward, Evaluation};
pub use graph::{infer_shape, mlp, mlp_from_ints, GraphBuilder, NirGraph, Node, NodeId, Op};
pub use tensor::Tensor;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum NirError {
    #[error("shape mismatch{}: {detail}", at_node(.node))]
    ShapeMismatch { node: Option<usize>, detail: String },
    #[error("division by zero at node {node}")]
    DivisionByZero { node: usize },
    #[error("unsupported operator {0}")]
    UnsupportedOperator(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("constant {value} at node {node} is not exactly representable as a {width}")]
    UnserializableExact {
        node: usize,
        value: String,
        width: &'static str,
    },
}

fn at_node(node: &Option<usize>) -> String {
    node.map(|n| format!(" at node {n}")).unwrap_or_default()
}

impl NirError {
    pub(crate) fn shape(detail: String) -> Self {
        NirError::ShapeMismatch { node: None, detail }
    }

    /// Attaches a node position to a shape error that lacks one.
    pub(crate) fn at(self, id: NodeId) -> Self {
        match self {
            NirError::ShapeMismatch { node: None, detail } => NirError::ShapeMismatch {
                node: Some(id.0),
                detail,
            },
            other => other,
        }
    }
}
