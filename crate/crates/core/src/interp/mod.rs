//! Reduction of type-checked goals to goal normal form: built-ins are
//! interpreted, models and datasets loaded, lets and definitions inlined,
//! bounded integer quantifiers expanded and vector variables split into
//! scalar inputs.

mod data;
mod formula;
mod reduce;

use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::nir::NirError;
use crate::speclang::Span;
use crate::svm::SvmError;

pub use data::{Dataset, ModelCache};
pub use formula::{
    Affine, Atom, Cmp, Formula, GoalFormula, InputVar, ModelApp, Sym, Term, TermError, VarRole,
};
pub use reduce::{reduce, reduce_all, reduce_goal};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum InterpError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("{}: {source}", .path.display())]
    Model { path: PathBuf, source: NirError },
    #[error("{}: {source}", .path.display())]
    Svm { path: PathBuf, source: SvmError },
    #[error("malformed dataset: {0}")]
    MalformedDataset(String),
    #[error("dataset row {line} has a different number of features")]
    RaggedRow { line: usize },
    #[error("dataset row {line}, column {col} is not a number")]
    NonNumeric { line: usize, col: usize },
    #[error("vector length cannot be determined statically: {detail}")]
    UnresolvedShape { span: Span, detail: String },
    #[error("alternating or existential quantification over reals is not supported")]
    AlternatingQuantifiers { span: Span },
    #[error("non-linear term {term}")]
    NonLinearTerm { span: Span, term: String },
    #[error("division by the constant zero")]
    DivisionByZeroConstant { span: Span },
    #[error("cannot bound the range of integer variable `{name}`")]
    UnboundedQuantifier { span: Span, name: String },
    #[error("index {index} out of bounds for a vector of length {len}")]
    IndexOutOfBounds {
        span: Span,
        index: String,
        len: usize,
    },
    #[error("shape mismatch: {detail}")]
    ShapeMismatch { span: Span, detail: String },
    #[error("unsupported construct: {detail}")]
    Unsupported { span: Span, detail: String },
    #[error("no goal named `{0}`")]
    UnknownGoal(String),
}

impl InterpError {
    /// Source position, when the error arises from a specific expression.
    pub fn span(&self) -> Option<Span> {
        match self {
            InterpError::UnresolvedShape { span, .. }
            | InterpError::AlternatingQuantifiers { span }
            | InterpError::NonLinearTerm { span, .. }
            | InterpError::DivisionByZeroConstant { span }
            | InterpError::UnboundedQuantifier { span, .. }
            | InterpError::IndexOutOfBounds { span, .. }
            | InterpError::ShapeMismatch { span, .. }
            | InterpError::Unsupported { span, .. } => Some(*span),
            _ => None,
        }
    }

    /// Short stable kind name used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            InterpError::FileNotFound(_) => "FileNotFound",
            InterpError::Model {
                source: NirError::UnsupportedOperator(_),
                ..
            } => "UnsupportedOperator",
            InterpError::Model { .. } => "MalformedModel",
            InterpError::Svm { .. } => "SchemaError",
            InterpError::MalformedDataset(_) => "MalformedDataset",
            InterpError::RaggedRow { .. } => "RaggedRow",
            InterpError::NonNumeric { .. } => "NonNumeric",
            InterpError::UnresolvedShape { .. } => "UnresolvedShape",
            InterpError::AlternatingQuantifiers { .. } => "AlternatingQuantifiers",
            InterpError::NonLinearTerm { .. } => "NonLinearTerm",
            InterpError::DivisionByZeroConstant { .. } => "DivisionByZeroConstant",
            InterpError::UnboundedQuantifier { .. } => "UnboundedQuantifier",
            InterpError::IndexOutOfBounds { .. } => "IndexOutOfBounds",
            InterpError::ShapeMismatch { .. } => "ShapeMismatch",
            InterpError::Unsupported { .. } => "Unsupported",
            InterpError::UnknownGoal(_) => "UnknownGoal",
        }
    }
}

/// Where relative paths resolve and which cache loaded files go to.
#[derive(Clone, Debug, Default)]
pub struct Context {
    pub base_dir: PathBuf,
    pub cache: Arc<ModelCache>,
}

impl Context {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Context {
            base_dir: base_dir.into(),
            cache: Arc::new(ModelCache::new()),
        }
    }

    pub fn with_cache(base_dir: impl Into<PathBuf>, cache: Arc<ModelCache>) -> Self {
        Context {
            base_dir: base_dir.into(),
            cache,
        }
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = PathBuf::from(path);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }
}
