//! Loading of models and datasets referenced by `read_model` and
//! `read_dataset`, behind a shared write-once cache.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use crate::interp::InterpError;
use crate::nir::onnx::parse_onnx;
use crate::nir::NirGraph;
use crate::rational::{self, Rational};
use crate::svm::{svm_to_nir, SvmModel};

/// Labeled samples, one per CSV row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub rows: Vec<(i64, Vec<Rational>)>,
    /// Shared feature count; `None` for an empty file.
    pub feature_dim: Option<usize>,
}

impl Dataset {
    /// Parses `label,f1,...,fN` rows without a header. Features are exact
    /// decimals; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Dataset, InterpError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        let mut feature_dim = None;
        for record in reader.records() {
            let record = record.map_err(|e| InterpError::MalformedDataset(e.to_string()))?;
            let line = record
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(rows.len() + 1);
            if record.iter().all(str::is_empty) {
                continue;
            }
            let label = record[0]
                .parse::<i64>()
                .map_err(|_| InterpError::NonNumeric { line, col: 1 })?;
            let features = record
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, f)| {
                    rational::parse_decimal(f).ok_or(InterpError::NonNumeric { line, col: i + 1 })
                })
                .collect::<Result<Vec<_>, _>>()?;
            match feature_dim {
                None => feature_dim = Some(features.len()),
                Some(d) if d != features.len() => return Err(InterpError::RaggedRow { line }),
                Some(_) => {}
            }
            rows.push((label, features));
        }
        Ok(Dataset { rows, feature_dim })
    }
}

/// Models and datasets keyed by resolved path. Entries are never replaced:
/// the first successful load wins, so repeated reads of one path yield the
/// same `Arc`.
#[derive(Debug, Default)]
pub struct ModelCache {
    models: RwLock<HashMap<PathBuf, Arc<NirGraph>>>,
    datasets: RwLock<HashMap<PathBuf, Arc<Dataset>>>,
}

impl ModelCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an in-memory model under `path` unless one is already there.
    pub fn insert_model(&self, path: impl Into<PathBuf>, graph: NirGraph) -> Arc<NirGraph> {
        let mut map = self.models.write().expect("model cache poisoned");
        map.entry(path.into())
            .or_insert_with(|| Arc::new(graph))
            .clone()
    }

    pub fn insert_dataset(&self, path: impl Into<PathBuf>, data: Dataset) -> Arc<Dataset> {
        let mut map = self.datasets.write().expect("dataset cache poisoned");
        map.entry(path.into())
            .or_insert_with(|| Arc::new(data))
            .clone()
    }

    /// Loads an ONNX model, or an SVM when the file ends in `.json`.
    pub fn read_model(&self, path: &Path) -> Result<Arc<NirGraph>, InterpError> {
        if let Some(g) = self.models.read().expect("model cache poisoned").get(path) {
            return Ok(g.clone());
        }
        let bytes =
            std::fs::read(path).map_err(|_| InterpError::FileNotFound(path.to_path_buf()))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let graph = if is_json {
            let text = String::from_utf8(bytes).map_err(|_| InterpError::Svm {
                path: path.to_path_buf(),
                source: crate::svm::SvmError::SchemaError("file is not UTF-8".into()),
            })?;
            let svm = SvmModel::from_json(&text).map_err(|source| InterpError::Svm {
                path: path.to_path_buf(),
                source,
            })?;
            svm_to_nir(&svm).map_err(|source| InterpError::Svm {
                path: path.to_path_buf(),
                source,
            })?
        } else {
            parse_onnx(&bytes).map_err(|source| InterpError::Model {
                path: path.to_path_buf(),
                source,
            })?
        };
        Ok(self.insert_model(path, graph))
    }

    pub fn read_dataset(&self, path: &Path) -> Result<Arc<Dataset>, InterpError> {
        if let Some(d) = self
            .datasets
            .read()
            .expect("dataset cache poisoned")
            .get(path)
        {
            return Ok(d.clone());
        }
        let text = std::fs::read_to_string(path)
            .map_err(|_| InterpError::FileNotFound(path.to_path_buf()))?;
        Ok(self.insert_dataset(path, Dataset::parse(&text)?))
    }
}
