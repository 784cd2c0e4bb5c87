//! Trained ensembles: prediction and the JSON model file.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Node, RegressionTree};
use super::{GbrtError, TrainConfig};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::provenance::Provenance;
use crate::sha256_hex;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub name: String,
    pub kind: FeatureKind,
}

/// `F(x) = base_score + Σ learning_rate · tree_m(x)`, with `λ = exp(F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    features: Vec<FeatureInfo>,
    base_score: f64,
    learning_rate: f64,
    config: TrainConfig,
    trees: Vec<RegressionTree>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub raw: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// On-disk form. Trees are nested nodes; `schema_hash` covers the ordered
/// feature names and kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub provenance: Provenance,
    pub schema_hash: String,
    pub features: Vec<FeatureInfo>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub config: TrainConfig,
    pub trees: Vec<Node>,
}

pub fn schema_hash(features: &[FeatureInfo]) -> String {
    let mut s = String::new();
    for f in features {
        s.push_str(&f.name);
        s.push(':');
        s.push_str(&serde_json::to_string(&f.kind).expect("enum serializes"));
        s.push('\n');
    }
    sha256_hex(s.as_bytes())
}

/// Row-major copy of `matrix` in the order of `features`. The column sets
/// must match exactly.
pub(crate) fn row_major(matrix: &FeatureMatrix, features: &[FeatureInfo]) -> Result<Vec<f64>, GbrtError> {
    let missing: Vec<String> = features
        .iter()
        .filter(|f| matrix.column(&f.name).is_none())
        .map(|f| f.name.clone())
        .collect();
    let extra: Vec<String> = matrix
        .column_names()
        .filter(|n| !features.iter().any(|f| f.name == *n))
        .map(String::from)
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(GbrtError::SchemaMismatch { missing, extra });
    }
    let cols: Vec<&[f64]> = features
        .iter()
        .map(|f| matrix.column(&f.name).expect("checked").values.as_slice())
        .collect();
    let d = cols.len();
    let mut out = vec![0.0; matrix.n_rows() * d];
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            out[i * d + j] = v;
        }
    }
    Ok(out)
}

impl Ensemble {
    pub(crate) fn new(
        features: Vec<FeatureInfo>,
        base_score: f64,
        config: TrainConfig,
        trees: Vec<RegressionTree>,
    ) -> Self {
        Ensemble {
            features,
            base_score,
            learning_rate: config.learning_rate,
            config,
            trees,
        }
    }

    pub fn features(&self) -> &[FeatureInfo] {
        &self.features
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn schema_hash(&self) -> String {
        schema_hash(&self.features)
    }

    /// Raw score of one row laid out in model feature order. Trees are added
    /// in training order, so this reproduces training-time scores exactly.
    #[inline]
    pub fn predict_raw_row(&self, row: &[f64]) -> f64 {
        let mut f = self.base_score;
        for t in &self.trees {
            f += self.learning_rate * t.predict_row(row);
        }
        f
    }

    /// Raw scores for a row-major block with `features().len()` columns.
    pub fn predict_raw_rows(&self, rows: &[f64]) -> Vec<f64> {
        let d = self.features.len();
        let n = rows.len().checked_div(d).unwrap_or(0);
        let mut out = vec![0.0; n];
        if d == 0 {
            return out;
        }
        const CHUNK: usize = 512;
        // Tree-major within a chunk keeps one tree hot in cache; each row
        // still sums its trees in order, so results match predict_raw_row.
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let block = &rows[c * CHUNK * d..(c * CHUNK + chunk.len()) * d];
            chunk.fill(self.base_score);
            for t in &self.trees {
                for (slot, row) in chunk.iter_mut().zip(block.chunks_exact(d)) {
                    *slot += self.learning_rate * t.predict_row(row);
                }
            }
        });
        out
    }

    /// Predicts every row of `matrix`, matching columns by name.
    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Predictions, GbrtError> {
        let rows = row_major(matrix, &self.features)?;
        let raw = if self.features.is_empty() {
            vec![self.base_score; matrix.n_rows()]
        } else {
            self.predict_raw_rows(&rows)
        };
        let lambda = raw.iter().map(|f| f.exp()).collect();
        Ok(Predictions { raw, lambda })
    }

    pub fn to_model_file(&self, provenance: Provenance) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            provenance,
            schema_hash: self.schema_hash(),
            features: self.features.clone(),
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            config: self.config.clone(),
            trees: self.trees.iter().map(RegressionTree::to_node).collect(),
        }
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self, GbrtError> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(GbrtError::Model(format!(
                "unsupported format version {}",
                file.format_version
            )));
        }
        if schema_hash(&file.features) != file.schema_hash {
            return Err(GbrtError::Model("schema hash does not match feature list".into()));
        }
        if !file.base_score.is_finite() || !file.learning_rate.is_finite() {
            return Err(GbrtError::Model("non-finite base score or learning rate".into()));
        }
        let trees = file
            .trees
            .iter()
            .map(RegressionTree::from_node)
            .collect::<Result<Vec<_>, _>>()?;
        if trees
            .iter()
            .any(|t| t.max_feature().is_some_and(|f| f >= file.features.len()))
        {
            return Err(GbrtError::Model("tree references an unknown feature".into()));
        }
        Ok(Ensemble {
            features: file.features.clone(),
            base_score: file.base_score,
            learning_rate: file.learning_rate,
            config: file.config.clone(),
            trees,
        })
    }

    pub fn to_json(&self, provenance: Provenance) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&self.to_model_file(provenance)).expect("model serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<(Self, Provenance), GbrtError> {
        let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| GbrtError::Model(e.to_string()))?;
        Ok((Self::from_model_file(&file)?, file.provenance))
    }

    /// Writes the model file; returns its bytes.
    pub fn save(&self, path: &Path, provenance: Provenance) -> Result<Vec<u8>, GbrtError> {
        let bytes = self.to_json(provenance);
        fs::write(path, &bytes)?;
        Ok(bytes)
    }

    pub fn load(path: &Path) -> Result<(Self, Provenance), GbrtError> {
        Self::from_json(&fs::read(path)?)
    }
}

/// Every leaf value in a model file, for audits that should not trust the
/// in-memory form.
pub fn collect_leaf_values(node: &Node, out: &mut Vec<f64>) {
    match node {
        Node::Leaf { value } => out.push(*value),
        Node::Numeric { left, right, .. } | Node::Categorical { left, right, .. } => {
            collect_leaf_values(left, out);
            collect_leaf_values(right, out);
        }
    }
}
