//! Histogram gradient-boosted regression trees with a Poisson objective.
//!
//! The raw score `F` is the log-rate, so `λ = exp(F)` and every Hessian is
//! strictly positive. Trees grow leaf-wise up to `max_leaves`; leaf values
//! are Newton steps clamped to `±leaf_cap` before the learning rate is
//! applied. Categorical columns use optimal subset splits found by sorting
//! categories on their gradient ratio.

pub mod binning;
pub mod goss;
pub mod histogram;
mod model;
pub mod objective;
pub mod split;
mod train;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{collect_leaf_values, schema_hash, Ensemble, FeatureInfo, ModelFile, Predictions, MODEL_FORMAT_VERSION};
pub use objective::{grad_hess, leaf_value, poisson_loss, EPS};
pub use train::{fit, TrainingLog};
pub use tree::{Node, RegressionTree};

#[derive(Debug, Error)]
pub enum GbrtError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training matrix has no rows")]
    EmptyMatrix,
    #[error("non-finite value in column {column} at row {row}")]
    NonFiniteFeature { column: String, row: usize },
    #[error("target at row {row} must be finite and non-negative")]
    InvalidTarget { row: usize },
    #[error("non-finite input to the Poisson objective")]
    NonFinite,
    #[error("loss overflows for raw score {0}")]
    Overflow(f64),
    #[error("categorical column {column} has invalid code {value}")]
    InvalidCategory { column: String, value: f64 },
    #[error("categorical column {column} has {count} categories, above max_bins {max}")]
    TooManyCategories { column: String, count: usize, max: usize },
    #[error("feature schema mismatch: missing {missing:?}, unexpected {extra:?}")]
    SchemaMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hyperparameters for one boosting run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub max_bins: usize,
    pub min_samples_leaf: usize,
    pub min_sum_hessian_leaf: f64,
    pub leaf_cap: f64,
    pub goss_enabled: bool,
    pub goss_top_rate: f64,
    pub goss_other_rate: f64,
    /// Rounds without validation RMSE improvement before stopping; 0 disables.
    /// Only used when a validation set is passed to [`fit`].
    pub early_stopping_rounds: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_trees: 500,
            learning_rate: 0.05,
            max_leaves: 63,
            max_bins: 255,
            min_samples_leaf: 20,
            min_sum_hessian_leaf: 1e-3,
            leaf_cap: 1.5,
            goss_enabled: false,
            goss_top_rate: 0.2,
            goss_other_rate: 0.1,
            early_stopping_rounds: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GbrtError> {
        let bad = |msg: String| Err(GbrtError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if self.max_leaves == 0 {
            return bad("max_leaves must be positive".into());
        }
        if !(1..=256).contains(&self.max_bins) {
            return bad(format!("max_bins {} outside 1..=256", self.max_bins));
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive".into());
        }
        if !(self.min_sum_hessian_leaf >= 0.0 && self.min_sum_hessian_leaf.is_finite()) {
            return bad("min_sum_hessian_leaf must be finite and non-negative".into());
        }
        if !(self.leaf_cap > 0.0 && self.leaf_cap.is_finite()) {
            return bad("leaf_cap must be finite and positive".into());
        }
        if self.goss_enabled {
            let (a, b) = (self.goss_top_rate, self.goss_other_rate);
            if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
                return bad(format!("goss rates ({a}, {b}) must lie in (0, 1)"));
            }
            if a + b > 1.0 {
                return bad(format!("goss_top_rate + goss_other_rate = {} exceeds 1", a + b));
            }
        }
        Ok(())
    }
}
