//! Train/validation/test splits and modality ablations.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMatrix, ModalitySet, BASELINE_COLUMN};
use crate::gbrt::{self, TrainConfig};
use crate::metrics::{self, EvaluationReport};
use crate::provenance::Provenance;
use crate::sha256_hex;

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const BASELINE_NAME: &str = "Baseline";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("need at least 10 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.7,
            valid_frac: 0.1,
            test_frac: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let f = [self.train_frac, self.valid_frac, self.test_frac];
        if f.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) || self.train_frac == 0.0 {
            return Err(ExperimentError::InvalidSplit(format!("{f:?}")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ExperimentError::InvalidSplit(format!("{f:?} does not sum to 1")));
        }
        Ok(())
    }
}

/// Row indices of each part, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with the spec's seed and cuts it at the rounded
/// fractions; the test part takes the remainder.
pub fn partition(n: usize, spec: &SplitSpec) -> Result<Partition, ExperimentError> {
    spec.validate()?;
    if n < 10 {
        return Err(ExperimentError::TooFewRows(n));
    }
    let n_train = (spec.train_frac * n as f64).round() as usize;
    let n_valid = ((spec.valid_frac * n as f64).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let part = |range: std::ops::Range<usize>| {
        let mut v = order[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(Partition {
        train: part(0..n_train),
        valid: part(n_train..n_train + n_valid),
        test: part(n_train + n_valid..n),
    })
}

pub struct Split {
    pub train: FeatureMatrix,
    pub valid: FeatureMatrix,
    pub test: FeatureMatrix,
    pub partition: Partition,
}

pub fn split(matrix: &FeatureMatrix, spec: &SplitSpec) -> Result<Split, ExperimentError> {
    let partition = partition(matrix.n_rows(), spec)?;
    Ok(Split {
        train: matrix.take_rows(&partition.train),
        valid: matrix.take_rows(&partition.valid),
        test: matrix.take_rows(&partition.test),
        partition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowOutcome {
    Ok {
        trees: usize,
        report: EvaluationReport,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Modality letters, or `Baseline`.
    pub name: String,
    pub columns: Vec<String>,
    #[serde(flatten)]
    pub outcome: RowOutcome,
}

impl AblationRow {
    pub fn report(&self) -> Option<&EvaluationReport> {
        match &self.outcome {
            RowOutcome::Ok { report, .. } => Some(report),
            RowOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub format_version: u32,
    pub provenance: Provenance,
    pub dataset_fingerprint: String,
    pub config_hash: String,
    pub config: TrainConfig,
    pub split: SplitSpec,
    pub sizes: SplitSizes,
    /// Names of failed rows; empty for a complete report.
    pub failed: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn is_partial(&self) -> bool {
        !self.failed.is_empty()
    }

    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn spearman(&self, name: &str) -> Option<f64> {
        self.row(name)?.report()?.spearman_r
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }
}

/// Hash of the canonical JSON of the training and split settings.
pub fn config_hash(config: &TrainConfig, split: &SplitSpec) -> String {
    let canonical = serde_json::to_vec(&(config, split)).expect("config serializes");
    sha256_hex(&canonical)
}

fn train_and_evaluate(
    name: &str,
    split: &Split,
    columns: &[&str],
    config: &TrainConfig,
) -> Result<(usize, EvaluationReport), String> {
    let train = split.train.select_columns(columns).map_err(|e| e.to_string())?;
    let valid = split.valid.select_columns(columns).map_err(|e| e.to_string())?;
    let test = split.test.select_columns(columns).map_err(|e| e.to_string())?;
    let valid = (valid.n_rows() > 0).then_some(&valid);
    let (model, _) = gbrt::fit(&train, valid, config).map_err(|e| e.to_string())?;
    let pred = model.predict(&test).map_err(|e| e.to_string())?;
    let report = metrics::evaluate(&pred.lambda, test.target(), name).map_err(|e| e.to_string())?;
    Ok((model.trees().len(), report))
}

/// Trains one model per non-empty modality subset and one on the follower
/// count alone, each evaluated on the test part. A failing row is recorded
/// and the others still run.
pub fn run_ablation(
    matrix: &FeatureMatrix,
    dataset_fingerprint: &str,
    config: &TrainConfig,
    split_spec: &SplitSpec,
) -> Result<AblationReport, ExperimentError> {
    let split = split(matrix, split_spec)?;
    let mut jobs: Vec<(String, Vec<String>)> = ModalitySet::all_nonempty()
        .into_iter()
        .map(|s| {
            let cols = matrix
                .columns()
                .iter()
                .filter(|c| s.contains(c.modality))
                .map(|c| c.name.clone())
                .collect();
            (s.to_string(), cols)
        })
        .collect();
    jobs.push((BASELINE_NAME.to_string(), vec![BASELINE_COLUMN.to_string()]));

    let rows: Vec<AblationRow> = jobs
        .into_par_iter()
        .map(|(name, columns)| {
            let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
            let outcome = match train_and_evaluate(&name, &split, &refs, config) {
                Ok((trees, report)) => RowOutcome::Ok { trees, report },
                Err(error) => RowOutcome::Failed { error },
            };
            AblationRow {
                name,
                columns,
                outcome,
            }
        })
        .collect();
    let failed = rows
        .iter()
        .filter(|r| r.report().is_none())
        .map(|r| r.name.clone())
        .collect();
    Ok(AblationReport {
        format_version: REPORT_FORMAT_VERSION,
        provenance: Provenance::command("ablate")
            .with_config_hash(config_hash(config, split_spec))
            .with_seed(split_spec.seed),
        dataset_fingerprint: dataset_fingerprint.to_string(),
        config_hash: config_hash(config, split_spec),
        config: config.clone(),
        split: split_spec.clone(),
        sizes: SplitSizes {
            train: split.train.n_rows(),
            valid: split.valid.n_rows(),
            test: split.test.n_rows(),
        },
        failed,
        rows,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

/// Fixed-width text table, one line per row.
pub fn render_table(report: &AblationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:>9} {:>9} {:>9} {:>9} {:>7}  flags",
        "Features", "SpearmanR", "R2", "RMSE", "MAPE", "n_mape"
    );
    for row in &report.rows {
        match &row.outcome {
            RowOutcome::Ok { report: r, .. } => {
                let _ = writeln!(
                    out,
                    "{:<9} {:>9} {:>9} {:>9} {:>9} {:>7}  {}",
                    row.name,
                    cell(r.spearman_r),
                    cell(r.r_squared),
                    cell(Some(r.rmse)),
                    cell(r.mape),
                    r.n_mape,
                    r.flags.join(",")
                );
            }
            RowOutcome::Failed { error } => {
                let _ = writeln!(out, "{:<9} failed: {error}", row.name);
            }
        }
    }
    let _ = writeln!(
        out,
        "test rows: {}  dataset: {}  config: {}",
        report.sizes.test,
        &report.dataset_fingerprint[..report.dataset_fingerprint.len().min(12)],
        &report.config_hash[..12]
    );
    out
}
