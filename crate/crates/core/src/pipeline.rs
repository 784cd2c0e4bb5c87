//! File-level stage runners shared by the command-line front end and
//! [`run_pipeline`].
//!
//! Each stage reads its inputs from disk, writes its outputs, and returns a
//! serializable summary. Outputs carry the producing command and config hash,
//! either embedded (models, reports) or in a `.meta.json` sidecar.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::experiments::{self, render_table, AblationReport, ExperimentError, SplitSpec};

use crate::features::{extract, read_csv, write_csv, pearson_report, FeatureError, FeatureMatrix, LexiconSentiment, PearsonEntry, RowRejection};
use crate::gbrt::{self, Ensemble, GbrtError, TrainingLog};
use crate::metrics::{self, EvaluationReport, MetricsError};
use crate::provenance::Provenance;
use crate::sha256_hex;
use crate::store::{
    parse_jsonl, CompactionSummary, ComplianceRequest, ComplianceSummary, IngestSummary, SnapshotFilter, Store,
    StoreError, StoreOptions, TweetRecord,
};
use crate::synth::{self, SynthError, SynthSpec};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gbrt(#[from] GbrtError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open_input(path: &Path) -> Result<BufReader<File>, PipelineError> {
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>, PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("summary serializes");
    bytes.push(b'\n');
    fs::write(path, &bytes).map_err(io_err(path))?;
    Ok(bytes)
}

/// Sidecar path for outputs that cannot embed provenance.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Rows of a feature file that a stage operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSelection {
    All,
    Train,
    Valid,
    Test,
}

impl FromStr for RowSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(RowSelection::All),
            "train" => Ok(RowSelection::Train),
            "valid" => Ok(RowSelection::Valid),
            "test" => Ok(RowSelection::Test),
            other => Err(format!("unknown row selection {other:?} (all, train, valid, test)")),
        }
    }
}

fn select_rows(matrix: &FeatureMatrix, rows: RowSelection, split: &SplitSpec) -> Result<FeatureMatrix, PipelineError> {
    if rows == RowSelection::All {
        return Ok(matrix.clone());
    }
    let p = experiments::partition(matrix.n_rows(), split)?;
    let idx = match rows {
        RowSelection::Train => &p.train,
        RowSelection::Valid => &p.valid,
        RowSelection::Test => &p.test,
        RowSelection::All => unreachable!(),
    };
    Ok(matrix.take_rows(idx))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub records: usize,
    pub zero_retweet_fraction: f64,
    pub expected_zero_fraction: f64,
    pub intercept: f64,
    pub compliance_requests: usize,
    pub output_sha256: String,
}

/// Deletion directives to emit alongside a generated corpus.
#[derive(Debug, Clone)]
pub struct ComplianceOutput {
    pub path: PathBuf,
    pub status_rate: f64,
    pub user_rate: f64,
}

pub fn generate(
    spec: &SynthSpec,
    out: &Path,
    compliance: Option<&ComplianceOutput>,
) -> Result<GenerateSummary, PipelineError> {
    let data = synth::generate(spec)?;
    let mut bytes = Vec::new();
    synth::write_jsonl(&data.records, &mut bytes)?;
    fs::write(out, &bytes).map_err(io_err(out))?;
    let provenance = Provenance::command("generate").with_seed(spec.seed);
    write_json(&meta_path(out), &(&provenance, spec))?;
    let mut n_requests = 0;
    if let Some(c) = compliance {
        let reqs = synth::compliance_requests(&data.records, c.status_rate, c.user_rate, spec.seed);
        n_requests = reqs.len();
        let file = File::create(&c.path).map_err(io_err(&c.path))?;
        synth::write_jsonl(&reqs, BufWriter::new(file))?;
        write_json(&meta_path(&c.path), &provenance)?;
    }
    Ok(GenerateSummary {
        records: data.records.len(),
        zero_retweet_fraction: data.observed_zero_fraction(),
        expected_zero_fraction: data.expected_zero_fraction,
        intercept: data.intercept,
        compliance_requests: n_requests,
        output_sha256: sha256_hex(&bytes),
    })
}

pub fn ingest(input: &Path, store_dir: &Path) -> Result<IngestSummary, PipelineError> {
    let reader = open_input(input)?;
    let store = Store::open(store_dir, StoreOptions::default())?;
    let summary = store.ingest(parse_jsonl::<TweetRecord, _>(reader))?;
    store.sync()?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplyOutput {
    #[serde(flatten)]
    pub summary: ComplianceSummary,
    pub compaction: CompactionSummary,
}

/// Applies deletion requests and compacts, so deleted data is gone from disk
/// when this returns.
pub fn comply(input: &Path, store_dir: &Path) -> Result<ComplyOutput, PipelineError> {
    let reader = open_input(input)?;
    let store = Store::open(store_dir, StoreOptions::default())?;
    let summary = store.apply_compliance(parse_jsonl::<ComplianceRequest, _>(reader))?;
    let compaction = store.compact()?;
    store.sync()?;
    Ok(ComplyOutput { summary, compaction })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturizeSummary {
    pub snapshot_sequence: u64,
    pub rows: usize,
    pub columns: usize,
    pub rejected: Vec<RowRejection>,
    pub sentiment_provider: String,
    pub dataset_fingerprint: String,
    pub pearson: Vec<PearsonEntry>,
}

pub fn featurize(store_dir: &Path, out: &Path, provenance: Provenance) -> Result<FeaturizeSummary, PipelineError> {
    if !store_dir.is_dir() {
        return Err(PipelineError::Invalid(format!("store {} does not exist", store_dir.display())));
    }
    let store = Store::open(store_dir, StoreOptions::default())?;
    let snapshot = store.snapshot(&SnapshotFilter::default());
    let ex = extract(&snapshot.records, &LexiconSentiment);
    let bytes = write_csv(&ex.matrix, out, provenance, Some(&ex.sentiment_version))?;
    let pearson = pearson_report(&ex.matrix).unwrap_or_default();
    Ok(FeaturizeSummary {
        snapshot_sequence: snapshot.as_of_seq,
        rows: ex.matrix.n_rows(),
        columns: ex.matrix.n_columns(),
        rejected: ex.rejected,
        sentiment_provider: ex.sentiment_version,
        dataset_fingerprint: sha256_hex(&bytes),
        pearson,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_rows: usize,
    pub valid_rows: usize,
    pub trees: usize,
    pub stopped_early: bool,
    pub final_train_loss: f64,
    pub best_valid_rmse: Option<f64>,
    pub dataset_fingerprint: String,
    pub model_sha256: String,
    pub log: TrainingLog,
}

/// Trains on the train part of the split, early-stopping on the validation
/// part.
pub fn train(features: &Path, config: &RunConfig, model_out: &Path) -> Result<TrainSummary, PipelineError> {
    let (matrix, _, bytes) = read_csv(features)?;
    let parts = experiments::split(&matrix, &config.split)?;
    let valid = (parts.valid.n_rows() > 0).then_some(&parts.valid);
    let (model, log) = gbrt::fit(&parts.train, valid, &config.train)?;
    let provenance = Provenance::command("train")
        .with_config_hash(config.hash())
        .with_seed(config.train.seed);
    let model_bytes = model.save(model_out, provenance)?;
    Ok(TrainSummary {
        train_rows: parts.train.n_rows(),
        valid_rows: parts.valid.n_rows(),
        trees: model.trees().len(),
        stopped_early: log.stopped_early,
        final_train_loss: *log.train_loss.last().expect("initial loss is logged"),
        best_valid_rmse: log.valid_rmse.iter().copied().reduce(f64::min),
        dataset_fingerprint: sha256_hex(&bytes),
        model_sha256: sha256_hex(&model_bytes),
        log,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictSummary {
    pub rows: usize,
    pub output_sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionMeta {
    provenance: Provenance,
    model_schema_hash: String,
    model_provenance: Provenance,
    dataset_fingerprint: String,
    rows: RowSelection,
}

/// Writes `row_id,raw_score,lambda` for the selected rows.
pub fn predict(
    model_path: &Path,
    features: &Path,
    out: &Path,
    rows: RowSelection,
    split: &SplitSpec,
) -> Result<PredictSummary, PipelineError> {
    let (model, model_prov) = Ensemble::load(model_path)?;
    let (matrix, _, bytes) = read_csv(features)?;
    let matrix = select_rows(&matrix, rows, split)?;
    let pred = model.predict(&matrix)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row_id", "raw_score", "lambda"]).map_err(FeatureError::from)?;
    for ((id, f), l) in matrix.row_ids().iter().zip(&pred.raw).zip(&pred.lambda) {
        w.write_record([id.as_str(), &f.to_string(), &l.to_string()])
            .map_err(FeatureError::from)?;
    }
    let csv_bytes = w
        .into_inner()
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    fs::write(out, &csv_bytes).map_err(io_err(out))?;
    let meta = PredictionMeta {
        provenance: Provenance::command("predict").with_config_hash(model_prov.config_hash.clone().unwrap_or_default()),
        model_schema_hash: model.schema_hash(),
        model_provenance: model_prov,
        dataset_fingerprint: sha256_hex(&bytes),
        rows,
    };
    write_json(&meta_path(out), &meta)?;
    Ok(PredictSummary {
        rows: matrix.n_rows(),
        output_sha256: sha256_hex(&csv_bytes),
    })
}

/// Evaluation report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub provenance: Provenance,
    pub model_schema_hash: String,
    pub dataset_fingerprint: String,
    pub rows: RowSelection,
    #[serde(flatten)]
    pub report: EvaluationReport,
}

/// Metrics of the model's predicted rate against the log-scale target.
pub fn evaluate(
    model_path: &Path,
    features: &Path,
    report_path: &Path,
    rows: RowSelection,
    split: &SplitSpec,
) -> Result<EvaluationOutput, PipelineError> {
    let (model, model_prov) = Ensemble::load(model_path)?;
    let (matrix, _, bytes) = read_csv(features)?;
    let matrix = select_rows(&matrix, rows, split)?;
    let pred = model.predict(&matrix)?;
    let name: Vec<&str> = model.features().iter().map(|f| f.name.as_str()).collect();
    let subset = subset_label(&name);
    let report = metrics::evaluate(&pred.lambda, matrix.target(), subset)?;
    let out = EvaluationOutput {
        provenance: Provenance::command("evaluate").with_config_hash(model_prov.config_hash.unwrap_or_default()),
        model_schema_hash: model.schema_hash(),
        dataset_fingerprint: sha256_hex(&bytes),
        rows,
        report,
    };
    write_json(report_path, &out)?;
    Ok(out)
}

/// Modality letters covered by a column list, or the single column name when
/// it is the follower-count baseline.
fn subset_label(columns: &[&str]) -> String {
    if columns == [crate::features::BASELINE_COLUMN] {
        return experiments::BASELINE_NAME.to_string();
    }
    let mut set = crate::features::ModalitySet::empty();
    for c in columns {
        if let Some(spec) = crate::features::column_spec(c) {
            set.insert(spec.modality);
        }
    }
    set.to_string()
}

/// Runs the ablation and writes the JSON report plus a `.txt` table next to
/// it.
pub fn ablate(features: &Path, config: &RunConfig, report_path: &Path) -> Result<AblationReport, PipelineError> {
    let (matrix, _, bytes) = read_csv(features)?;
    let mut report = experiments::run_ablation(&matrix, &sha256_hex(&bytes), &config.train, &config.split)?;
    report.config_hash = config.hash();
    report.provenance = Provenance::command("ablate")
        .with_config_hash(config.hash())
        .with_seed(config.split.seed);
    fs::write(report_path, report.to_json()).map_err(io_err(report_path))?;
    let table_path = report_path.with_extension("txt");
    fs::write(&table_path, render_table(&report)).map_err(io_err(&table_path))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Succeeded,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    /// Paths relative to the work directory.
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub succeeded: bool,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn failed_stage(&self) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.status == StageStatus::Failed)
    }
}

pub const STAGES: [&str; 7] = ["ingest", "comply", "featurize", "train", "predict", "evaluate", "ablate"];

/// Runs every stage in order inside `config.pipeline.work_dir` and writes
/// `manifest.json` there. Stops at the first failure; later stages are
/// recorded as skipped and earlier outputs are kept.
pub fn run_pipeline(config: &RunConfig) -> Result<Manifest, PipelineError> {
    let work = &config.pipeline.work_dir;
    fs::create_dir_all(work).map_err(io_err(work))?;
    let store = work.join("store");
    let features = work.join("features.csv");
    let model = work.join("model.json");
    let predictions = work.join("predictions.csv");
    let evaluation = work.join("evaluation.json");
    let ablation = work.join("ablation.json");
    let hash = config.hash();

    let mut manifest = Manifest {
        format_version: MANIFEST_FORMAT_VERSION,
        config_hash: hash.clone(),
        succeeded: true,
        stages: Vec::new(),
    };
    for stage in STAGES {
        if !manifest.succeeded {
            manifest.stages.push(StageRecord {
                stage: stage.into(),
                status: StageStatus::Skipped,
                outputs: Vec::new(),
                error: None,
                elapsed_ms: 0,
            });
            continue;
        }
        let started = Instant::now();
        let result: Result<Vec<&Path>, PipelineError> = (|| {
            match stage {
                "ingest" => {
                    let input = config
                        .pipeline
                        .records
                        .as_deref()
                        .ok_or_else(|| PipelineError::Invalid("pipeline.records is not set".into()))?;
                    let s = ingest(input, &store)?;
                    write_json(&work.join("ingest.json"), &s)?;
                    Ok(vec![store.as_path()])
                }
                "comply" => {
                    if let Some(input) = config.pipeline.compliance.as_deref() {
                        let s = comply(input, &store)?;
                        write_json(&work.join("comply.json"), &s)?;
                    }
                    Ok(vec![store.as_path()])
                }
                "featurize" => {
                    let prov = Provenance::command("featurize").with_config_hash(hash.clone());
                    let s = featurize(&store, &features, prov)?;
                    write_json(&work.join("featurize.json"), &s)?;
                    Ok(vec![features.as_path()])
                }
                "train" => {
                    let s = train(&features, config, &model)?;
                    write_json(&work.join("train.json"), &s)?;
                    Ok(vec![model.as_path()])
                }
                "predict" => {
                    predict(&model, &features, &predictions, RowSelection::All, &config.split)?;
                    Ok(vec![predictions.as_path()])
                }
                "evaluate" => {
                    evaluate(&model, &features, &evaluation, RowSelection::Test, &config.split)?;
                    Ok(vec![evaluation.as_path()])
                }
                "ablate" => {
                    ablate(&features, config, &ablation)?;
                    Ok(vec![ablation.as_path()])
                }
                _ => unreachable!("unknown stage"),
            }
        })();
        let elapsed_ms = started.elapsed().as_millis() as u64;
        let rel = |p: &Path| {
            p.strip_prefix(work)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        manifest.stages.push(match result {
            Ok(outputs) => StageRecord {
                stage: stage.into(),
                status: StageStatus::Succeeded,
                outputs: outputs.into_iter().map(rel).collect(),
                error: None,
                elapsed_ms,
            },
            Err(e) => {
                manifest.succeeded = false;
                StageRecord {
                    stage: stage.into(),
                    status: StageStatus::Failed,
                    outputs: Vec::new(),
                    error: Some(e.to_string()),
                    elapsed_ms,
                }
            }
        });
        log::info!("stage {stage} finished in {elapsed_ms} ms");
    }
    let path = work.join("manifest.json");
    let mut f = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(|e| PipelineError::Invalid(e.to_string()))?;
    f.write_all(b"\n").map_err(io_err(&path))?;
    f.flush().map_err(io_err(&path))?;
    Ok(manifest)
}
