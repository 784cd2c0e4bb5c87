//! Feature extraction.
//!
//! [`extract`] maps store records onto a fixed set of 22 columns: the
//! twenty author, content, language and temporal features plus two author
//! ratio features. Each column carries its modality, its kind (ordinal,
//! categorical or continuous) and the transform that produced it. The target
//! is `ln(retweet_total + 1)`.

mod io;
mod sentiment;

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::language;
use crate::metrics;
use crate::store::TweetRecord;

pub use io::{read_csv, schema_path, write_csv, FeatureSchema, SchemaColumn};
pub use sentiment::{LexiconSentiment, SentimentError, SentimentProvider};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("column length mismatch: {0}")]
    Shape(String),
    #[error("invalid target at row {row}: {value}")]
    InvalidTarget { row: usize, value: f64 },
    #[error("empty modality subset")]
    EmptySubset,
    #[error("invalid modality letter {0:?}")]
    BadModality(char),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("pearson report needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("target is constant")]
    ConstantTarget,
    #[error("feature file: {0}")]
    Io(#[from] std::io::Error),
    #[error("feature csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("feature schema: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "A")]
    Author,
    #[serde(rename = "C")]
    Content,
    #[serde(rename = "T")]
    Temporal,
    #[serde(rename = "L")]
    Language,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Author,
        Modality::Content,
        Modality::Temporal,
        Modality::Language,
    ];

    pub fn letter(self) -> char {
        match self {
            Modality::Author => 'A',
            Modality::Content => 'C',
            Modality::Temporal => 'T',
            Modality::Language => 'L',
        }
    }

    fn bit(self) -> u8 {
        match self {
            Modality::Author => 1,
            Modality::Content => 2,
            Modality::Temporal => 4,
            Modality::Language => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Ordinal,
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `ln(x + 1)`
    LnPlusOne,
    /// Whole days between account creation and posting, floored.
    DaysBetween,
    /// Sum of the per-type attachment counts.
    AttachmentSum,
    /// Ratio of two counts with the denominator floored at 1.
    Ratio,
    /// Small non-negative integer category code.
    Code,
    /// Output of the sentiment provider.
    Sentiment,
}

/// A set of modalities, written in canonical `ACTL` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModalitySet(u8);

impl ModalitySet {
    pub const ALL: ModalitySet = ModalitySet(0b1111);

    pub fn empty() -> Self {
        ModalitySet(0)
    }

    pub fn single(m: Modality) -> Self {
        ModalitySet(m.bit())
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn insert(&mut self, m: Modality) {
        self.0 |= m.bit();
    }

    pub fn union(self, other: ModalitySet) -> Self {
        ModalitySet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Modality> {
        Modality::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    /// The fifteen non-empty subsets: singles, pairs, triples, then all four.
    pub fn all_nonempty() -> Vec<ModalitySet> {
        ["A", "C", "T", "L", "AC", "AT", "AL", "CT", "CL", "TL", "ATL", "ACT", "ACL", "CTL", "ACTL"]
            .iter()
            .map(|s| s.parse().expect("static subset label"))
            .collect()
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in self.iter() {
            write!(f, "{}", m.letter())?;
        }
        Ok(())
    }
}

impl FromStr for ModalitySet {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = ModalitySet::empty();
        for c in s.chars() {
            let m = match c.to_ascii_uppercase() {
                'A' => Modality::Author,
                'C' => Modality::Content,
                'T' => Modality::Temporal,
                'L' => Modality::Language,
                other => return Err(FeatureError::BadModality(other)),
            };
            set.insert(m);
        }
        if set.is_empty() {
            return Err(FeatureError::EmptySubset);
        }
        Ok(set)
    }
}

impl Serialize for ModalitySet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModalitySet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Static description of one extracted column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: &'static str,
    pub modality: Modality,
    pub kind: FeatureKind,
    pub transform: Transform,
}

const fn col(
    name: &'static str,
    modality: Modality,
    kind: FeatureKind,
    transform: Transform,
) -> ColumnSpec {
    ColumnSpec {
        name,
        modality,
        kind,
        transform,
    }
}

use FeatureKind::{Categorical, Continuous, Ordinal};
use Modality::{Author, Content, Language, Temporal};

/// The extracted columns, in output order.
pub const COLUMNS: [ColumnSpec; 22] = [
    col("followersCount", Author, Ordinal, Transform::Identity),
    col("friendsCount", Author, Ordinal, Transform::Identity),
    col("accountAgeDays", Author, Ordinal, Transform::DaysBetween),
    col("statusesCount", Author, Ordinal, Transform::Identity),
    col("actorFavoritesCount", Author, Ordinal, Transform::LnPlusOne),
    col("actorListedCount", Author, Ordinal, Transform::LnPlusOne),
    col("actorVerified", Author, Categorical, Transform::Code),
    col("statusesPerDay", Author, Continuous, Transform::Ratio),
    col("followersPerStatus", Author, Continuous, Transform::Ratio),
    col("attachmentCount", Content, Ordinal, Transform::AttachmentSum),
    col("mentionCount", Content, Ordinal, Transform::Identity),
    col("hashtagsCount", Content, Ordinal, Transform::Identity),
    col("mediaCount", Content, Ordinal, Transform::Identity),
    col("urlCount", Content, Ordinal, Transform::Identity),
    col("isQuote", Content, Categorical, Transform::Code),
    col("languageIndex", Language, Categorical, Transform::Code),
    col("sentimentValue", Language, Continuous, Transform::Sentiment),
    col("postedHour", Temporal, Ordinal, Transform::Identity),
    col("postedDay", Temporal, Ordinal, Transform::Identity),
    col("postedMonth", Temporal, Ordinal, Transform::Identity),
    col("postedDayTime", Temporal, Categorical, Transform::Code),
    col("postedWeekDay", Temporal, Categorical, Transform::Code),
];

pub const BASELINE_COLUMN: &str = "followersCount";

pub fn column_spec(name: &str) -> Option<&'static ColumnSpec> {
    COLUMNS.iter().find(|c| c.name == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub modality: Modality,
    pub kind: FeatureKind,
    pub transform: Transform,
    pub values: Vec<f64>,
}

/// Columnar dataset with a log-scale target and one document id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    columns: Vec<FeatureColumn>,
    target: Vec<f64>,
    row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        columns: Vec<FeatureColumn>,
        target: Vec<f64>,
        row_ids: Vec<String>,
    ) -> Result<Self, FeatureError> {
        let n = target.len();
        if row_ids.len() != n {
            return Err(FeatureError::Shape(format!(
                "{} row ids for {n} targets",
                row_ids.len()
            )));
        }
        for c in &columns {
            if c.values.len() != n {
                return Err(FeatureError::Shape(format!(
                    "column {} has {} values for {n} rows",
                    c.name,
                    c.values.len()
                )));
            }
        }
        if let Some((row, &value)) = target
            .iter()
            .enumerate()
            .find(|(_, t)| !t.is_finite() || **t < 0.0)
        {
            return Err(FeatureError::InvalidTarget { row, value });
        }
        Ok(FeatureMatrix {
            columns,
            target,
            row_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&FeatureColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// Restricts the matrix to columns whose modality is in `subset`.
    pub fn select_modalities(&self, subset: ModalitySet) -> Result<FeatureMatrix, FeatureError> {
        if subset.is_empty() {
            return Err(FeatureError::EmptySubset);
        }
        Ok(FeatureMatrix {
            columns: self
                .columns
                .iter()
                .filter(|c| subset.contains(c.modality))
                .cloned()
                .collect(),
            target: self.target.clone(),
            row_ids: self.row_ids.clone(),
        })
    }

    /// Restricts the matrix to the named columns, in the given order.
    pub fn select_columns(&self, names: &[&str]) -> Result<FeatureMatrix, FeatureError> {
        let columns = names
            .iter()
            .map(|n| {
                self.column(n)
                    .cloned()
                    .ok_or_else(|| FeatureError::UnknownColumn(n.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(FeatureMatrix {
            columns,
            target: self.target.clone(),
            row_ids: self.row_ids.clone(),
        })
    }

    /// Keeps the given rows, in the given order.
    pub fn take_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self
                .columns
                .iter()
                .map(|c| FeatureColumn {
                    values: rows.iter().map(|&r| c.values[r]).collect(),
                    ..c.clone()
                })
                .collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
        }
    }
}

/// Target transform shared by extraction and its checks.
pub fn log_target(retweet_total: u64) -> f64 {
    ((retweet_total + 1) as f64).ln()
}

fn ln_plus_one(x: u64) -> f64 {
    ((x as f64) + 1.0).ln()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRejection {
    pub row_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub matrix: FeatureMatrix,
    pub rejected: Vec<RowRejection>,
    pub sentiment_version: String,
}

/// Bucket of the UTC hour: night, morning, afternoon, evening.
pub fn day_time_bucket(hour: u32) -> u32 {
    hour / 6
}

fn extract_row(
    r: &TweetRecord,
    sentiment: &dyn SentimentProvider,
) -> Result<[f64; COLUMNS.len()], String> {
    let lang = language::language_index(&r.language_code)
        .ok_or_else(|| format!("unsupported language {:?}", r.language_code))?;
    if r.posted_at < r.account_created_at {
        return Err("posted_at precedes account_created_at".into());
    }
    let sentiment_value = sentiment
        .score(&r.text, &r.language_code)
        .map_err(|e| e.to_string())?;
    if !(0.0..=1.0).contains(&sentiment_value) {
        return Err(format!("sentiment {sentiment_value} outside [0, 1]"));
    }
    let age_days = (r.posted_at - r.account_created_at).num_days() as f64;
    let attachments =
        r.mention_count + r.hashtags_count + r.media_count + r.url_count + r.symbol_count;
    let t = r.posted_at;
    Ok([
        r.followers_count as f64,
        r.friends_count as f64,
        age_days,
        r.statuses_count as f64,
        ln_plus_one(r.actor_favorites_count),
        ln_plus_one(r.actor_listed_count),
        f64::from(u8::from(r.actor_verified)),
        r.statuses_count as f64 / age_days.max(1.0),
        r.followers_count as f64 / (r.statuses_count.max(1) as f64),
        attachments as f64,
        r.mention_count as f64,
        r.hashtags_count as f64,
        r.media_count as f64,
        r.url_count as f64,
        f64::from(u8::from(r.is_quote)),
        lang as f64,
        sentiment_value,
        f64::from(t.hour()),
        f64::from(t.day()),
        f64::from(t.month()),
        f64::from(day_time_bucket(t.hour())),
        f64::from(t.weekday().num_days_from_monday()),
    ])
}

/// Builds the feature matrix for `records`. Rows come out sorted by id;
/// records that cannot be featurized are returned with a reason.
pub fn extract<R>(records: &[R], sentiment: &dyn SentimentProvider) -> Extraction
where
    R: Borrow<TweetRecord> + Sync,
{
    let results: Vec<(&TweetRecord, Result<[f64; COLUMNS.len()], String>)> = records
        .par_iter()
        .map(|r| {
            let r = r.borrow();
            (r, extract_row(r, sentiment))
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut rejected = Vec::new();
    for (r, res) in results {
        match res {
            Ok(values) => rows.push((r, values)),
            Err(reason) => rejected.push(RowRejection {
                row_id: r.id.clone(),
                reason,
            }),
        }
    }
    rows.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let columns = COLUMNS
        .iter()
        .enumerate()
        .map(|(j, spec)| FeatureColumn {
            name: spec.name.to_string(),
            modality: spec.modality,
            kind: spec.kind,
            transform: spec.transform,
            values: rows.iter().map(|(_, v)| v[j]).collect(),
        })
        .collect();
    let target = rows.iter().map(|(r, _)| log_target(r.retweet_total)).collect();
    let row_ids = rows.iter().map(|(r, _)| r.id.clone()).collect();
    Extraction {
        matrix: FeatureMatrix {
            columns,
            target,
            row_ids,
        },
        rejected,
        sentiment_version: sentiment.version().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonEntry {
    pub feature: String,
    pub modality: Modality,
    pub r: f64,
    /// Set when the column is constant; `r` is then reported as 0.
    pub degenerate: bool,
}

/// Sample Pearson correlation of every column with the target. Categorical
/// columns are correlated through their integer codes.
pub fn pearson_report(matrix: &FeatureMatrix) -> Result<Vec<PearsonEntry>, FeatureError> {
    if matrix.n_rows() < 2 {
        return Err(FeatureError::TooFewRows(matrix.n_rows()));
    }
    if metrics::is_constant(matrix.target()) {
        return Err(FeatureError::ConstantTarget);
    }
    Ok(matrix
        .columns()
        .iter()
        .map(|c| {
            let r = metrics::pearson(&c.values, matrix.target());
            PearsonEntry {
                feature: c.name.clone(),
                modality: c.modality,
                r: r.unwrap_or(0.0),
                degenerate: r.is_none(),
            }
        })
        .collect())
}
