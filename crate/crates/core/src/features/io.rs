//! Columnar CSV with a JSON sidecar schema.
//!
//! The CSV header is `row_id,<feature columns...>,target`. Floats are written
//! in shortest round-trip form, so reading a file back reproduces every value
//! bit for bit. The sidecar at `<path>.schema.json` carries modality, kind and
//! transform for each column plus the producing command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FeatureColumn, FeatureError, FeatureKind, FeatureMatrix, Modality, Transform};
use crate::provenance::Provenance;

pub const SCHEMA_VERSION: u32 = 1;
const TARGET_COLUMN: &str = "target";
const TARGET_TRANSFORM: &str = "ln(retweet_total+1)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaColumn {
    pub name: String,
    pub modality: Modality,
    pub kind: FeatureKind,
    pub transform: Transform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub format_version: u32,
    pub n_rows: usize,
    pub columns: Vec<SchemaColumn>,
    pub target: String,
    pub target_transform: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment_provider: Option<String>,
    pub provenance: Provenance,
}

pub fn schema_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_os_string();
    s.push(".schema.json");
    PathBuf::from(s)
}

impl FeatureMatrix {
    /// Serialized CSV body; also the input to dataset fingerprints.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>, FeatureError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row_id"];
        header.extend(self.column_names());
        header.push(TARGET_COLUMN);
        w.write_record(&header)?;
        let mut fields: Vec<String> = Vec::with_capacity(header.len());
        for row in 0..self.n_rows() {
            fields.clear();
            fields.push(self.row_ids()[row].clone());
            for c in self.columns() {
                fields.push(c.values[row].to_string());
            }
            fields.push(self.target()[row].to_string());
            w.write_record(&fields)?;
        }
        w.into_inner()
            .map_err(|e| FeatureError::Io(std::io::Error::other(e.to_string())))
    }

    pub fn schema(&self, provenance: Provenance, sentiment: Option<&str>) -> FeatureSchema {
        FeatureSchema {
            format_version: SCHEMA_VERSION,
            n_rows: self.n_rows(),
            columns: self
                .columns()
                .iter()
                .map(|c| SchemaColumn {
                    name: c.name.clone(),
                    modality: c.modality,
                    kind: c.kind,
                    transform: c.transform,
                })
                .collect(),
            target: TARGET_COLUMN.into(),
            target_transform: TARGET_TRANSFORM.into(),
            sentiment_provider: sentiment.map(String::from),
            provenance,
        }
    }
}

/// Writes the CSV and its sidecar; returns the CSV bytes written.
pub fn write_csv(
    matrix: &FeatureMatrix,
    path: &Path,
    provenance: Provenance,
    sentiment: Option<&str>,
) -> Result<Vec<u8>, FeatureError> {
    let bytes = matrix.to_csv_bytes()?;
    fs::write(path, &bytes)?;
    let schema = matrix.schema(provenance, sentiment);
    let json = serde_json::to_vec_pretty(&schema).map_err(|e| FeatureError::Schema(e.to_string()))?;
    fs::write(schema_path(path), json)?;
    Ok(bytes)
}

/// Reads a feature CSV and its sidecar. Returns the matrix, the schema and
/// the raw CSV bytes (for fingerprinting).
pub fn read_csv(path: &Path) -> Result<(FeatureMatrix, FeatureSchema, Vec<u8>), FeatureError> {
    let sidecar = schema_path(path);
    let schema: FeatureSchema = serde_json::from_slice(&fs::read(&sidecar).map_err(|e| {
        FeatureError::Schema(format!("cannot read {}: {e}", sidecar.display()))
    })?)
    .map_err(|e| FeatureError::Schema(e.to_string()))?;
    if schema.format_version != SCHEMA_VERSION {
        return Err(FeatureError::Schema(format!(
            "unsupported schema version {}",
            schema.format_version
        )));
    }
    let bytes = fs::read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("row_id")
        .chain(schema.columns.iter().map(|c| c.name.as_str()))
        .chain(std::iter::once(TARGET_COLUMN))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(FeatureError::Schema(format!(
            "csv header does not match sidecar: {:?}",
            header
        )));
    }
    let n_cols = schema.columns.len();
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(schema.n_rows); n_cols];
    let mut target = Vec::with_capacity(schema.n_rows);
    let mut row_ids = Vec::with_capacity(schema.n_rows);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| -> Result<f64, FeatureError> {
            rec[j].parse::<f64>().map_err(|e| {
                FeatureError::Schema(format!("row {} field {}: {e}", i + 1, expected[j]))
            })
        };
        row_ids.push(rec[0].to_string());
        for (j, col) in values.iter_mut().enumerate() {
            col.push(parse(j + 1)?);
        }
        target.push(parse(n_cols + 1)?);
    }
    if target.len() != schema.n_rows {
        return Err(FeatureError::Schema(format!(
            "sidecar declares {} rows, csv has {}",
            schema.n_rows,
            target.len()
        )));
    }
    let columns = schema
        .columns
        .iter()
        .zip(values)
        .map(|(c, values)| FeatureColumn {
            name: c.name.clone(),
            modality: c.modality,
            kind: c.kind,
            transform: c.transform,
            values,
        })
        .collect();
    let matrix = FeatureMatrix::new(columns, target, row_ids)?;
    Ok((matrix, schema, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract, LexiconSentiment};

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let recs: Vec<_> = (0..5)
            .map(|i| {
                let mut r = crate::features::tests::record(&format!("id{i}"));
                r.retweet_total = i * 37;
                r.actor_favorites_count = i * 1_000_003;
                r
            })
            .collect();
        let m = extract(&recs, &LexiconSentiment).matrix;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let written = write_csv(&m, &path, Provenance::command("test"), Some("lexicon-v1")).unwrap();
        let (back, schema, bytes) = read_csv(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(bytes, written);
        assert_eq!(schema.columns.len(), 22);
        assert_eq!(schema.provenance.command, "test");
        for (a, b) in back.target().iter().zip(m.target()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_mismatch_is_an_error() {
        let m = extract(&[crate::features::tests::record("a")], &LexiconSentiment).matrix;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_csv(&m, &path, Provenance::command("test"), None).unwrap();
        let text = fs::read_to_string(&path).unwrap().replacen("followersCount", "fans", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(read_csv(&path), Err(FeatureError::Schema(_))));
    }

    #[test]
    fn missing_sidecar_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        fs::write(&path, "row_id,target\n").unwrap();
        assert!(matches!(read_csv(&path), Err(FeatureError::Schema(_))));
    }
}
