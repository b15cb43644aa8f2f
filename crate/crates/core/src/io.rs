//! File formats: trace JSONL, label and feature CSVs, id lists, JSON documents.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroundTruth, LabeledExample};
use crate::error::{GateError, Result};
use crate::features::{FamilySet, FeatureConfig};
use crate::schema::{OutcomeLabel, ResponseTrace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub item_id: String,
    pub ground_truth: GroundTruth,
    pub llm_outcome: OutcomeLabel,
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| GateError::io(dir, e))
        }
        _ => Ok(()),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(|e| GateError::io(path, e))
}

pub fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GateError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| GateError::io(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_string(path)?).map_err(|e| GateError::io(path, e))
}

pub fn traces_to_jsonl(traces: &[ResponseTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t).expect("trace serializes"));
        out.push('\n');
    }
    out
}

pub fn write_traces(path: &Path, traces: &[ResponseTrace]) -> Result<()> {
    write_bytes(path, traces_to_jsonl(traces).as_bytes())
}

pub fn read_traces(path: &Path) -> Result<Vec<ResponseTrace>> {
    let file = fs::File::open(path).map_err(|e| GateError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GateError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut trace: ResponseTrace = serde_json::from_str(&line)
            .map_err(|e| GateError::io(path, format!("line {}: {e}", n + 1)))?;
        trace
            .validate()
            .map_err(|e| GateError::io(path, format!("line {}: {e}", n + 1)))?;
        out.push(trace);
    }
    Ok(out)
}

pub fn labels_to_csv(rows: &[LabelRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| GateError::InvalidInput(e.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| GateError::InvalidInput(e.to_string()))
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<()> {
    write_bytes(path, &labels_to_csv(rows)?)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| GateError::io(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| GateError::io(path, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub item_id: String,
    pub reason: String,
}

/// Per-item feature values with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub item_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| GateError::MissingFeature(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Joins features with labels on `item_id`; unlabeled rows are dropped.
    pub fn join_labels(&self, labels: &[LabelRow]) -> Result<Dataset<f64>> {
        let by_id: std::collections::HashMap<&str, &LabelRow> =
            labels.iter().map(|l| (l.item_id.as_str(), l)).collect();
        let mut examples = Vec::with_capacity(self.rows.len());
        for (id, row) in self.item_ids.iter().zip(&self.rows) {
            if let Some(l) = by_id.get(id.as_str()) {
                examples.push(LabeledExample::new(
                    id.clone(),
                    row.clone(),
                    l.llm_outcome,
                    l.ground_truth,
                ));
            }
        }
        Dataset::new(self.feature_names.clone(), examples)
    }
}

pub fn features_to_csv(table: &FeatureTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| GateError::InvalidInput(e.to_string());
    let mut header = vec!["item_id".to_string()];
    header.extend(table.feature_names.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for (id, row) in table.item_ids.iter().zip(&table.rows) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| GateError::InvalidInput(e.to_string()))
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| GateError::io(path, e))?;
    let header = r.headers().map_err(|e| GateError::io(path, e))?.clone();
    if header.get(0) != Some("item_id") {
        return Err(GateError::io(path, "first column must be item_id"));
    }
    let feature_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let (mut item_ids, mut rows) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| GateError::io(path, e))?;
        item_ids.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| GateError::io(path, format!("`{v}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != feature_names.len() {
            return Err(GateError::io(
                path,
                format!("row {} has {} values", &rec[0], row.len()),
            ));
        }
        rows.push(row);
    }
    Ok(FeatureTable {
        feature_names,
        item_ids,
        rows,
    })
}

/// Metadata written next to a feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub families: FamilySet,
    pub feature_config: FeatureConfig,
    pub feature_names: Vec<String>,
    pub excluded: Vec<ExcludedRow>,
}

pub fn sidecar_path(features_csv: &Path) -> std::path::PathBuf {
    features_csv.with_extension("families.json")
}

pub fn ids_to_text(ids: &[String]) -> String {
    let mut s = String::new();
    for id in ids {
        s.push_str(id);
        s.push('\n');
    }
    s
}

pub fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| GateError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(ids_to_text(ids).as_bytes())
        .map_err(|e| GateError::io(path, e))?;
    w.flush().map_err(|e| GateError::io(path, e))
}

pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    Ok(read_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        let rows = vec![
            LabelRow {
                item_id: "a".into(),
                ground_truth: GroundTruth::Violating,
                llm_outcome: OutcomeLabel::InconclusiveDefinition,
            },
            LabelRow {
                item_id: "b".into(),
                ground_truth: GroundTruth::NonViolating,
                llm_outcome: OutcomeLabel::No,
            },
        ];
        write_labels(&p, &rows).unwrap();
        assert_eq!(
            read_string(&p).unwrap(),
            "item_id,ground_truth,llm_outcome\na,1,3\nb,0,0\n"
        );
        assert_eq!(read_labels(&p).unwrap(), rows);
    }

    #[test]
    fn feature_csv_round_trips_floats_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let table = FeatureTable {
            feature_names: vec!["x".into(), "y".into()],
            item_ids: vec!["i1".into(), "i2".into()],
            rows: vec![
                vec![0.1 + 0.2, -1e-300],
                vec![1.0 / 3.0, 12345.678901234567],
            ],
        };
        write_bytes(&p, &features_to_csv(&table).unwrap()).unwrap();
        assert_eq!(read_feature_csv(&p).unwrap(), table);
    }

    #[test]
    fn ids_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/train.txt");
        let ids = vec!["b".to_string(), "a".to_string()];
        write_ids(&p, &ids).unwrap();
        assert_eq!(read_ids(&p).unwrap(), ids);
    }
}
