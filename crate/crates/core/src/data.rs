//! Datasets of ordinally encoded architectures, their on-disk formats, and
//! train/validation splitting.
//!
//! Two file formats are supported.
//!
//! CSV: a header `f0,f1,...,f{d-1},label`, one architecture per line, integer
//! feature cells, and a label cell that may be left empty for prediction sets.
//!
//! JSON:
//! ```json
//! {"cardinalities": [3, 3], "label_kind": "rank",
//!  "records": [{"features": [0, 2], "label": 1}, {"features": [1, 1], "label": null}]}
//! ```
//!
//! Rank labels are ascending: rank 1 is the best architecture. Ties are allowed.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    #[default]
    Rank,
    Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchRecord {
    pub features: Vec<u32>,
    pub label: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    #[serde(default)]
    pub task_id: u32,
    pub records: Vec<ArchRecord>,
    pub cardinalities: Vec<u32>,
    pub label_kind: LabelKind,
}

/// On-disk layout of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Json,
}

impl FileFormat {
    /// Picks the format from the file extension; anything other than `.json` is CSV.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => FileFormat::Json,
            _ => FileFormat::Csv,
        }
    }
}

/// Column declaration applied while loading.
///
/// Declared cardinalities win over the file's own declaration, which wins over
/// the observed `max + 1`. `label_kind` only matters for CSV, where the file
/// does not carry it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    pub format: Option<FileFormat>,
    pub label_kind: Option<LabelKind>,
    pub cardinalities: Option<Vec<u32>>,
    pub task_id: Option<u32>,
}

impl TaskDataset {
    /// Builds a dataset and checks every invariant. `cardinalities` of `None`
    /// means observed `max + 1` per column.
    pub fn new(
        task_id: u32,
        records: Vec<ArchRecord>,
        cardinalities: Option<Vec<u32>>,
        label_kind: LabelKind,
    ) -> Result<TaskDataset> {
        let first = records.first().ok_or(Error::EmptyDataset)?;
        let dim = first.features.len();
        if dim == 0 {
            return Err(Error::Schema("records have no features".into()));
        }
        let mut observed = vec![0u32; dim];
        for (i, r) in records.iter().enumerate() {
            if r.features.len() != dim {
                return Err(Error::Schema(format!(
                    "record {i} has {} features, expected {dim}",
                    r.features.len()
                )));
            }
            for (o, &v) in observed.iter_mut().zip(&r.features) {
                *o = (*o).max(v + 1);
            }
            if let Some(label) = r.label {
                check_label(i, label, label_kind)?;
            }
        }
        let cardinalities = match cardinalities {
            Some(declared) => {
                if declared.len() != dim {
                    return Err(Error::Schema(format!(
                        "{} cardinalities declared for {dim} feature columns",
                        declared.len()
                    )));
                }
                for (j, (&d, &o)) in declared.iter().zip(&observed).enumerate() {
                    if d < o {
                        return Err(Error::Schema(format!(
                            "column f{j} has value {} but declared cardinality {d}",
                            o - 1
                        )));
                    }
                }
                declared
            }
            None => observed,
        };
        Ok(TaskDataset { task_id, records, cardinalities, label_kind })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.cardinalities.len()
    }

    /// All labels, or `None` if any record is unlabeled.
    pub fn labels(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn features(&self) -> Vec<&[u32]> {
        self.records.iter().map(|r| r.features.as_slice()).collect()
    }

    /// Records at `indices`, in that order, keeping the column declaration.
    pub fn subset(&self, indices: &[usize]) -> TaskDataset {
        TaskDataset {
            task_id: self.task_id,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            cardinalities: self.cardinalities.clone(),
            label_kind: self.label_kind,
        }
    }

    /// Replaces the labels, switching the label kind.
    pub fn with_labels(&self, labels: &[f64], kind: LabelKind) -> Result<TaskDataset> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: labels.len() });
        }
        let records = self
            .records
            .iter()
            .zip(labels)
            .map(|(r, &l)| ArchRecord { features: r.features.clone(), label: Some(l) })
            .collect();
        TaskDataset::new(self.task_id, records, Some(self.cardinalities.clone()), kind)
    }
}

fn check_label(row: usize, label: f64, kind: LabelKind) -> Result<()> {
    if !label.is_finite() {
        return Err(Error::Schema(format!("record {row}: label {label} is not finite")));
    }
    if kind == LabelKind::Rank && (label < 1.0 || label.fract() != 0.0) {
        return Err(Error::Schema(format!("record {row}: rank label {label} is not a positive integer")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task_id: Option<u32>,
    cardinalities: Vec<u32>,
    label_kind: LabelKind,
    records: Vec<JsonRecord>,
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    features: Vec<i64>,
    label: Option<f64>,
}

/// Reads a dataset file under `schema`.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<TaskDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let format = schema.format.unwrap_or_else(|| FileFormat::from_path(path));
    match format {
        FileFormat::Csv => parse_csv(&text, schema),
        FileFormat::Json => parse_json(&text, schema),
    }
}

pub fn parse_csv(text: &str, schema: &Schema) -> Result<TaskDataset> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let ncols = header.len();
    if ncols < 2 || &header[ncols - 1] != "label" {
        return Err(Error::Parse("header must be f0,...,f{d-1},label".to_string()));
    }
    for (j, name) in header.iter().take(ncols - 1).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::Parse(format!("header column {j} is '{name}', expected 'f{j}'")));
        }
    }
    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
        if rec.len() != ncols {
            return Err(Error::Parse(format!("row {}: {} cells, expected {ncols}", row + 1, rec.len())));
        }
        let features = rec
            .iter()
            .take(ncols - 1)
            .map(|cell| parse_feature(cell, row + 1))
            .collect::<Result<Vec<_>>>()?;
        let label_cell = &rec[ncols - 1];
        let label = if label_cell.is_empty() {
            None
        } else {
            Some(
                label_cell
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: bad label '{label_cell}'", row + 1)))?,
            )
        };
        records.push(ArchRecord { features, label });
    }
    TaskDataset::new(
        schema.task_id.unwrap_or(0),
        records,
        schema.cardinalities.clone(),
        schema.label_kind.unwrap_or_default(),
    )
}

fn parse_feature(cell: &str, row: usize) -> Result<u32> {
    let v: i64 = cell.parse().map_err(|_| Error::Parse(format!("row {row}: bad feature value '{cell}'")))?;
    to_feature(v, row)
}

fn to_feature(v: i64, row: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Schema(format!("row {row}: feature value {v} out of range")))
}

pub fn parse_json(text: &str, schema: &Schema) -> Result<TaskDataset> {
    let raw: JsonDataset = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let records = raw
        .records
        .into_iter()
        .enumerate()
        .map(|(row, r)| {
            Ok(ArchRecord {
                features: r.features.into_iter().map(|v| to_feature(v, row + 1)).collect::<Result<_>>()?,
                label: r.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cardinalities = schema.cardinalities.clone().unwrap_or(raw.cardinalities);
    TaskDataset::new(
        schema.task_id.or(raw.task_id).unwrap_or(0),
        records,
        Some(cardinalities),
        raw.label_kind,
    )
}

pub fn to_csv(ds: &TaskDataset) -> String {
    let mut out = String::new();
    for j in 0..ds.dim() {
        out.push_str(&format!("f{j},"));
    }
    out.push_str("label\n");
    for r in &ds.records {
        for v in &r.features {
            out.push_str(&format!("{v},"));
        }
        if let Some(l) = r.label {
            out.push_str(&format!("{l}"));
        }
        out.push('\n');
    }
    out
}

pub fn to_json(ds: &TaskDataset) -> String {
    let raw = JsonDataset {
        task_id: Some(ds.task_id),
        cardinalities: ds.cardinalities.clone(),
        label_kind: ds.label_kind,
        records: ds
            .records
            .iter()
            .map(|r| JsonRecord { features: r.features.iter().map(|&v| v as i64).collect(), label: r.label })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&raw).expect("dataset serializes");
    s.push('\n');
    s
}

pub fn save_dataset(ds: &TaskDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let body = match FileFormat::from_path(path) {
        FileFormat::Csv => to_csv(ds),
        FileFormat::Json => to_json(ds),
    };
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// A disjoint train/validation partition of dataset indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub seed: u64,
}

/// Seeded shuffle split with `round(fraction * n)` training records.
pub fn split(ds: &TaskDataset, fraction: f64, seed: u64) -> Result<SplitPlan> {
    split_indices(ds.len(), fraction, seed)
}

pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<SplitPlan> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {n} records")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} outside (0, 1)")));
    }
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} of {n} records leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let validation_indices = idx.split_off(n_train);
    Ok(SplitPlan { train_indices: idx, validation_indices, seed })
}
