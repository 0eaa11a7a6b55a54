//! Domain types shared across the pipeline.
//!
//! Everything here is immutable once constructed; constructors enforce the
//! alignment and finiteness invariants so downstream stages can rely on them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth class of a prompt. Encoded as `0` (benign) / `1` (malicious).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Label {
    Benign = 0,
    Malicious = 1,
}

impl Label {
    pub fn from_u8(value: u8) -> Option<Self> {
        match value {
            0 => Some(Label::Benign),
            1 => Some(Label::Malicious),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn is_positive(self) -> bool {
        self == Label::Malicious
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(deserializer)?;
        Label::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// One labeled prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub source: String,
    pub text: String,
    pub label: Label,
}

impl PromptRecord {
    pub fn new(id: impl Into<String>, source: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            text: text.into(),
            label,
        }
    }

    pub fn meta(&self) -> RecordMeta {
        RecordMeta {
            id: self.id.clone(),
            source: self.source.clone(),
            label: self.label,
        }
    }
}

/// Record metadata carried alongside an embedding row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub id: String,
    pub source: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    EmptyId,
    EmptyText,
    DuplicateId,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::EmptyId => "empty-id",
            RejectReason::EmptyText => "empty-text",
            RejectReason::DuplicateId => "duplicate-id",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    /// Position in the input sequence.
    pub index: usize,
    pub id: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationSummary {
    pub accepted: Vec<PromptRecord>,
    pub rejects: Vec<Reject>,
}

impl ValidationSummary {
    pub fn count(&self, reason: RejectReason) -> usize {
        self.rejects.iter().filter(|r| r.reason == reason).count()
    }

    pub fn empty_text_rejects(&self) -> usize {
        self.count(RejectReason::EmptyText)
    }

    pub fn duplicate_id_rejects(&self) -> usize {
        self.count(RejectReason::DuplicateId)
    }
}

/// Check record-level invariants, keeping accepted records in input order.
///
/// An id is claimed by its first accepted occurrence; records rejected for
/// empty text do not claim their id.
pub fn validate_corpus(records: impl IntoIterator<Item = PromptRecord>) -> ValidationSummary {
    let mut seen = HashSet::new();
    let mut summary = ValidationSummary::default();
    for (index, record) in records.into_iter().enumerate() {
        let reason = if record.id.is_empty() {
            Some(RejectReason::EmptyId)
        } else if record.text.trim().is_empty() {
            Some(RejectReason::EmptyText)
        } else if seen.contains(&record.id) {
            Some(RejectReason::DuplicateId)
        } else {
            None
        };
        match reason {
            Some(reason) => summary.rejects.push(Reject {
                index,
                id: record.id,
                reason,
            }),
            None => {
                seen.insert(record.id.clone());
                summary.accepted.push(record);
            }
        }
    }
    summary
}

/// A fixed-length embedding with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding must have at least one component".into()));
        }
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: rows * cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from row vectors; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// First non-finite entry, if any.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.cols.max(1), p % self.cols.max(1)))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.find_non_finite() {
            Some((row, col)) => Err(Error::NonFinite { row, col }),
            None => Ok(()),
        }
    }
}

/// The tabular embedding dataset: one metadata record per matrix row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDataset {
    records: Vec<RecordMeta>,
    matrix: Matrix,
    provider_tag: String,
}

impl EmbeddedDataset {
    pub fn new(records: Vec<RecordMeta>, matrix: Matrix, provider_tag: impl Into<String>) -> Result<Self> {
        if records.len() != matrix.rows() {
            return Err(Error::LengthMismatch {
                left: records.len(),
                right: matrix.rows(),
            });
        }
        matrix.check_finite()?;
        Ok(Self {
            records,
            matrix,
            provider_tag: provider_tag.into(),
        })
    }

    /// Construct and additionally require the declared provider dimension.
    pub fn with_dim(records: Vec<RecordMeta>, matrix: Matrix, provider_tag: impl Into<String>, dim: usize) -> Result<Self> {
        if !records.is_empty() && matrix.cols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: matrix.cols(),
            });
        }
        Self::new(records, matrix, provider_tag)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn records(&self) -> &[RecordMeta] {
        &self.records
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            matrix: self.matrix.select_rows(indices),
            provider_tag: self.provider_tag.clone(),
        }
    }

    pub fn into_parts(self) -> (Vec<RecordMeta>, Matrix, String) {
        (self.records, self.matrix, self.provider_tag)
    }
}

/// Disjoint train/test index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub test_fraction: f64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train_indices.len() + self.test_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Evaluation of one (provider, classifier) pair on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_tag: String,
    pub provider_tag: String,
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn sample_count(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

impl ProjectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ProjectionMethod::Pca => "pca",
            ProjectionMethod::Tsne => "tsne",
        }
    }
}

impl fmt::Display for ProjectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Two-dimensional projection of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    /// `n × 2`.
    pub points: Matrix,
    pub method: ProjectionMethod,
    /// PCA only.
    pub explained_variance_ratio: Option<[f64; 2]>,
    pub params: BTreeMap<String, String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, text: &str) -> PromptRecord {
        PromptRecord::new(id, "t", text, Label::Benign)
    }

    #[test]
    fn validate_empty() {
        let s = validate_corpus(Vec::new());
        assert!(s.accepted.is_empty());
        assert!(s.rejects.is_empty());
    }

    #[test]
    fn validate_duplicate_id_keeps_first() {
        let s = validate_corpus(vec![rec("a", "one"), rec("a", "two")]);
        assert_eq!(s.accepted, vec![rec("a", "one")]);
        assert_eq!(s.duplicate_id_rejects(), 1);
        assert_eq!(s.rejects[0].index, 1);
    }

    #[test]
    fn validate_whitespace_text() {
        let records: Vec<_> = (0..10)
            .map(|i| rec(&format!("r{i}"), if i == 3 || i == 7 { " \t\n " } else { "prompt" }))
            .collect();
        let s = validate_corpus(records);
        assert_eq!(s.accepted.len(), 8);
        assert_eq!(s.empty_text_rejects(), 2);
        let ids: Vec<_> = s.accepted.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["r0", "r1", "r2", "r4", "r5", "r6", "r8", "r9"]);
    }

    #[test]
    fn label_serde_rejects_other_values() {
        assert_eq!(serde_json::from_str::<Label>("1").unwrap(), Label::Malicious);
        assert!(serde_json::from_str::<Label>("2").is_err());
    }

    #[test]
    fn dataset_alignment_enforced() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let meta = vec![
            RecordMeta { id: "a".into(), source: "s".into(), label: Label::Benign },
            RecordMeta { id: "b".into(), source: "s".into(), label: Label::Benign },
        ];
        assert!(EmbeddedDataset::new(meta.clone(), m.clone(), "x").is_err());
        assert!(EmbeddedDataset::new(meta[..1].to_vec(), m.clone(), "x").is_ok());
        assert!(EmbeddedDataset::with_dim(meta[..1].to_vec(), m, "x", 3).is_err());
    }

    #[test]
    fn dataset_rejects_non_finite() {
        let m = Matrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        let meta = vec![RecordMeta { id: "a".into(), source: "s".into(), label: Label::Benign }];
        assert!(matches!(
            EmbeddedDataset::new(meta, m, "x"),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
