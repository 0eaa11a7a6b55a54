//! Corpus loading, deduplication and stratified splitting.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::warn;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::rng;
use crate::types::{DatasetSplit, Label, PromptRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub format: CorpusFormat,
    pub source_tag: String,
}

/// Ordered list of corpus files to concatenate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    /// Reads a JSON manifest; relative paths resolve against the manifest's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: CorpusManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for entry in &mut manifest.entries {
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
        }
        manifest.validate(path)?;
        Ok(manifest)
    }

    fn validate(&self, origin: &Path) -> Result<()> {
        for (i, entry) in self.entries.iter().enumerate() {
            let reason = if entry.path.as_os_str().is_empty() {
                "empty path"
            } else if entry.source_tag.trim().is_empty() {
                "empty source_tag"
            } else {
                continue;
            };
            return Err(Error::Manifest {
                path: origin.to_path_buf(),
                reason: format!("entry {i}: {reason}"),
            });
        }
        Ok(())
    }
}

/// A row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub path: PathBuf,
    /// 1-based physical line number in the file.
    pub line: u64,
    pub reason: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.path.display(), self.line, self.reason)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub records: Vec<PromptRecord>,
    pub row_errors: Vec<RowError>,
}

/// Load every manifest entry in order. Records are stamped with the entry's
/// `source_tag`; a `source` column in the file is ignored.
///
/// Missing or unreadable files abort the load. Individual malformed rows
/// (bad field count, missing text, unknown label) are collected in
/// `row_errors` and skipped.
pub fn load_corpus(manifest: &CorpusManifest) -> Result<LoadedCorpus> {
    let mut out = LoadedCorpus::default();
    for entry in &manifest.entries {
        match entry.format {
            CorpusFormat::Csv => load_csv(entry, &mut out)?,
            CorpusFormat::Jsonl => load_jsonl(entry, &mut out)?,
        }
    }
    Ok(out)
}

fn parse_label(raw: &str) -> std::result::Result<Label, String> {
    let trimmed = raw.trim();
    trimmed
        .parse::<u8>()
        .ok()
        .and_then(Label::from_u8)
        .ok_or_else(|| format!("unknown label value {trimmed:?}"))
}

fn default_id(tag: &str, row_number: usize) -> String {
    format!("{tag}:{row_number}")
}

fn load_csv(entry: &ManifestEntry, out: &mut LoadedCorpus) -> Result<()> {
    let file = File::open(&entry.path).map_err(|e| Error::io(&entry.path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(text_col), Some(label_col)) = (column("text"), column("label")) else {
        return Err(Error::Manifest {
            path: entry.path.clone(),
            reason: "CSV header must contain `text` and `label` columns".into(),
        });
    };
    let id_col = column("id");

    for (row_idx, row) in reader.records().enumerate() {
        let row_number = row_idx + 1;
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.row_errors.push(RowError {
                    path: entry.path.clone(),
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let row_error = |reason: String| RowError {
            path: entry.path.clone(),
            line,
            reason,
        };
        if row.len() != headers.len() {
            out.row_errors
                .push(row_error(format!("expected {} fields, found {}", headers.len(), row.len())));
            continue;
        }
        let label = match parse_label(&row[label_col]) {
            Ok(label) => label,
            Err(reason) => {
                out.row_errors.push(row_error(reason));
                continue;
            }
        };
        let id = id_col
            .map(|c| row[c].trim())
            .filter(|s| !s.is_empty())
            .map_or_else(|| default_id(&entry.source_tag, row_number), str::to_owned);
        out.records
            .push(PromptRecord::new(id, entry.source_tag.clone(), &row[text_col], label));
    }
    Ok(())
}

#[derive(Deserialize)]
struct JsonRow {
    id: Option<serde_json::Value>,
    text: String,
    label: serde_json::Value,
}

fn load_jsonl(entry: &ManifestEntry, out: &mut LoadedCorpus) -> Result<()> {
    let file = File::open(&entry.path).map_err(|e| Error::io(&entry.path, e))?;
    let mut row_number = 0usize;
    for (line_idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&entry.path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        row_number += 1;
        let row_error = |reason: String| RowError {
            path: entry.path.clone(),
            line: line_idx as u64 + 1,
            reason,
        };
        let row: JsonRow = match serde_json::from_str(&line) {
            Ok(row) => row,
            Err(e) => {
                out.row_errors.push(row_error(e.to_string()));
                continue;
            }
        };
        let label = match row.label.as_u64() {
            Some(v) if v <= 1 => Label::from_u8(v as u8).expect("0 or 1"),
            _ => {
                out.row_errors.push(row_error(format!("unknown label value {}", row.label)));
                continue;
            }
        };
        let id = match row.id {
            Some(serde_json::Value::String(s)) if !s.trim().is_empty() => s,
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => default_id(&entry.source_tag, row_number),
        };
        out.records
            .push(PromptRecord::new(id, entry.source_tag.clone(), row.text, label));
    }
    Ok(())
}

/// Dedup key: NFC-normalized, whitespace-trimmed, case-sensitive text.
pub fn dedup_key(text: &str) -> String {
    text.trim().nfc().collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DedupSummary {
    pub removed: usize,
    pub label_conflicts: usize,
}

/// Drop exact-duplicate texts, keeping the first occurrence and its label.
pub fn deduplicate(records: Vec<PromptRecord>) -> (Vec<PromptRecord>, DedupSummary) {
    let mut first_label: HashMap<String, Label> = HashMap::with_capacity(records.len());
    let mut summary = DedupSummary::default();
    let mut kept = Vec::with_capacity(records.len());
    for record in records {
        match first_label.entry(dedup_key(&record.text)) {
            Entry::Vacant(slot) => {
                slot.insert(record.label);
                kept.push(record);
            }
            Entry::Occupied(slot) => {
                summary.removed += 1;
                if *slot.get() != record.label {
                    summary.label_conflicts += 1;
                    warn!(id = %record.id, kept = %slot.get(), dropped = %record.label, "duplicate text with conflicting label");
                }
            }
        }
    }
    (kept, summary)
}

fn class_indices(labels: &[Label]) -> [Vec<usize>; 2] {
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, label) in labels.iter().enumerate() {
        by_class[label.as_u8() as usize].push(i);
    }
    by_class
}

/// Per-class seeded shuffle, then cut `round(test_fraction · n_c)` per class
/// into the test set. Class 0 is shuffled first, then class 1, from one
/// generator stream. Both index sets are returned sorted.
pub fn stratified_split(labels: &[Label], test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test_fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for (class, mut members) in class_indices(labels).into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall(class as u8));
        }
        rng::shuffle(&mut rng, &mut members);
        let cut = (test_fraction * members.len() as f64).round() as usize;
        test.extend_from_slice(&members[..cut]);
        train.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit {
        train_indices: train,
        test_indices: test,
        seed,
        test_fraction,
    })
}

/// Stratified subsample of at most `max_rows` indices, preserving class
/// proportions (rounded per class). Returns all indices when already small
/// enough. The result is sorted.
pub fn stratified_subsample(labels: &[Label], max_rows: usize, seed: u64) -> Vec<usize> {
    if labels.len() <= max_rows {
        return (0..labels.len()).collect();
    }
    let fraction = max_rows as f64 / labels.len() as f64;
    let mut rng = rng::seeded(seed);
    let mut picked = Vec::with_capacity(max_rows);
    for mut members in class_indices(labels) {
        rng::shuffle(&mut rng, &mut members);
        let take = ((fraction * members.len() as f64).round() as usize).min(members.len());
        picked.extend_from_slice(&members[..take]);
    }
    picked.truncate(max_rows);
    picked.sort_unstable();
    picked
}
