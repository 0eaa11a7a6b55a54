//! Binary classification metrics and comparison reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::TrainedModel;
use crate::types::{DatasetSplit, EmbeddedDataset, EvalReport, Label};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<Confusion> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut c = Confusion::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        match (t.is_positive(), p.is_positive()) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Confusion counts over raw 0/1 values, rejecting anything else.
pub fn confusion_u8(y_true: &[u8], y_pred: &[u8]) -> Result<Confusion> {
    let parse = |v: &[u8]| -> Result<Vec<Label>> {
        v.iter()
            .map(|&b| Label::from_u8(b).ok_or_else(|| Error::InvalidInput(format!("non-binary label {b}"))))
            .collect()
    };
    confusion(&parse(y_true)?, &parse(y_pred)?)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Degenerate denominators yield 0 rather than NaN.
pub fn precision_recall_f1(c: Confusion) -> (f64, f64, f64) {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    (precision, recall, f1_score(precision, recall))
}

#[derive(Debug, Clone)]
pub struct ScoredSet {
    y_true: Vec<Label>,
    scores: Vec<f64>,
}

impl ScoredSet {
    pub fn new(y_true: Vec<Label>, scores: Vec<f64>) -> Result<Self> {
        if y_true.len() != scores.len() {
            return Err(Error::LengthMismatch {
                left: y_true.len(),
                right: scores.len(),
            });
        }
        if y_true.is_empty() {
            return Err(Error::InvalidInput("scored set is empty".into()));
        }
        if let Some(i) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidInput(format!("score {} at row {i} is outside [0, 1]", scores[i])));
        }
        Ok(Self { y_true, scores })
    }

    pub fn y_true(&self) -> &[Label] {
        &self.y_true
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn predictions(&self, threshold: f64) -> Vec<Label> {
        self.scores
            .iter()
            .map(|&s| if s >= threshold { Label::Malicious } else { Label::Benign })
            .collect()
    }
}

/// Mann-Whitney AUC from average ranks; tied scores share credit equally.
pub fn roc_auc(set: &ScoredSet) -> Result<f64> {
    let n = set.len();
    let n_pos = set.y_true.iter().filter(|l| l.is_positive()).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && set.scores[order[j]] == set.scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j averaged
        let rank = (i + 1 + j) as f64 / 2.0;
        let pos = order[i..j].iter().filter(|&&k| set.y_true[k].is_positive()).count();
        pos_rank_sum += rank * pos as f64;
        i = j;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Score a set with given metadata tags into a full report.
pub fn report_from_scores(model_tag: &str, provider_tag: &str, set: &ScoredSet, threshold: f64) -> Result<EvalReport> {
    let c = confusion(set.y_true(), &set.predictions(threshold))?;
    let (precision, recall, f1) = precision_recall_f1(c);
    Ok(EvalReport {
        model_tag: model_tag.to_string(),
        provider_tag: provider_tag.to_string(),
        threshold,
        tp: c.tp,
        fp: c.fp,
        tn: c.tn,
        fn_: c.fn_,
        auc: roc_auc(set)?,
        precision,
        recall,
        f1,
    })
}

/// Evaluate `model` on the test rows of `split`.
pub fn evaluate(model: &TrainedModel, dataset: &EmbeddedDataset, split: &DatasetSplit, threshold: f64) -> Result<EvalReport> {
    if model.provider_tag != dataset.provider_tag() {
        return Err(Error::InvalidInput(format!(
            "model was trained on {} features but the dataset holds {}",
            model.provider_tag,
            dataset.provider_tag()
        )));
    }
    if let Some(&bad) = split.test_indices.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::InvalidInput(format!("split index {bad} out of range for {} rows", dataset.len())));
    }
    let test = dataset.subset(&split.test_indices);
    let scores = model.predict_proba(test.matrix())?;
    let set = ScoredSet::new(test.labels(), scores)?;
    report_from_scores(model.family().as_str(), dataset.provider_tag(), &set, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidInput(format!("unknown report format {other:?}"))),
        }
    }
}

const COLUMNS: [&str; 4] = ["auc", "precision", "recall", "f1"];

fn metric(r: &EvalReport, col: usize) -> f64 {
    [r.auc, r.precision, r.recall, r.f1][col]
}

fn sorted(reports: &[EvalReport]) -> Vec<&EvalReport> {
    let mut rows: Vec<&EvalReport> = reports.iter().collect();
    rows.sort_by(|a, b| (&a.provider_tag, &a.model_tag).cmp(&(&b.provider_tag, &b.model_tag)));
    rows
}

fn best_per_column(rows: &[&EvalReport]) -> [f64; 4] {
    let mut best = [f64::NEG_INFINITY; 4];
    for r in rows {
        for (c, b) in best.iter_mut().enumerate() {
            *b = b.max(metric(r, c));
        }
    }
    best
}

#[derive(Serialize)]
struct JsonRow<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    best: Vec<&'static str>,
}

/// One row per report ordered by (provider, model); the best value in each
/// metric column is flagged (bold in markdown, listed in a `best` column
/// otherwise).
pub fn render_comparison(reports: &[EvalReport], format: ReportFormat) -> Result<String> {
    let rows = sorted(reports);
    let best = best_per_column(&rows);
    let flags = |r: &EvalReport| -> Vec<&'static str> {
        (0..4).filter(|&c| metric(r, c) == best[c]).map(|c| COLUMNS[c]).collect()
    };
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            out.push_str("| Provider | Model | AUC | Precision | Recall | F1 |\n");
            out.push_str("|---|---|---|---|---|---|\n");
            for r in &rows {
                let _ = write!(out, "| {} | {} |", r.provider_tag, r.model_tag);
                for c in 0..4 {
                    let v = metric(r, c);
                    if v == best[c] {
                        let _ = write!(out, " **{v:.3}** |");
                    } else {
                        let _ = write!(out, " {v:.3} |");
                    }
                }
                out.push('\n');
            }
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["provider_tag", "model_tag", "auc", "precision", "recall", "f1", "best"])?;
            for r in &rows {
                w.write_record([
                    r.provider_tag.clone(),
                    r.model_tag.clone(),
                    r.auc.to_string(),
                    r.precision.to_string(),
                    r.recall.to_string(),
                    r.f1.to_string(),
                    flags(r).join(";"),
                ])?;
            }
            out = String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
                .expect("csv output is utf-8");
        }
        ReportFormat::Json => {
            let json: Vec<JsonRow> = rows.iter().map(|r| JsonRow { report: r, best: flags(r) }).collect();
            out = serde_json::to_string_pretty(&json)?;
            out.push('\n');
        }
    }
    Ok(out)
}

fn model_display_name(tag: &str) -> &str {
    match tag {
        "logreg" => "Logistic Regression",
        "gbt" => "XGBoost",
        "forest" => "Random Forest",
        other => other,
    }
}

fn model_order(tag: &str) -> (u8, &str) {
    match tag {
        "logreg" => (0, tag),
        "gbt" => (1, tag),
        "forest" => (2, tag),
        _ => (3, tag),
    }
}

/// Markdown grid of one metric: providers as rows, models as columns.
/// Missing cells render as `-`.
pub fn render_metric_grid(reports: &[EvalReport], metric_name: &str) -> Result<String> {
    let col = COLUMNS
        .iter()
        .position(|c| *c == metric_name)
        .ok_or_else(|| Error::InvalidInput(format!("unknown metric {metric_name:?}")))?;
    let mut models: Vec<&str> = reports.iter().map(|r| r.model_tag.as_str()).collect();
    models.sort_by_key(|m| model_order(m));
    models.dedup();
    let mut providers: Vec<&str> = Vec::new();
    for r in reports {
        if !providers.contains(&r.provider_tag.as_str()) {
            providers.push(&r.provider_tag);
        }
    }
    let cells: BTreeMap<(&str, &str), f64> = reports
        .iter()
        .map(|r| ((r.provider_tag.as_str(), r.model_tag.as_str()), metric(r, col)))
        .collect();

    let mut out = String::from("| Embedding |");
    for m in &models {
        let _ = write!(out, " {} |", model_display_name(m));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(models.len()));
    out.push('\n');
    for p in &providers {
        let _ = write!(out, "| {p} |");
        for m in &models {
            match cells.get(&(*p, *m)) {
                Some(v) => {
                    let _ = write!(out, " {v:.3} |");
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_reports_json(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(reports)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_reports_json(path: impl AsRef<Path>) -> Result<Vec<EvalReport>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Deserialize)]
struct ScoredRow {
    id: String,
    score: f64,
    label_true: u8,
}

/// Read a third-party detector's `id,score,label_true` output.
///
/// Binary 0/1 scores are accepted; their AUC is that of a single threshold.
pub fn read_scored_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, ScoredSet)> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Cache {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for (i, row) in reader.deserialize::<ScoredRow>().enumerate() {
        let row = row?;
        let label = Label::from_u8(row.label_true)
            .ok_or_else(|| Error::InvalidInput(format!("row {}: label_true must be 0 or 1", i + 2)))?;
        ids.push(row.id);
        labels.push(label);
        scores.push(row.score);
    }
    Ok((ids, ScoredSet::new(labels, scores)?))
}
