//! Binary classifiers over embedding features.

mod forest;
mod gbt;
mod logreg;
mod persist;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use forest::{train_random_forest, ForestConfig, ForestModel};
pub use gbt::{train_gbt, train_gbt_traced, GbtConfig, GbtModel};
pub use logreg::{train_logreg, train_logreg_traced, LogRegConfig, LogRegModel};
pub use persist::{load_model, model_from_json, model_to_json, save_model, FORMAT_VERSION};
pub use tree::{FlatNode, TreeNode};

use crate::error::{Error, Result};
use crate::types::{Label, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logreg,
    Forest,
    Gbt,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Logreg, Family::Forest, Family::Gbt];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Logreg => "logreg",
            Family::Forest => "forest",
            Family::Gbt => "gbt",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(Family::Logreg),
            "forest" => Ok(Family::Forest),
            "gbt" => Ok(Family::Gbt),
            other => Err(Error::InvalidInput(format!("unknown classifier family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    LogReg(LogRegModel),
    Forest(ForestModel),
    Gbt(GbtModel),
}

impl Classifier {
    pub fn family(&self) -> Family {
        match self {
            Classifier::LogReg(_) => Family::Logreg,
            Classifier::Forest(_) => Family::Forest,
            Classifier::Gbt(_) => Family::Gbt,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Classifier::LogReg(m) => m.feature_dim(),
            Classifier::Forest(m) => m.feature_dim,
            Classifier::Gbt(m) => m.feature_dim,
        }
    }

    /// Score one row. The caller guarantees `row.len() == feature_dim()`.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        match self {
            Classifier::LogReg(m) => m.score_row(row),
            Classifier::Forest(m) => m.score_row(row),
            Classifier::Gbt(m) => m.score_row(row),
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim(),
                actual: x.cols(),
            });
        }
        Ok(x.iter_rows().map(|r| self.score_row(r)).collect())
    }

    /// Label 1 iff the score is at least `threshold`.
    pub fn predict(&self, x: &Matrix, threshold: f64) -> Result<Vec<Label>> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| if p >= threshold { Label::Malicious } else { Label::Benign })
            .collect())
    }
}

/// A classifier plus the provider tag of the features it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub classifier: Classifier,
    pub provider_tag: String,
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.classifier.family()
    }

    pub fn feature_dim(&self) -> usize {
        self.classifier.feature_dim()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.classifier.predict_proba(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ClassifierConfig {
    Logreg(LogRegConfig),
    Forest(ForestConfig),
    Gbt(GbtConfig),
}

impl ClassifierConfig {
    /// Defaults for `family`, with tree learners seeded by `seed`.
    pub fn default_for(family: Family, seed: u64) -> Self {
        match family {
            Family::Logreg => ClassifierConfig::Logreg(LogRegConfig::default()),
            Family::Forest => ClassifierConfig::Forest(ForestConfig {
                seed,
                ..ForestConfig::default()
            }),
            Family::Gbt => ClassifierConfig::Gbt(GbtConfig {
                seed,
                ..GbtConfig::default()
            }),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ClassifierConfig::Logreg(_) => Family::Logreg,
            ClassifierConfig::Forest(_) => Family::Forest,
            ClassifierConfig::Gbt(_) => Family::Gbt,
        }
    }
}

pub fn train(x: &Matrix, y: &[Label], config: &ClassifierConfig) -> Result<Classifier> {
    Ok(match config {
        ClassifierConfig::Logreg(c) => Classifier::LogReg(train_logreg(x, y, c)?),
        ClassifierConfig::Forest(c) => Classifier::Forest(train_random_forest(x, y, c)?),
        ClassifierConfig::Gbt(c) => Classifier::Gbt(train_gbt(x, y, c)?),
    })
}

pub(crate) fn check_training_data(x: &Matrix, y: &[Label]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if x.rows() < 2 {
        return Err(Error::InvalidInput("training needs at least 2 rows".into()));
    }
    if x.cols() == 0 {
        return Err(Error::InvalidInput("training needs at least 1 feature".into()));
    }
    let positives = y.iter().filter(|l| l.is_positive()).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::SingleClass);
    }
    x.check_finite()
}

/// Per-row weights; with `balanced` each class carries half the total weight.
pub(crate) fn sample_weights(y: &[Label], balanced: bool) -> Vec<f64> {
    if !balanced {
        return vec![1.0; y.len()];
    }
    let n = y.len() as f64;
    let pos = y.iter().filter(|l| l.is_positive()).count() as f64;
    let (wp, wn) = (n / (2.0 * pos), n / (2.0 * (n - pos)));
    y.iter().map(|l| if l.is_positive() { wp } else { wn }).collect()
}

pub(crate) fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss of margin `m`: `log(1 + e^m) − y·m`.
pub(crate) fn margin_loss(m: f64, label: Label) -> f64 {
    let softplus = if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    };
    softplus - if label.is_positive() { m } else { 0.0 }
}
