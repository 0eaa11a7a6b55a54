//! Newton gradient boosting of regression trees on logistic loss.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use super::tree::{Criterion, TreeBuilder, TreeNode, TreeParams};
use super::{check_training_data, margin_loss, sample_weights, sigmoid};
use crate::error::{Error, Result};
use crate::rng;
use crate::types::{Label, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub l2_leaf: f64,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
    /// Fraction of features examined per node.
    pub colsample: f64,
    pub seed: u64,
    pub balanced: bool,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.3,
            max_depth: 6,
            l2_leaf: 1.0,
            min_child_weight: 1.0,
            colsample: 1.0,
            seed: 0,
            balanced: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    /// Log-odds of the training prevalence.
    pub base_score: f64,
    /// Raw leaf weights; the learning rate is applied at scoring time.
    pub trees: Vec<TreeNode>,
    pub feature_dim: usize,
    pub config: GbtConfig,
}

impl GbtModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.evaluate(row)).sum();
        self.base_score + self.config.learning_rate * sum
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct GradStats {
    g: f64,
    h: f64,
}

impl Add for GradStats {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            g: self.g + o.g,
            h: self.h + o.h,
        }
    }
}

impl Sub for GradStats {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            g: self.g - o.g,
            h: self.h - o.h,
        }
    }
}

struct Newton<'a> {
    grad: &'a [f64],
    hess: &'a [f64],
    lambda: f64,
    min_child_weight: f64,
}

impl Newton<'_> {
    fn score(&self, s: GradStats) -> f64 {
        s.g * s.g / (s.h + self.lambda)
    }
}

impl Criterion for Newton<'_> {
    type Stats = GradStats;

    fn stats(&self, i: usize) -> GradStats {
        GradStats {
            g: self.grad[i],
            h: self.hess[i],
        }
    }

    fn gain(&self, left: GradStats, right: GradStats, parent: GradStats) -> Option<f64> {
        if left.h < self.min_child_weight || right.h < self.min_child_weight {
            return None;
        }
        Some(0.5 * (self.score(left) + self.score(right) - self.score(parent)))
    }

    fn is_terminal(&self, node: GradStats) -> bool {
        node.h < 2.0 * self.min_child_weight
    }

    fn leaf_value(&self, node: GradStats) -> f64 {
        -node.g / (node.h + self.lambda)
    }
}

pub fn train_gbt(x: &Matrix, y: &[Label], config: &GbtConfig) -> Result<GbtModel> {
    train_gbt_traced(x, y, config).map(|(m, _)| m)
}

/// As [`train_gbt`], also returning the mean training loss at the base score
/// and after every round.
pub fn train_gbt_traced(x: &Matrix, y: &[Label], config: &GbtConfig) -> Result<(GbtModel, Vec<f64>)> {
    check_training_data(x, y)?;
    if !(config.learning_rate > 0.0) || !(config.l2_leaf >= 0.0) || !(config.colsample > 0.0 && config.colsample <= 1.0) {
        return Err(Error::InvalidInput(
            "gbt needs learning_rate > 0, l2_leaf >= 0 and colsample in (0, 1]".into(),
        ));
    }
    let n = x.rows();
    let d = x.cols();
    let weights = sample_weights(y, config.balanced);
    let total_weight: f64 = weights.iter().sum();
    let positive: f64 = y.iter().zip(&weights).filter(|(l, _)| l.is_positive()).map(|(_, w)| w).sum();
    let base_score = (positive / (total_weight - positive)).ln();

    let params = TreeParams {
        max_depth: config.max_depth,
        features_per_split: Some(((config.colsample * d as f64).round() as usize).clamp(1, d)),
    };
    let loss = |margins: &[f64]| -> f64 {
        margins
            .iter()
            .zip(y)
            .zip(&weights)
            .map(|((&m, &l), w)| w * margin_loss(m, l))
            .sum::<f64>()
            / total_weight
    };

    let mut margins = vec![base_score; n];
    let mut trace = vec![loss(&margins)];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_rounds);
    for round in 0..config.n_rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = weights[i] * (p - f64::from(y[i].as_u8()));
            hess[i] = weights[i] * p * (1.0 - p);
        }
        let criterion = Newton {
            grad: &grad,
            hess: &hess,
            lambda: config.l2_leaf,
            min_child_weight: config.min_child_weight,
        };
        let rng = rng::seeded(config.seed.wrapping_add(round as u64));
        let tree = TreeBuilder::new(x, &criterion, &params, rng).build((0..n).collect());
        for (m, row) in margins.iter_mut().zip(x.iter_rows()) {
            *m += config.learning_rate * tree.evaluate(row);
        }
        trees.push(tree);
        trace.push(loss(&margins));
    }
    Ok((
        GbtModel {
            base_score,
            trees,
            feature_dim: d,
            config: config.clone(),
        },
        trace,
    ))
}
