//! Random forest of Gini-split classification trees over bootstrap samples.

use std::ops::{Add, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, TreeBuilder, TreeNode, TreeParams};
use super::{check_training_data, sample_weights};
use crate::error::Result;
use crate::rng;
use crate::types::{Label, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Defaults to `floor(sqrt(d))` when `None`.
    pub features_per_split: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
    pub balanced: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 16,
            features_per_split: None,
            min_leaf: 2,
            seed: 0,
            balanced: false,
        }
    }
}

impl ForestConfig {
    pub fn features_for(&self, d: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub feature_dim: usize,
    pub config: ForestConfig,
}

impl ForestModel {
    /// Mean of the per-tree leaf probabilities.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.evaluate(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct GiniStats {
    count: u64,
    weight: f64,
    positive: f64,
}

impl Add for GiniStats {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            count: self.count + o.count,
            weight: self.weight + o.weight,
            positive: self.positive + o.positive,
        }
    }
}

impl Sub for GiniStats {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            count: self.count - o.count,
            weight: self.weight - o.weight,
            positive: self.positive - o.positive,
        }
    }
}

impl GiniStats {
    /// Weighted Gini impurity, `w · (1 − p₀² − p₁²)`.
    fn impurity(self) -> f64 {
        if self.weight <= 0.0 {
            return 0.0;
        }
        2.0 * self.positive * (self.weight - self.positive) / self.weight
    }
}

struct Gini<'a> {
    /// Bootstrap multiplicity per training row.
    multiplicity: &'a [u32],
    weights: &'a [f64],
    labels: &'a [Label],
    min_leaf: u64,
}

impl Criterion for Gini<'_> {
    type Stats = GiniStats;

    fn stats(&self, i: usize) -> GiniStats {
        let count = u64::from(self.multiplicity[i]);
        let weight = count as f64 * self.weights[i];
        GiniStats {
            count,
            weight,
            positive: if self.labels[i].is_positive() { weight } else { 0.0 },
        }
    }

    fn gain(&self, left: GiniStats, right: GiniStats, parent: GiniStats) -> Option<f64> {
        if left.count < self.min_leaf || right.count < self.min_leaf {
            return None;
        }
        Some(parent.impurity() - left.impurity() - right.impurity())
    }

    fn is_terminal(&self, node: GiniStats) -> bool {
        node.count < 2 * self.min_leaf || node.positive <= 0.0 || node.positive >= node.weight
    }

    fn leaf_value(&self, node: GiniStats) -> f64 {
        if node.weight > 0.0 {
            (node.positive / node.weight).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Trees are independent given their seeds (`seed + tree_index`), so they are
/// built in parallel with results identical to a sequential build.
pub fn train_random_forest(x: &Matrix, y: &[Label], config: &ForestConfig) -> Result<ForestModel> {
    check_training_data(x, y)?;
    if config.n_trees == 0 {
        return Err(crate::Error::InvalidInput("n_trees must be at least 1".into()));
    }
    let n = x.rows();
    let weights = sample_weights(y, config.balanced);
    let params = TreeParams {
        max_depth: config.max_depth,
        features_per_split: Some(config.features_for(x.cols())),
    };
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::seeded(config.seed.wrapping_add(t as u64));
            let mut multiplicity = vec![0u32; n];
            for _ in 0..n {
                multiplicity[rng::index(&mut rng, n)] += 1;
            }
            let samples: Vec<usize> = (0..n).filter(|&i| multiplicity[i] > 0).collect();
            let criterion = Gini {
                multiplicity: &multiplicity,
                weights: &weights,
                labels: y,
                min_leaf: config.min_leaf.max(1) as u64,
            };
            TreeBuilder::new(x, &criterion, &params, rng).build(samples)
        })
        .collect();
    Ok(ForestModel {
        trees,
        feature_dim: x.cols(),
        config: config.clone(),
    })
}
