//! Binary decision trees shared by the forest and boosting learners.
//!
//! Splits are exact: every boundary between consecutive distinct feature
//! values of the node's samples is a candidate, thresholded at the midpoint.
//! Rows with `value <= threshold` go left. Among equal gains the lowest
//! feature index wins, then the lowest threshold.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};
use crate::types::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn evaluate(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |v| out.push(v));
        out
    }

    fn visit_leaves(&self, f: &mut impl FnMut(f64)) {
        match self {
            TreeNode::Leaf { value } => f(*value),
            TreeNode::Split { left, right, .. } => {
                left.visit_leaves(f);
                right.visit_leaves(f);
            }
        }
    }

    /// Pre-order flattening with explicit leaf markers.
    pub fn to_preorder(&self) -> Vec<FlatNode> {
        let mut out = Vec::new();
        self.push_preorder(&mut out);
        out
    }

    fn push_preorder(&self, out: &mut Vec<FlatNode>) {
        match self {
            TreeNode::Leaf { value } => out.push(FlatNode::Leaf { value: *value }),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push(FlatNode::Split {
                    feature: *feature,
                    threshold: *threshold,
                });
                left.push_preorder(out);
                right.push_preorder(out);
            }
        }
    }

    /// Rebuild from [`to_preorder`](Self::to_preorder) output, checking
    /// feature indices against `feature_dim`.
    pub fn from_preorder(nodes: &[FlatNode], feature_dim: usize) -> Result<Self> {
        let mut pos = 0;
        let tree = Self::pop_preorder(nodes, &mut pos, feature_dim, 0)?;
        if pos != nodes.len() {
            return Err(Error::Envelope(format!("{} trailing tree nodes", nodes.len() - pos)));
        }
        Ok(tree)
    }

    fn pop_preorder(nodes: &[FlatNode], pos: &mut usize, feature_dim: usize, depth: usize) -> Result<Self> {
        if depth > 512 {
            return Err(Error::Envelope("tree nesting too deep".into()));
        }
        let node = nodes
            .get(*pos)
            .ok_or_else(|| Error::Envelope("truncated tree".into()))?;
        *pos += 1;
        match *node {
            FlatNode::Leaf { value } if value.is_finite() => Ok(TreeNode::Leaf { value }),
            FlatNode::Leaf { .. } => Err(Error::Envelope("non-finite leaf value".into())),
            FlatNode::Split { feature, threshold } => {
                if feature >= feature_dim || !threshold.is_finite() {
                    return Err(Error::Envelope(format!(
                        "invalid split on feature {feature} at {threshold}"
                    )));
                }
                let left = Self::pop_preorder(nodes, pos, feature_dim, depth + 1)?;
                let right = Self::pop_preorder(nodes, pos, feature_dim, depth + 1)?;
                Ok(TreeNode::Split {
                    feature,
                    threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FlatNode {
    Split { feature: usize, threshold: f64 },
    Leaf { value: f64 },
}

/// Additive per-sample statistics a split criterion works from.
pub(crate) trait Criterion {
    type Stats: Copy + Default + Add<Output = Self::Stats> + Sub<Output = Self::Stats>;

    fn stats(&self, sample: usize) -> Self::Stats;

    /// Gain of splitting `parent` into `left`/`right`, or `None` if the split
    /// violates a size constraint.
    fn gain(&self, left: Self::Stats, right: Self::Stats, parent: Self::Stats) -> Option<f64>;

    fn is_terminal(&self, node: Self::Stats) -> bool;

    fn leaf_value(&self, node: Self::Stats) -> f64;
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    /// Features examined per node; all features when `None`.
    pub features_per_split: Option<usize>,
}

const MIN_GAIN: f64 = 1e-12;

pub(crate) struct TreeBuilder<'a, C: Criterion> {
    x: &'a Matrix,
    criterion: &'a C,
    params: &'a TreeParams,
    rng: SeededRng,
    pairs: Vec<(f64, usize)>,
}

impl<'a, C: Criterion> TreeBuilder<'a, C> {
    pub fn new(x: &'a Matrix, criterion: &'a C, params: &'a TreeParams, rng: SeededRng) -> Self {
        Self {
            x,
            criterion,
            params,
            rng,
            pairs: Vec::new(),
        }
    }

    pub fn build(mut self, samples: Vec<usize>) -> TreeNode {
        self.grow(samples, 0)
    }

    fn node_stats(&self, samples: &[usize]) -> C::Stats {
        samples
            .iter()
            .fold(C::Stats::default(), |acc, &i| acc + self.criterion.stats(i))
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> TreeNode {
        let stats = self.node_stats(&samples);
        let leaf = || TreeNode::Leaf {
            value: self.criterion.leaf_value(stats),
        };
        if depth >= self.params.max_depth || self.criterion.is_terminal(stats) {
            return leaf();
        }
        let d = self.x.cols();
        let mut features = match self.params.features_per_split {
            Some(k) if k < d => rng::sample_indices(&mut self.rng, d, k),
            _ => (0..d).collect(),
        };
        features.sort_unstable();

        let Some((feature, threshold)) = self.best_split(&samples, &features, stats) else {
            return leaf();
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.into_iter().partition(|&i| self.x.get(i, feature) <= threshold);
        let left = self.grow(left, depth + 1);
        let right = self.grow(right, depth + 1);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&mut self, samples: &[usize], features: &[usize], parent: C::Stats) -> Option<(usize, f64)> {
        let mut best: Option<(f64, usize, f64)> = None;
        for &feature in features {
            self.pairs.clear();
            self.pairs.extend(samples.iter().map(|&i| (self.x.get(i, feature), i)));
            self.pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = C::Stats::default();
            for k in 0..self.pairs.len() - 1 {
                let (value, sample) = self.pairs[k];
                left = left + self.criterion.stats(sample);
                let next = self.pairs[k + 1].0;
                if next <= value {
                    continue;
                }
                let Some(gain) = self.criterion.gain(left, parent - left, parent) else {
                    continue;
                };
                if gain > MIN_GAIN && best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, feature, midpoint(value, next)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Midpoint that still separates `lo` from `hi` under `<=`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi || !mid.is_finite() {
        lo
    } else {
        mid
    }
}
