//! L2-regularized logistic regression by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{check_training_data, margin_loss, sample_weights, sigmoid};
use crate::error::Result;
use crate::types::{Label, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    /// Step size; `None` uses `1/L` for the loss's Lipschitz bound `L`.
    pub learning_rate: Option<f64>,
    pub l2: f64,
    pub max_epochs: usize,
    /// Stop once the gradient's max-norm falls below this.
    pub tolerance: f64,
    pub balanced: bool,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            learning_rate: None,
            l2: 1e-4,
            max_epochs: 500,
            tolerance: 1e-6,
            balanced: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: LogRegConfig,
}

impl LogRegModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.bias + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

struct Objective<'a> {
    x: &'a Matrix,
    y: &'a [Label],
    weights: Vec<f64>,
    total_weight: f64,
    l2: f64,
}

impl Objective<'_> {
    fn loss(&self, w: &[f64], b: f64) -> f64 {
        let data: f64 = self
            .x
            .iter_rows()
            .zip(self.y)
            .zip(&self.weights)
            .map(|((row, &label), s)| {
                let m = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
                s * margin_loss(m, label)
            })
            .sum();
        data / self.total_weight + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for ((row, &label), s) in self.x.iter_rows().zip(self.y).zip(&self.weights) {
            let m = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            let r = s * (sigmoid(m) - f64::from(label.as_u8()));
            gb += r;
            for (g, a) in gw.iter_mut().zip(row) {
                *g += r * a;
            }
        }
        for (g, wj) in gw.iter_mut().zip(w) {
            *g = *g / self.total_weight + self.l2 * wj;
        }
        (gw, gb / self.total_weight)
    }

    /// Upper bound on the gradient's Lipschitz constant.
    fn lipschitz_bound(&self) -> f64 {
        let sq: f64 = self
            .x
            .iter_rows()
            .zip(&self.weights)
            .map(|(row, s)| s * (1.0 + row.iter().map(|v| v * v).sum::<f64>()))
            .sum();
        0.25 * sq / self.total_weight + self.l2
    }
}

pub fn train_logreg(x: &Matrix, y: &[Label], config: &LogRegConfig) -> Result<LogRegModel> {
    train_logreg_traced(x, y, config).map(|(m, _)| m)
}

/// As [`train_logreg`], also returning the training loss before the first
/// epoch and after each accepted step.
///
/// A step that would raise the loss is retried at half the step size, so the
/// returned trace is non-increasing.
pub fn train_logreg_traced(x: &Matrix, y: &[Label], config: &LogRegConfig) -> Result<(LogRegModel, Vec<f64>)> {
    check_training_data(x, y)?;
    let weights = sample_weights(y, config.balanced);
    let objective = Objective {
        x,
        y,
        total_weight: weights.iter().sum(),
        weights,
        l2: config.l2,
    };
    let mut step = config
        .learning_rate
        .unwrap_or_else(|| 1.0 / objective.lipschitz_bound());

    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    let mut loss = objective.loss(&w, b);
    let mut trace = vec![loss];
    for _ in 0..config.max_epochs {
        let (gw, gb) = objective.gradient(&w, b);
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < config.tolerance {
            break;
        }
        let mut accepted = false;
        while step > 1e-12 {
            let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(wj, g)| wj - step * g).collect();
            let cand_b = b - step * gb;
            let cand_loss = objective.loss(&cand_w, cand_b);
            if cand_loss <= loss {
                w = cand_w;
                b = cand_b;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }
        trace.push(loss);
    }
    Ok((
        LogRegModel {
            weights: w,
            bias: b,
            config: config.clone(),
        },
        trace,
    ))
}
