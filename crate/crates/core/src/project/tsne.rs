//! Exact t-SNE.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::types::{Matrix, ProjectionMethod, ProjectionResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 15.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

pub const MIN_PERPLEXITY: f64 = 5.0;
pub const MAX_PERPLEXITY: f64 = 50.0;
pub const MIN_POINTS: usize = 10;
const ENTROPY_TOL: f64 = 1e-5;
const P_FLOOR: f64 = 1e-12;
const MIN_GAIN: f64 = 0.01;

pub fn validate_perplexity(perplexity: f64, n: usize) -> Result<()> {
    if n < MIN_POINTS {
        return Err(Error::Tsne(format!("t-SNE needs at least {MIN_POINTS} points, got {n}")));
    }
    if !(MIN_PERPLEXITY..=MAX_PERPLEXITY).contains(&perplexity) {
        return Err(Error::Tsne(format!(
            "perplexity {perplexity} outside [{MIN_PERPLEXITY}, {MAX_PERPLEXITY}]"
        )));
    }
    if perplexity >= (n - 1) as f64 / 3.0 {
        return Err(Error::Tsne(format!(
            "perplexity {perplexity} must be below (n - 1) / 3 = {:.3} for n = {n}",
            (n - 1) as f64 / 3.0
        )));
    }
    Ok(())
}

fn squared_distances(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let a = x.row(i);
        for (j, out) in row.iter_mut().enumerate() {
            *out = a.iter().zip(x.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
        }
    });
    d
}

/// Row `i` of the conditional affinities for precision `beta`, written into
/// `out`; returns the Shannon entropy in nats.
fn conditional_row(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .fold(f64::INFINITY, |m, (_, &v)| m.min(v));
    let mut sum = 0.0;
    for (j, (o, &dj)) in out.iter_mut().zip(dist).enumerate() {
        *o = if j == i { 0.0 } else { (-(dj - min) * beta).exp() };
        sum += *o;
    }
    let mut h = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o /= sum;
        if j != i && *o > 0.0 {
            h -= *o * o.ln();
        }
    }
    h
}

/// Conditional affinities `p_{j|i}` (row-stochastic, zero diagonal) whose
/// row entropies match `ln(perplexity)`, and the realized perplexity of each
/// row.
pub fn conditional_affinities(x: &Matrix, perplexity: f64) -> Result<(Matrix, Vec<f64>)> {
    validate_perplexity(perplexity, x.rows())?;
    x.check_finite()?;
    Ok(conditional_from_distances(&squared_distances(x), x.rows(), perplexity))
}

fn conditional_from_distances(dist: &[f64], n: usize, perplexity: f64) -> (Matrix, Vec<f64>) {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let realized: Vec<f64> = p
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let d = &dist[i * n..(i + 1) * n];
            let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
            let mut beta = 1.0;
            let mut h = conditional_row(d, i, beta, row);
            for _ in 0..200 {
                if (h - target).abs() < ENTROPY_TOL {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
                h = conditional_row(d, i, beta, row);
            }
            h.exp()
        })
        .collect();
    (Matrix::new(n, n, p).expect("n × n"), realized)
}

/// Symmetrized joint affinities `(p_{j|i} + p_{i|j}) / 2n`, floored.
pub fn joint_affinities(cond: &Matrix) -> Vec<f64> {
    let n = cond.rows();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond.get(i, j) + cond.get(j, i)) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }
    p
}

#[derive(Debug, Clone)]
pub struct TsneOutput {
    /// `n × 2` layout.
    pub points: Matrix,
    pub kl_divergence: f64,
    /// Realized perplexity of each point's conditional distribution.
    pub realized_perplexity: Vec<f64>,
}

/// Student-t kernel numerators for every pair plus their sum.
fn kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let row_sums: Vec<f64> = num
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let mut s = 0.0;
            for (j, out) in row.iter_mut().enumerate() {
                if j != i {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    *out = 1.0 / (1.0 + dx * dx + dy * dy);
                    s += *out;
                }
            }
            s
        })
        .collect();
    (num, row_sums.iter().sum())
}

pub fn tsne(x: &Matrix, config: &TsneConfig) -> Result<TsneOutput> {
    let n = x.rows();
    let (cond, realized_perplexity) = conditional_affinities(x, config.perplexity)?;
    let p = joint_affinities(&cond);

    let mut r = rng::seeded(config.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [1e-4 * rng::normal(&mut r), 1e-4 * rng::normal(&mut r)])
        .collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];

    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iterations {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < config.exaggeration_iterations {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        // Gradient without the constant factor 4, as in the reference
        // implementation the default learning rate of 200 was tuned for.
        let (num, z) = kernel(&y);
        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let q = num[i * n + j];
                    let w = (exaggeration * p[i * n + j] - q / z) * q;
                    g[0] += w * (y[i][0] - y[j][0]);
                    g[1] += w * (y[i][1] - y[j][1]);
                }
                g
            })
            .collect();
        for i in 0..n {
            for c in 0..2 {
                let same_sign = (grad[i][c] > 0.0) == (update[i][c] > 0.0);
                gains[i][c] = if same_sign { gains[i][c] * 0.8 } else { gains[i][c] + 0.2 };
                gains[i][c] = gains[i][c].max(MIN_GAIN);
                update[i][c] = momentum * update[i][c] - config.learning_rate * gains[i][c] * grad[i][c];
                y[i][c] += update[i][c];
            }
        }
        let mean = y.iter().fold([0.0; 2], |m, v| [m[0] + v[0], m[1] + v[1]]);
        for v in &mut y {
            v[0] -= mean[0] / n as f64;
            v[1] -= mean[1] / n as f64;
        }
    }

    let (num, z) = kernel(&y);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[i * n + j];
                kl += pij * (pij / (num[i * n + j] / z).max(f64::MIN_POSITIVE)).ln();
            }
        }
    }
    let points = Matrix::new(n, 2, y.into_iter().flatten().collect()).expect("n × 2");
    Ok(TsneOutput {
        points,
        kl_divergence: kl,
        realized_perplexity,
    })
}

pub fn tsne_project(x: &Matrix, config: &TsneConfig) -> Result<ProjectionResult> {
    let out = tsne(x, config)?;
    let params = BTreeMap::from([
        ("title".to_string(), format!("t-SNE (perplexity {})", config.perplexity)),
        ("perplexity".to_string(), config.perplexity.to_string()),
        ("iterations".to_string(), config.iterations.to_string()),
        ("learning_rate".to_string(), config.learning_rate.to_string()),
        ("seed".to_string(), config.seed.to_string()),
        ("kl_divergence".to_string(), out.kl_divergence.to_string()),
    ]);
    Ok(ProjectionResult {
        points: out.points,
        method: ProjectionMethod::Tsne,
        explained_variance_ratio: None,
        params,
    })
}
