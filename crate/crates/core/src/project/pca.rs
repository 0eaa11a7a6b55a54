//! Principal component analysis by symmetric eigendecomposition.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::types::{Matrix, ProjectionMethod, ProjectionResult};

#[derive(Debug, Clone)]
pub struct Pca {
    /// Column means removed before projection.
    pub mean: Vec<f64>,
    /// `k` unit-length principal directions, each with its largest-magnitude
    /// entry positive.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component divided by the total variance.
    pub explained_variance_ratio: Vec<f64>,
    /// `n × k` scores of the centered rows.
    pub points: Matrix,
}

fn centered(x: &Matrix) -> (DMatrix<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let xc = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - mean[j]);
    (xc, mean)
}

/// Eigenpairs sorted by descending eigenvalue, negatives clamped to zero.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| (l.max(0.0), eig.eigenvectors.column(i).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

fn fix_sign(v: &mut [f64]) -> bool {
    let lead = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

/// Top-`k` principal components of `x`.
///
/// Uses the `d × d` covariance when `d <= n` and the `n × n` Gram matrix
/// otherwise; both give the same nonzero spectrum.
pub fn pca(x: &Matrix, k: usize) -> Result<Pca> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 || k == 0 || d < k {
        return Err(Error::InvalidInput(format!("PCA needs n >= 2 and d >= k >= 1 (n={n}, d={d}, k={k})")));
    }
    x.check_finite()?;
    let (xc, mean) = centered(x);
    let total: f64 = xc.iter().map(|v| v * v).sum();
    let scale = x.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if total <= (n * d) as f64 * (scale * f64::EPSILON).powi(2) {
        return Err(Error::ZeroVariance);
    }

    let mut components = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    let mut points = Matrix::zeros(n, k);
    if d <= n {
        let cov = xc.transpose() * &xc;
        for (c, (lambda, mut v)) in sorted_eigen(cov).into_iter().take(k).enumerate() {
            fix_sign(&mut v);
            for i in 0..n {
                points.row_mut(i)[c] = (0..d).map(|j| xc[(i, j)] * v[j]).sum();
            }
            ratios.push(lambda / total);
            components.push(v);
        }
    } else {
        let gram = &xc * xc.transpose();
        for (c, (lambda, u)) in sorted_eigen(gram).into_iter().take(k).enumerate() {
            // v = Xcᵀu / sqrt(λ); scores Xc·v = u·sqrt(λ)
            let s = lambda.sqrt();
            let mut v: Vec<f64> = if s > 0.0 {
                (0..d).map(|j| (0..n).map(|i| xc[(i, j)] * u[i]).sum::<f64>() / s).collect()
            } else {
                vec![0.0; d]
            };
            let flip = if fix_sign(&mut v) { -1.0 } else { 1.0 };
            for i in 0..n {
                points.row_mut(i)[c] = flip * u[i] * s;
            }
            ratios.push(lambda / total);
            components.push(v);
        }
    }
    Ok(Pca {
        mean,
        components,
        explained_variance_ratio: ratios,
        points,
    })
}

pub fn pca_project(x: &Matrix) -> Result<ProjectionResult> {
    let p = pca(x, 2)?;
    let ratios = [p.explained_variance_ratio[0], p.explained_variance_ratio[1]];
    let params = BTreeMap::from([
        ("title".to_string(), format!("PCA (PC1 {:.2}%, PC2 {:.2}%)", 100.0 * ratios[0], 100.0 * ratios[1])),
        ("pc1_ratio".to_string(), ratios[0].to_string()),
        ("pc2_ratio".to_string(), ratios[1].to_string()),
    ]);
    Ok(ProjectionResult {
        points: p.points,
        method: ProjectionMethod::Pca,
        explained_variance_ratio: Some(ratios),
        params,
    })
}
