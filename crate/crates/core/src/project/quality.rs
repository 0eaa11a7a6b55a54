//! Measures of how well a projection keeps the input's structure.

use rayon::prelude::*;

use crate::rng;
use crate::types::Matrix;

/// Indices of the `k` nearest other rows of every row, nearest first, with
/// ties broken by lower index.
pub fn nearest_neighbors(x: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = x.rows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let a = x.row(i);
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (a.iter().zip(x.row(j)).map(|(p, q)| (p - q) * (p - q)).sum(), j))
                .collect();
            d.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Mean fraction of each point's `k` nearest neighbors in `high` that are
/// also among its `k` nearest neighbors in `low`.
pub fn knn_preservation(high: &Matrix, low: &Matrix, k: usize) -> f64 {
    assert_eq!(high.rows(), low.rows(), "row counts differ");
    let n = high.rows();
    let k = k.min(n.saturating_sub(1));
    if k == 0 {
        return 1.0;
    }
    let a = nearest_neighbors(high, k);
    let b = nearest_neighbors(low, k);
    let kept: usize = a
        .iter()
        .zip(&b)
        .map(|(p, q)| p.iter().filter(|j| q.contains(j)).count())
        .sum();
    kept as f64 / (n * k) as f64
}

/// Lloyd's k-means with k-means++ seeding; returns a cluster id per row.
pub fn kmeans(x: &Matrix, k: usize, seed: u64) -> Vec<usize> {
    let n = x.rows();
    assert!(k >= 1 && k <= n, "k must be in 1..=n");
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let mut r = rng::seeded(seed);
    let mut centers: Vec<Vec<f64>> = vec![x.row(rng::index(&mut r, n)).to_vec()];
    while centers.len() < k {
        let d2: Vec<f64> = x
            .iter_rows()
            .map(|row| centers.iter().map(|c| dist(row, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let mut target = rng::unit_f64(&mut r) * total;
        let mut pick = n - 1;
        for (i, w) in d2.iter().enumerate() {
            if target < *w {
                pick = i;
                break;
            }
            target -= w;
        }
        centers.push(x.row(pick).to_vec());
    }
    let mut assign = vec![0usize; n];
    for _ in 0..300 {
        let mut changed = false;
        for (i, row) in x.iter_rows().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| dist(row, &centers[a]).total_cmp(&dist(row, &centers[b])))
                .expect("k >= 1");
            if best != assign[i] {
                assign[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = x.iter_rows().zip(&assign).filter(|(_, &a)| a == c).map(|(r, _)| r).collect();
            if members.is_empty() {
                continue;
            }
            for (j, v) in center.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    assign
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Fraction of rows whose found cluster maps to their true cluster under the
/// best one-to-one relabelling. Intended for small `k`.
pub fn cluster_agreement(truth: &[usize], found: &[usize], k: usize) -> f64 {
    assert_eq!(truth.len(), found.len());
    let mut counts = vec![vec![0usize; k]; k];
    for (&t, &f) in truth.iter().zip(found) {
        counts[f][t] += 1;
    }
    let best = permutations(k)
        .into_iter()
        .map(|perm| (0..k).map(|f| counts[f][perm[f]]).sum::<usize>())
        .max()
        .unwrap_or(0);
    best as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_projection_preserves_all() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.1], [3.0, 0.2], [7.0, 0.4], [15.0, 0.9]]).unwrap();
        assert_eq!(knn_preservation(&x, &x, 2), 1.0);
    }

    #[test]
    fn reversed_line_still_preserved_but_shuffle_is_not() {
        let high = Matrix::from_rows(&(0..20).map(|i| [i as f64 * i as f64]).collect::<Vec<_>>()).unwrap();
        let low = Matrix::from_rows(&(0..20).map(|i| [-(i as f64) * i as f64]).collect::<Vec<_>>()).unwrap();
        assert_eq!(knn_preservation(&high, &low, 3), 1.0);
        let scrambled = Matrix::from_rows(&(0..20).map(|i| [((i * 7) % 20) as f64]).collect::<Vec<_>>()).unwrap();
        let s = knn_preservation(&high, &scrambled, 3);
        assert!((0.0..1.0).contains(&s));
    }

    #[test]
    fn agreement_ignores_label_names() {
        assert_eq!(cluster_agreement(&[0, 0, 1, 1, 2], &[2, 2, 0, 0, 1], 3), 1.0);
        assert_eq!(cluster_agreement(&[0, 0, 1, 1], &[0, 1, 1, 1], 2), 0.75);
    }

    #[test]
    fn kmeans_finds_separated_groups() {
        let rows: Vec<[f64; 2]> = (0..30)
            .map(|i| {
                let c = (i / 10) as f64 * 10.0;
                [c + (i % 10) as f64 * 0.1, -c]
            })
            .collect();
        let truth: Vec<usize> = (0..30).map(|i| i / 10).collect();
        let found = kmeans(&Matrix::from_rows(&rows).unwrap(), 3, 4);
        assert_eq!(cluster_agreement(&truth, &found, 3), 1.0);
    }
}
