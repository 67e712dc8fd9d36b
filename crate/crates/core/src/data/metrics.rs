use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{argmax, Tensor};

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    if probs.rank() != 2 || probs.rows() != labels.len() {
        return Err(Error::Dimension {
            op: "accuracy",
            lhs: probs.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| argmax(probs.row(i)) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette over all points with Euclidean distances.
///
/// `a(i)` is the mean distance from `i` to the rest of its own cluster and
/// `b(i)` the smallest mean distance to another cluster;
/// `s(i) = (b - a) / max(a, b)`, and points alone in their cluster score 0.
pub fn silhouette_coefficient(features: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    if features.rows() != n {
        return Err(Error::Dimension {
            op: "silhouette",
            lhs: features.shape().to_vec(),
            rhs: vec![n],
        });
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_default() += 1;
    }
    if sizes.len() < 2 {
        return Err(Error::Input("silhouette needs at least two clusters".into()));
    }
    let clusters: Vec<usize> = sizes.keys().copied().collect();
    let slot = |l: usize| clusters.binary_search(&l).expect("known cluster");
    let mut total = 0.0;
    let mut sums = vec![0.0; clusters.len()];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[slot(labels[j])] += euclidean(features.row(i), features.row(j));
            }
        }
        let own = slot(labels[i]);
        let own_size = sizes[&labels[i]];
        if own_size == 1 {
            continue;
        }
        let a = sums[own] / (own_size - 1) as f64;
        let b = clusters
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != own)
            .map(|(k, c)| sums[k] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}
