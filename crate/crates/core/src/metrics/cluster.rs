//! Mean silhouette of labelled points under Euclidean distance.

use crate::error::{Error, Result};

/// `points` is row-major `[N, D]`. Points alone in their cluster score 0.
pub fn silhouette(points: &[f64], dim: usize, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    if dim == 0 || points.len() != n * dim {
        return Err(Error::dim(format!("{} values do not form {n} points of width {dim}", points.len())));
    }
    let mut ids = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::Validation("silhouette needs at least two labels".into()));
    }
    let slot = |y: usize| ids.binary_search(&y).expect("known label");
    let mut size = vec![0usize; ids.len()];
    for &y in labels {
        size[slot(y)] += 1;
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut total = 0.0;
    let mut sums = vec![0.0; ids.len()];
    for i in 0..n {
        sums.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            if i != j {
                let d: f64 = row(i).iter().zip(row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                sums[slot(labels[j])] += d;
            }
        }
        let own = slot(labels[i]);
        if size[own] < 2 {
            continue;
        }
        let a = sums[own] / (size[own] - 1) as f64;
        let b = (0..ids.len()).filter(|&c| c != own).map(|c| sums[c] / size[c] as f64).fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}
