//! Classification metrics, spectral discriminability, cluster separation and
//! the subject-identity probe.

pub mod cluster;
pub mod fbd;
pub mod probe;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cluster::silhouette;
pub use fbd::{fbd, fbd_corollary_check, CorollaryReport, FbdConfig, FbdReport};
pub use probe::{subject_probe, ProbeConfig, ProbeReport};

/// All values in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auroc: f64,
    pub auprc: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-class `(precision, recall, f1)` as fractions; a class with no
/// predictions has precision 0, a class with no members has recall 0.
pub fn per_class_prf(y_true: &[usize], y_pred: &[usize], k: usize) -> Vec<(f64, f64, f64)> {
    let mut tp = vec![0usize; k];
    let mut pred = vec![0usize; k];
    let mut actual = vec![0usize; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        actual[t] += 1;
        pred[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    (0..k)
        .map(|c| {
            let p = if pred[c] > 0 { tp[c] as f64 / pred[c] as f64 } else { 0.0 };
            let r = if actual[c] > 0 { tp[c] as f64 / actual[c] as f64 } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            (p, r, f)
        })
        .collect()
}

/// Unweighted mean F1 over `k` classes, in percent.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize], k: usize) -> f64 {
    let prf = per_class_prf(y_true, y_pred, k);
    100.0 * prf.iter().map(|x| x.2).sum::<f64>() / k as f64
}

/// Area under the ROC curve as a fraction, via the Mann-Whitney rank
/// statistic with average ranks for ties. `None` without both classes.
pub fn auroc_binary(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += (i..=j).filter(|&q| positive[order[q]]).count() as f64 * avg;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Average precision (step-wise area under precision-recall) as a fraction.
/// Tied scores enter as one threshold. `None` without positives.
pub fn auprc_binary(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut prev_recall, mut area) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        tp += (i..=j).filter(|&q| positive[order[q]]).count();
        seen += j - i + 1;
        let recall = tp as f64 / n_pos as f64;
        area += (recall - prev_recall) * tp as f64 / seen as f64;
        prev_recall = recall;
        i = j + 1;
    }
    Some(area)
}

/// Metrics from class scores `[N][K]` (probabilities or any score where larger
/// means more likely). Macro averages run over all `K` classes for
/// precision/recall/F1, and over classes with both positives and negatives
/// for AUROC (positives only for AUPRC); when no class qualifies the value is
/// reported as 50 (AUROC) or 0 (AUPRC).
pub fn classification_metrics(y_true: &[usize], scores: &[Vec<f64>]) -> Result<MetricsReport> {
    if y_true.len() != scores.len() {
        return Err(Error::dim(format!("{} labels but {} score rows", y_true.len(), scores.len())));
    }
    if y_true.is_empty() {
        return Err(Error::Validation("metrics of an empty set".into()));
    }
    let k = scores[0].len();
    if k == 0 || scores.iter().any(|r| r.len() != k) {
        return Err(Error::dim("score rows must share a positive width"));
    }
    if let Some(y) = y_true.iter().find(|&&y| y >= k) {
        return Err(Error::dim(format!("label {y} out of range for {k} score columns")));
    }
    if scores.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let y_pred: Vec<usize> = scores.iter().map(|r| argmax(r)).collect();
    let prf = per_class_prf(y_true, &y_pred, k);
    let correct = y_true.iter().zip(&y_pred).filter(|(a, b)| a == b).count();
    let mean = |f: &dyn Fn(&(f64, f64, f64)) -> f64| 100.0 * prf.iter().map(f).sum::<f64>() / k as f64;

    let (mut roc, mut pr) = (Vec::new(), Vec::new());
    for c in 0..k {
        let pos: Vec<bool> = y_true.iter().map(|&y| y == c).collect();
        let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        if let Some(a) = auroc_binary(&pos, &col) {
            roc.push(a);
        }
        if let Some(a) = auprc_binary(&pos, &col) {
            pr.push(a);
        }
    }
    let avg = |v: &[f64], empty: f64| if v.is_empty() { empty } else { 100.0 * v.iter().sum::<f64>() / v.len() as f64 };
    Ok(MetricsReport {
        accuracy: 100.0 * correct as f64 / y_true.len() as f64,
        precision: mean(&|x| x.0),
        recall: mean(&|x| x.1),
        f1: mean(&|x| x.2),
        auroc: avg(&roc, 50.0),
        auprc: avg(&pr, 0.0),
    })
}

/// Row-wise softmax of logits.
pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<Vec<f64>> {
    logits
        .chunks(k)
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_col(p: &[f64]) -> Vec<Vec<f64>> {
        p.iter().map(|&s| vec![1.0 - s, s]).collect()
    }

    #[test]
    fn perfect_binary() {
        let m = classification_metrics(&[0, 1, 0, 1], &two_col(&[0.1, 0.9, 0.2, 0.7])).unwrap();
        assert_eq!((m.accuracy, m.f1, m.auroc, m.auprc), (100.0, 100.0, 100.0, 100.0));
    }

    #[test]
    fn anti_perfect_binary() {
        let m = classification_metrics(&[0, 1], &two_col(&[0.9, 0.1])).unwrap();
        assert_eq!((m.accuracy, m.auroc), (0.0, 0.0));
    }

    #[test]
    fn three_of_four_concordant() {
        let pos = [false, false, true, true];
        assert_eq!(auroc_binary(&pos, &[0.1, 0.4, 0.35, 0.8]).unwrap(), 0.75);
        let m = classification_metrics(&[0, 0, 1, 1], &two_col(&[0.1, 0.4, 0.35, 0.8])).unwrap();
        assert!((m.auroc - 75.0).abs() < 1e-12);
    }

    #[test]
    fn ties_count_half() {
        assert_eq!(auroc_binary(&[false, true], &[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn average_precision_by_hand() {
        // ranking: pos, neg, pos -> precision 1 at recall .5, 2/3 at recall 1
        let ap = auprc_binary(&[true, false, true], &[0.9, 0.8, 0.7]).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn absent_class_contributes_zero() {
        let scores = vec![vec![0.9, 0.05, 0.05], vec![0.1, 0.8, 0.1]];
        let m = classification_metrics(&[0, 1], &scores).unwrap();
        assert!((m.f1 - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(m.accuracy, 100.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(classification_metrics(&[0, 1], &two_col(&[0.1])), Err(Error::Dimension(_))));
    }

    #[test]
    fn mean_std_population() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
