//! Subject-identity probe: a small classifier trained on frozen embeddings.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, macro_f1};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::numcore::{ParamStore, Tape, Tensor};
use crate::optim::{Adam, AdamConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub hidden: usize,
    /// Full-batch Adam steps.
    pub epochs: usize,
    pub lr: f64,
    /// Share of each subject's samples used for fitting.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { hidden: 32, epochs: 200, lr: 1e-2, train_fraction: 0.7, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Macro-F1 over the probed subjects, in percent.
    pub macro_f1: f64,
    pub subjects: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub warnings: Vec<String>,
}

/// Trains a one-hidden-layer classifier to recover `subjects` from the rows
/// of `features` (`[N, D]`, row-major) and scores it on held-out samples of
/// the same subjects. Features are standardized with training statistics.
pub fn subject_probe(features: &[f64], dim: usize, subjects: &[usize], cfg: &ProbeConfig) -> Result<ProbeReport> {
    let n = subjects.len();
    if dim == 0 || features.len() != n * dim {
        return Err(Error::dim(format!("{} values do not form {n} rows of width {dim}", features.len())));
    }
    if cfg.hidden == 0 || cfg.epochs == 0 || !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::config(format!("invalid probe settings {cfg:?}")));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in subjects.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let mut warnings = Vec::new();
    groups.retain(|s, idx| {
        let keep = idx.len() >= 2;
        if !keep {
            warnings.push(format!("subject {s} has one sample and is left out"));
        }
        keep
    });
    if groups.len() < 2 {
        return Err(Error::Validation("subject probe needs two subjects with at least two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, (_, idx)) in groups.iter_mut().enumerate() {
        idx.shuffle(&mut rng);
        let cut = ((cfg.train_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        train.extend(idx[..cut].iter().map(|&i| (i, class)));
        test.extend(idx[cut..].iter().map(|&i| (i, class)));
    }
    let k = groups.len();

    let mut mean = vec![0.0; dim];
    let mut std = vec![0.0; dim];
    for &(i, _) in &train {
        for d in 0..dim {
            mean[d] += features[i * dim + d] / train.len() as f64;
        }
    }
    for &(i, _) in &train {
        for d in 0..dim {
            std[d] += (features[i * dim + d] - mean[d]).powi(2) / train.len() as f64;
        }
    }
    let std: Vec<f64> = std.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
    let matrix = |rows: &[(usize, usize)]| {
        Tensor::from_fn(&[rows.len(), dim], |f| {
            let (r, d) = (f / dim, f % dim);
            (features[rows[r].0 * dim + d] - mean[d]) / std[d]
        })
    };
    let (xtr, xte) = (matrix(&train), matrix(&test));
    let ytr: Vec<usize> = train.iter().map(|r| r.1).collect();
    let yte: Vec<usize> = test.iter().map(|r| r.1).collect();

    let mut store = ParamStore::new(cfg.seed);
    let mlp = Mlp::new(&mut store, "probe", dim, cfg.hidden, k)?;
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, ..Default::default() }, &store);
    for _ in 0..cfg.epochs {
        let mut tape = Tape::new();
        let x = tape.constant(xtr.clone());
        let logits = mlp.forward(&mut tape, &store, x)?;
        let loss = tape.cross_entropy(logits, &ytr)?;
        let g = tape.backward(loss)?;
        store.accumulate(&tape, &g);
        opt.step(&mut store)?;
    }
    let mut tape = Tape::inference();
    let x = tape.constant(xte);
    let logits = mlp.forward(&mut tape, &store, x)?;
    let pred: Vec<usize> = tape.value(logits).data().chunks(k).map(argmax).collect();
    Ok(ProbeReport { macro_f1: macro_f1(&yte, &pred, k), subjects: k, train_samples: train.len(), test_samples: test.len(), warnings })
}
