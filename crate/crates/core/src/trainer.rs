//! Supervised training with Adam and early stopping on validation macro-F1.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesBatch;
use crate::encoder::{EncoderConfig, Model};
use crate::error::{Error, Result};
use crate::metrics::{argmax, classification_metrics, softmax_rows, MetricsReport};
use crate::numcore::{Tape, Tensor};
use crate::optim::{Adam, AdamConfig};
use crate::pce::Mode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without a validation macro-F1 gain before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Chunk size for evaluation passes.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            max_epochs: 100,
            patience: 10,
            batch_size: 32,
            seeds: (41..=45).collect(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            eval_batch: 128,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if self.max_epochs == 0 || self.batch_size == 0 || self.eval_batch == 0 {
            return Err(Error::config("max_epochs, batch_size and eval_batch must be positive"));
        }
        if self.patience > self.max_epochs {
            return Err(Error::config(format!("patience {} exceeds max_epochs {}", self.patience, self.max_epochs)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy on the augmented training batches, in percent.
    pub train_acc: f64,
    pub val: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub stopped_early: bool,
    /// Run metadata; excluded from reproducibility comparisons.
    pub wall_seconds: f64,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_acc,val_precision,val_recall,val_f1,val_auroc,val_auprc\n");
        for e in &self.epochs {
            let v = &e.val;
            s.push_str(&format!("{},{},{},{},{},{},{},{},{}\n", e.epoch, e.train_loss, e.train_acc, v.accuracy, v.precision, v.recall, v.f1, v.auroc, v.auprc));
        }
        s
    }
}

pub struct FitOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model,
    pub log: TrainLog,
}

/// Trains a fresh model seeded with `seed`. With `out_dir`, writes
/// `checkpoint.bin` (plus index), `train_log.csv` and `train_log.json`.
pub fn fit(
    model_cfg: &EncoderConfig,
    train: &TimeSeriesBatch,
    val: &TimeSeriesBatch,
    cfg: &TrainConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::config("training and validation parts must both be non-empty"));
    }
    let started = Instant::now();
    let mut model = Model::new(model_cfg, seed)?;
    let mut opt = Adam::new(cfg.adam(), &model.store);
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    order_rng.set_stream(1);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(seed);
    aug_rng.set_stream(2);

    let mut best = (0usize, f64::NEG_INFINITY, model.store.clone());
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.select(chunk);
            let mut tape = Tape::new();
            let x = tape.constant(batch.x);
            let out = model.forward(&mut tape, x, Mode::Train(&mut aug_rng))?;
            let loss = tape.cross_entropy(out.logits, &batch.labels)?;
            loss_sum += tape.value(loss).data()[0] * chunk.len() as f64;
            let k = model_cfg.num_classes;
            correct += tape.value(out.logits).data().chunks(k).zip(&batch.labels).filter(|(r, y)| argmax(r) == **y).count();
            let grads = tape.backward(loss)?;
            model.store.accumulate(&tape, &grads);
            opt.step(&mut model.store)?;
        }
        let val_report = evaluate(&model, val, cfg.eval_batch)?;
        if val_report.f1 > best.1 {
            best = (epoch, val_report.f1, model.store.clone());
        }
        epochs.push(EpochRecord { epoch, train_loss: loss_sum / train.len() as f64, train_acc: 100.0 * correct as f64 / train.len() as f64, val: val_report });
        let since = epoch - best.0;
        if since > 0 && since >= cfg.patience {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    model.store = best.2;
    let log = TrainLog { seed, epochs, best_epoch: best.0, best_val_f1: best.1, stopped_early, wall_seconds: started.elapsed().as_secs_f64() };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        model.save(&dir.join("checkpoint.bin"))?;
        fs::write(dir.join("train_log.csv"), log.to_csv())?;
        fs::write(dir.join("train_log.json"), serde_json::to_string_pretty(&log)?)?;
    }
    Ok(FitOutcome { model, log })
}

/// Class probabilities `[N][K]` from an evaluation-mode pass.
pub fn predict_proba(model: &Model, data: &TimeSeriesBatch, batch: usize) -> Result<Vec<Vec<f64>>> {
    let inf = model.infer(&data.x, batch)?;
    Ok(softmax_rows(inf.logits.data(), model.config().num_classes))
}

pub fn evaluate(model: &Model, data: &TimeSeriesBatch, batch: usize) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::config("cannot evaluate an empty split"));
    }
    classification_metrics(&data.labels, &predict_proba(model, data, batch)?)
}

pub fn evaluate_checkpoint(path: &Path, data: &TimeSeriesBatch, batch: usize) -> Result<MetricsReport> {
    evaluate(&Model::load(path)?, data, batch)
}

/// Pooled embeddings `[N, D]` of an evaluation-mode pass.
pub fn embed(model: &Model, x: &Tensor, batch: usize) -> Result<Tensor> {
    Ok(model.infer(x, batch)?.pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, DriftSpec};
    use crate::encoder::AlignModule;

    fn tiny_model(align: AlignModule) -> EncoderConfig {
        EncoderConfig {
            input_channels: 2,
            seq_len: 32,
            num_classes: 2,
            layers: 2,
            model_dim: 8,
            ffn_dim: 16,
            heads: 2,
            align_module: align,
            augmentations: vec!["identity".into()],
            ..Default::default()
        }
    }

    fn clean_data(subjects: usize, seed: u64) -> TimeSeriesBatch {
        let spec = DriftSpec {
            num_subjects: subjects,
            samples_per_subject: 8,
            length: 32,
            channels: 2,
            gain_spread: 0.0,
            phase_spread: 0.0,
            noise_std: 0.0,
            ..Default::default()
        };
        generate(&spec, seed).unwrap()
    }

    #[test]
    fn separable_set_is_learned() {
        let data = clean_data(4, 1);
        let cfg = TrainConfig { lr: 3e-3, max_epochs: 20, patience: 20, batch_size: 8, ..Default::default() };
        let fit = fit(&tiny_model(AlignModule::Fbam), &data, &data, &cfg, 41, None).unwrap();
        assert!(fit.log.epochs.iter().any(|e| e.train_acc == 100.0), "{:?}", fit.log.epochs.iter().map(|e| e.train_acc).collect::<Vec<_>>());
        assert_eq!(evaluate(&fit.model, &data, 16).unwrap().accuracy, 100.0);
    }

    #[test]
    fn same_seed_same_log_and_weights() {
        let data = clean_data(2, 2);
        let cfg = TrainConfig { lr: 1e-3, max_epochs: 2, patience: 2, batch_size: 4, ..Default::default() };
        let a = fit(&tiny_model(AlignModule::Tsam), &data, &data, &cfg, 7, None).unwrap();
        let b = fit(&tiny_model(AlignModule::Tsam), &data, &data, &cfg, 7, None).unwrap();
        assert_eq!(a.log.epochs, b.log.epochs);
        assert_eq!(a.log.best_epoch, b.log.best_epoch);
        for id in a.model.store.ids() {
            assert_eq!(a.model.store.value(id), b.model.store.value(id));
        }
    }

    #[test]
    fn zero_patience_stops_at_first_stall() {
        let data = clean_data(2, 3);
        // a vanishing learning rate keeps validation F1 flat after epoch 1
        let cfg = TrainConfig { lr: 1e-12, max_epochs: 5, patience: 0, batch_size: 16, ..Default::default() };
        let fit = fit(&tiny_model(AlignModule::None), &data, &data, &cfg, 1, None).unwrap();
        assert_eq!(fit.log.epochs.len(), 2);
        assert_eq!(fit.log.best_epoch, 1);
        assert!(fit.log.stopped_early);
    }

    #[test]
    fn best_epoch_has_the_top_val_f1() {
        let data = clean_data(2, 4);
        let cfg = TrainConfig { lr: 1e-3, max_epochs: 4, patience: 4, batch_size: 4, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let fit = fit(&tiny_model(AlignModule::Fbam), &data, &data, &cfg, 3, Some(dir.path())).unwrap();
        let best = &fit.log.epochs[fit.log.best_epoch - 1];
        assert!(fit.log.epochs.iter().all(|e| e.val.f1 <= best.val.f1));
        let reloaded = evaluate_checkpoint(&dir.path().join("checkpoint.bin"), &data, 8).unwrap();
        assert_eq!(reloaded, best.val);
        let csv = fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
        assert_eq!(csv.lines().count(), fit.log.epochs.len() + 1);
    }

    #[test]
    fn empty_split_is_a_config_error() {
        let data = clean_data(2, 5);
        let empty = data.select(&[]);
        let r = fit(&tiny_model(AlignModule::None), &data, &empty, &TrainConfig::default(), 1, None);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn patience_beyond_epochs_is_rejected() {
        assert!(TrainConfig { patience: 11, max_epochs: 10, ..Default::default() }.validate().is_err());
    }
}
