//! Train a small encoder with and without alignment blocks on drifting
//! subjects and compare held-out-subject scores.
//!
//! Runs a few epochs per variant; a few seconds in release mode.

use specdrift::dataset::{DriftSpec, SplitPolicy};
use specdrift::encoder::{AlignModule, EncoderConfig};
use specdrift::experiment::{run, DataSource, ExperimentConfig};
use specdrift::metrics::{FbdConfig, ProbeConfig};
use specdrift::trainer::TrainConfig;

fn main() -> specdrift::Result<()> {
    let spec = DriftSpec { num_subjects: 8, samples_per_subject: 60, length: 64, ..DriftSpec::default() };
    let base = ExperimentConfig {
        data: DataSource::Synthetic { spec: spec.clone(), seed: 1 },
        split: SplitPolicy::Counts { train: 4, val: 2, test: 2 },
        model: EncoderConfig {
            input_channels: spec.channels,
            seq_len: spec.length,
            num_classes: 2,
            layers: 2,
            model_dim: 16,
            ffn_dim: 32,
            heads: 2,
            ..EncoderConfig::default()
        },
        train: TrainConfig { lr: 2e-3, max_epochs: 4, patience: 2, ..TrainConfig::default() },
        fbd: FbdConfig { fs: 64.0, bin_hz: 2.0, band: Some((0.0, 24.0)) },
        probe: ProbeConfig::default(),
        ..ExperimentConfig::default()
    };
    let data = base.load_data()?;
    println!("variant  best_epoch  test_acc  test_f1  auroc   emb_fbd  probe_f1");
    for align in [AlignModule::None, AlignModule::Tsam, AlignModule::Fbam] {
        let mut cfg = base.clone();
        cfg.model.align_module = align;
        let r = run(&cfg, &data, 41, None)?;
        println!(
            "{:<8} {:>10}  {:>8.1}  {:>7.1}  {:>5.1}  {:>7.3}  {:>8.1}",
            format!("{align:?}"),
            r.best_epoch,
            r.test.accuracy,
            r.test.f1,
            r.test.auroc,
            r.embedding_fbd,
            r.probe_f1
        );
    }
    Ok(())
}
