//! Experiment configuration and the end-to-end cross-subject protocol:
//! split, fit, test, and embedding analysis on held-out subjects.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{generate, read_btsd, split_by_subject, DriftSpec, Part, SplitPolicy, TimeSeriesBatch};
use crate::encoder::{EncoderConfig, Model};
use crate::error::{Error, Result};
use crate::metrics::{fbd, mean_std, silhouette, subject_probe, FbdConfig, FbdReport, MetricsReport, ProbeConfig, ProbeReport};
use crate::numcore::{Tape, Tensor};
use crate::trainer::{evaluate, fit, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default)]
        spec: DriftSpec,
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { spec: DriftSpec::default(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub split: SplitPolicy,
    /// Fixed split seed; when absent each run splits with its own seed.
    pub split_seed: Option<u64>,
    pub model: EncoderConfig,
    pub train: TrainConfig,
    pub fbd: FbdConfig,
    pub probe: ProbeConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::default(),
            split: SplitPolicy::Ratios { train: 0.6, val: 0.2, test: 0.2 },
            split_seed: None,
            model: EncoderConfig::default(),
            train: TrainConfig::default(),
            fbd: FbdConfig::default(),
            probe: ProbeConfig::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    /// Strict parse: unknown keys anywhere are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn load_data(&self) -> Result<TimeSeriesBatch> {
        let data = match &self.data {
            DataSource::Synthetic { spec, seed } => generate(spec, *seed)?,
            DataSource::File { path } => read_btsd(path)?,
        };
        check_compatible(&self.model, &data)?;
        Ok(data)
    }
}

/// Errors unless `data` fits the model's input layout and class count.
pub fn check_compatible(model: &EncoderConfig, data: &TimeSeriesBatch) -> Result<()> {
    if data.length() != model.seq_len || data.channels() != model.input_channels {
        return Err(Error::Validation(format!(
            "data is [*, {}, {}] but the model expects [*, {}, {}]",
            data.length(),
            data.channels(),
            model.seq_len,
            model.input_channels
        )));
    }
    if data.num_classes > model.num_classes {
        return Err(Error::Validation(format!("data has {} classes, model {}", data.num_classes, model.num_classes)));
    }
    Ok(())
}

/// Representation quality on a labelled set of subjects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingAnalysis {
    pub fbd: FbdReport,
    pub probe: ProbeReport,
    pub label_silhouette: f64,
}

/// Finest-scale slice of the normalized output sequence, `[N, T/2, D]`.
pub fn finest_scale_sequence(model: &Model, x: &Tensor, batch: usize) -> Result<Tensor> {
    let seq = model.infer(x, batch)?.sequence;
    let (n, l, d) = (seq.shape()[0], seq.shape()[1], seq.shape()[2]);
    let keep = model.config().seq_len / 2;
    let mut out = Vec::with_capacity(n * keep * d);
    for i in 0..n {
        out.extend_from_slice(&seq.data()[i * l * d..(i * l + keep) * d]);
    }
    Tensor::new(vec![n, keep, d], out)
}

/// FBD of the finest-scale output sequence (at half the input rate), subject
/// probe and label silhouette of the pooled embedding.
pub fn analyze_embeddings(model: &Model, data: &TimeSeriesBatch, fbd_cfg: &FbdConfig, probe_cfg: &ProbeConfig, batch: usize) -> Result<EmbeddingAnalysis> {
    let inf = model.infer(&data.x, batch)?;
    let d = model.config().model_dim;
    let seq = finest_scale_sequence(model, &data.x, batch)?;
    let half = FbdConfig { fs: fbd_cfg.fs / 2.0, ..fbd_cfg.clone() };
    let fbd = fbd(&seq, &data.labels, &data.subjects, &half)?;
    let probe = subject_probe(inf.pooled.data(), d, &data.subjects, probe_cfg)?;
    let label_silhouette = silhouette(inf.pooled.data(), d, &data.labels)?;
    Ok(EmbeddingAnalysis { fbd, probe, label_silhouette })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val: MetricsReport,
    pub test: MetricsReport,
    /// Band-aggregated FBD of held-out embeddings.
    pub embedding_fbd: f64,
    pub probe_f1: f64,
    pub label_silhouette: f64,
    pub test_subjects: Vec<usize>,
    /// Run metadata; excluded from reproducibility comparisons.
    pub wall_seconds: f64,
}

/// One training run. Embedding analysis uses the validation and test
/// subjects, none of which were trained on.
pub fn run(cfg: &ExperimentConfig, data: &TimeSeriesBatch, seed: u64, out_dir: Option<&Path>) -> Result<RunReport> {
    let started = Instant::now();
    check_compatible(&cfg.model, data)?;
    let plan = split_by_subject(data, &cfg.split, cfg.split_seed.unwrap_or(seed))?;
    let (train, val, test) = (plan.select(data, Part::Train), plan.select(data, Part::Val), plan.select(data, Part::Test));
    if test.is_empty() {
        return Err(Error::config("test part is empty"));
    }
    let outcome = fit(&cfg.model, &train, &val, &cfg.train, seed, out_dir)?;
    let test_metrics = evaluate(&outcome.model, &test, cfg.train.eval_batch)?;
    let mut held: Vec<usize> = plan.indices(data, Part::Val);
    held.extend(plan.indices(data, Part::Test));
    let analysis = analyze_embeddings(&outcome.model, &data.select(&held), &cfg.fbd, &cfg.probe, cfg.train.eval_batch)?;
    let best = &outcome.log.epochs[outcome.log.best_epoch - 1];
    let report = RunReport {
        seed,
        best_epoch: outcome.log.best_epoch,
        epochs_run: outcome.log.epochs.len(),
        val: best.val.clone(),
        test: test_metrics,
        embedding_fbd: analysis.fbd.aggregate,
        probe_f1: analysis.probe.macro_f1,
        label_silhouette: analysis.label_silhouette,
        test_subjects: plan.test.clone(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out_dir {
        fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&report)?)?;
        fs::write(dir.join("embedding_fbd.csv"), analysis.fbd.to_csv())?;
        fs::write(dir.join("split.json"), serde_json::to_string_pretty(&plan)?)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auroc: f64,
    pub auprc: f64,
    pub embedding_fbd: f64,
    pub probe_f1: f64,
    pub label_silhouette: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<RunReport>,
    pub mean: Summary,
    /// Population standard deviation over runs.
    pub std: Summary,
}

impl SweepReport {
    pub fn from_runs(mut runs: Vec<RunReport>) -> Self {
        runs.sort_by_key(|r| r.seed);
        let field = |f: &dyn Fn(&RunReport) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
        let cols = [
            field(&|r| r.test.accuracy),
            field(&|r| r.test.precision),
            field(&|r| r.test.recall),
            field(&|r| r.test.f1),
            field(&|r| r.test.auroc),
            field(&|r| r.test.auprc),
            field(&|r| r.embedding_fbd),
            field(&|r| r.probe_f1),
            field(&|r| r.label_silhouette),
        ];
        let pick = |i: usize| Summary {
            accuracy: [cols[0].0, cols[0].1][i],
            precision: [cols[1].0, cols[1].1][i],
            recall: [cols[2].0, cols[2].1][i],
            f1: [cols[3].0, cols[3].1][i],
            auroc: [cols[4].0, cols[4].1][i],
            auprc: [cols[5].0, cols[5].1][i],
            embedding_fbd: [cols[6].0, cols[6].1][i],
            probe_f1: [cols[7].0, cols[7].1][i],
            label_silhouette: [cols[8].0, cols[8].1][i],
        };
        SweepReport { mean: pick(0), std: pick(1), runs }
    }
}

/// Worker count for sweeps: `SPECDRIFT_THREADS` when set, else the available cores.
pub fn sweep_threads() -> usize {
    std::env::var("SPECDRIFT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs every seed, up to `threads` at a time. With `out_root`, run `s`
/// writes into `out_root/seed-s`.
pub fn run_sweep(cfg: &ExperimentConfig, data: &TimeSeriesBatch, seeds: &[u64], threads: usize, out_root: Option<&Path>) -> Result<SweepReport> {
    if seeds.is_empty() {
        return Err(Error::config("sweep needs at least one seed"));
    }
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = seeds.get(i) else { break };
                let dir = out_root.map(|r| r.join(format!("seed-{seed}")));
                let r = dir.as_deref().map_or(Ok(()), |d| fs::create_dir_all(d).map_err(Error::from)).and_then(|_| run(cfg, data, seed, dir.as_deref()));
                results.lock().expect("sweep results lock").push(r);
            });
        }
    });
    let runs = results.into_inner().expect("sweep results lock").into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::from_runs(runs))
}

/// Mean magnitude spectrum per (class, subject) over trials and feature
/// channels, before and after the first alignment block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub stage: String,
    pub class: usize,
    pub subject: usize,
    pub magnitudes: Vec<f64>,
}

pub fn alignment_spectra(model: &Model, data: &TimeSeriesBatch, batch: usize) -> Result<Vec<SpectrumRow>> {
    let row = data.length() * data.channels();
    let mut sums: std::collections::BTreeMap<(usize, usize, usize), (Vec<f64>, usize)> = Default::default();
    for start in (0..data.len()).step_by(batch.max(1)) {
        let len = batch.max(1).min(data.len() - start);
        let chunk = Tensor::new(vec![len, data.length(), data.channels()], data.x.data()[start * row..(start + len) * row].to_vec())?;
        let mut tape = Tape::inference();
        let xv = tape.constant(chunk);
        let Some((before, after)) = model.encoder.first_alignment(&mut tape, &model.store, xv)? else {
            return Err(Error::Validation("model has no alignment block at the finest scale".into()));
        };
        for (stage, v) in [(0usize, before), (1, after)] {
            let t = tape.value(v);
            let (l, d) = (t.shape()[1], t.shape()[2]);
            let spectra = magnitude_spectra(t)?;
            let k = l / 2 + 1;
            for i in 0..len {
                let key = (stage, data.labels[start + i], data.subjects[start + i]);
                let e = sums.entry(key).or_insert_with(|| (vec![0.0; k], 0));
                for j in 0..k {
                    e.0[j] += (0..d).map(|c| spectra[(i * d + c) * k + j]).sum::<f64>() / d as f64;
                }
                e.1 += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|((stage, class, subject), (v, n))| SpectrumRow {
            stage: if stage == 0 { "before".into() } else { "after".into() },
            class,
            subject,
            magnitudes: v.into_iter().map(|x| x / n as f64).collect(),
        })
        .collect())
}

/// `|rfft|` along time of `[N, L, D]`, laid out `[N, D, L/2 + 1]`.
fn magnitude_spectra(t: &Tensor) -> Result<Vec<f64>> {
    let (n, l, d) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut rows = vec![0.0; n * d * l];
    for i in 0..n {
        for tt in 0..l {
            for c in 0..d {
                rows[(i * d + c) * l + tt] = t.data()[(i * l + tt) * d + c];
            }
        }
    }
    let z = crate::numcore::rfft(&Tensor::new(vec![n, d, l], rows)?)?;
    Ok(z.re().iter().zip(z.im()).map(|(a, b)| a.hypot(*b)).collect())
}

pub fn spectra_csv(rows: &[SpectrumRow]) -> String {
    let mut s = String::from("stage,class,subject,bin,magnitude\n");
    for r in rows {
        for (j, m) in r.magnitudes.iter().enumerate() {
            s.push_str(&format!("{},{},{},{j},{m}\n", r.stage, r.class, r.subject));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::AlignModule;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic {
                spec: DriftSpec { num_subjects: 6, samples_per_subject: 6, length: 32, channels: 2, ..DriftSpec::default() },
                seed: 1,
            },
            split: SplitPolicy::Counts { train: 2, val: 2, test: 2 },
            model: EncoderConfig {
                input_channels: 2,
                seq_len: 32,
                layers: 2,
                model_dim: 8,
                ffn_dim: 16,
                heads: 2,
                augmentations: vec![],
                ..EncoderConfig::default()
            },
            train: TrainConfig { max_epochs: 2, patience: 1, batch_size: 6, lr: 1e-3, ..TrainConfig::default() },
            fbd: FbdConfig { fs: 32.0, bin_hz: 2.0, band: Some((0.0, 8.0)) },
            probe: ProbeConfig { epochs: 20, ..ProbeConfig::default() },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"model": {"layers": 2}}"#).is_ok());
        assert!(matches!(ExperimentConfig::from_json(r#"{"model": {"layerz": 2}}"#), Err(Error::Json(_))));
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn config_round_trips() {
        let cfg = small();
        assert_eq!(ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap(), cfg);
    }

    #[test]
    fn incompatible_data_is_a_validation_error() {
        let mut cfg = small();
        cfg.model.input_channels = 3;
        assert!(matches!(cfg.load_data(), Err(Error::Validation(_))));
    }

    #[test]
    fn sweep_runs_every_seed_and_writes_outputs() {
        let cfg = small();
        let data = cfg.load_data().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let sweep = run_sweep(&cfg, &data, &[3, 1], 2, Some(dir.path())).unwrap();
        assert_eq!(sweep.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 3]);
        let f1s: Vec<f64> = sweep.runs.iter().map(|r| r.test.f1).collect();
        assert!((sweep.mean.f1 - (f1s[0] + f1s[1]) / 2.0).abs() < 1e-12);
        assert!((sweep.std.f1 - (f1s[0] - f1s[1]).abs() / 2.0).abs() < 1e-12);
        for f in ["metrics.json", "embedding_fbd.csv", "checkpoint.bin", "train_log.csv"] {
            assert!(dir.path().join("seed-1").join(f).exists(), "{f}");
        }
        let again = run(&cfg, &data, 1, None).unwrap();
        assert_eq!(again.test, sweep.runs[0].test);
        assert_eq!(again.embedding_fbd, sweep.runs[0].embedding_fbd);
    }

    #[test]
    fn alignment_spectra_cover_every_cell() {
        let cfg = small();
        let data = cfg.load_data().unwrap();
        let model = Model::new(&cfg.model, 0).unwrap();
        let rows = alignment_spectra(&model, &data, 8).unwrap();
        // 2 stages x 6 subjects x 2 classes, each with 16 / 2 + 1 bins
        assert_eq!(rows.len(), 24);
        assert!(rows.iter().all(|r| r.magnitudes.len() == 9));
        // zero-initialized heads: the block is the identity
        for pair in rows.chunks(12).next().unwrap().iter().zip(&rows[12..]) {
            assert_eq!((pair.0.class, pair.0.subject), (pair.1.class, pair.1.subject));
            assert!(pair.0.magnitudes.iter().zip(&pair.1.magnitudes).all(|(a, b)| (a - b).abs() < 1e-6));
        }
        let none = Model::new(&EncoderConfig { align_module: AlignModule::None, ..cfg.model.clone() }, 0).unwrap();
        assert!(alignment_spectra(&none, &data, 8).is_err());
        assert_eq!(spectra_csv(&rows).lines().count(), 1 + 24 * 9);
    }
}
