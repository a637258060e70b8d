//! Command-line interface. Structured output is JSON on stdout; diagnostics
//! go to stderr. Exit status: 0 success, 1 invalid input, 2 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{read_btsd, write_btsd, DriftSpec, Part, SplitPlan, TimeSeriesBatch};
use crate::diagnostics::{gradcheck, GradTarget};
use crate::encoder::Model;
use crate::error::{Error, Result};
use crate::experiment::{alignment_spectra, check_compatible, finest_scale_sequence, run, run_sweep, spectra_csv, sweep_threads, ExperimentConfig};
use crate::metrics::{fbd, subject_probe, FbdConfig, ProbeConfig};
use crate::trainer::evaluate;

#[derive(Parser, Debug)]
#[command(name = "specdrift", version, about = "Frequency-band alignment experiments on drifting multichannel series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic spectral-drift dataset.
    GenData {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one model and test it on held-out subjects.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 41)]
        seed: u64,
        /// Defaults to `<output_dir>/seed-<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per seed and report mean and standard deviation.
    TrainSweep {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive range `a..b` or a comma list; defaults to the config's seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset or one part of a split.
    Eval {
        #[command(flatten)]
        input: ModelInput,
    },
    /// Frequency-band discriminability of raw series or model embeddings.
    Fbd {
        #[arg(long)]
        data: Option<PathBuf>,
        /// BTSD file whose series are precomputed embeddings.
        #[arg(long, conflicts_with = "data")]
        embeddings: Option<PathBuf>,
        /// With `--data`, analyse the checkpoint's finest-scale output sequence.
        #[arg(long, requires = "data")]
        checkpoint: Option<PathBuf>,
        /// Frequency bin width.
        #[arg(long, default_value_t = 2.0)]
        bins: f64,
        /// Sampling rate; defaults to the series length, so frequencies are DFT bins.
        #[arg(long)]
        fs: Option<f64>,
        /// Aggregation range `lo,hi` of bin lower edges.
        #[arg(long)]
        band: Option<String>,
        /// Directory receiving `fbd.json` and `fbd.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Subject-identity probe on frozen pooled embeddings.
    Probe {
        #[command(flatten)]
        input: ModelInput,
        #[arg(long, default_value_t = 0)]
        probe_seed: u64,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        /// fbam, tsam, scln or encoder; all when absent.
        #[arg(long)]
        module: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-class, per-subject spectra before and after the first alignment block.
    AlignDemo {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct ModelInput {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Split plan JSON; restricts the data to `--part`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    pub part: String,
}

impl ModelInput {
    fn load(&self) -> Result<(Model, TimeSeriesBatch)> {
        let model = Model::load(&self.checkpoint)?;
        let mut data = read_btsd(&self.data)?;
        check_compatible(model.config(), &data)?;
        if let Some(p) = &self.split {
            let plan: SplitPlan = serde_json::from_str(&fs::read_to_string(p)?)?;
            plan.check_disjoint()?;
            let part = match self.part.as_str() {
                "train" => Part::Train,
                "val" => Part::Val,
                _ => Part::Test,
            };
            data = plan.select(&data, part);
        }
        if data.is_empty() {
            return Err(Error::Validation("selected data is empty".into()));
        }
        Ok((model, data))
    }
}

/// Parses `a..b` (inclusive) or `a,b,c`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::config(format!("cannot read seeds from '{text}'"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim_start_matches('=').trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn parse_band(text: &str) -> Result<(f64, f64)> {
    let bad = || Error::config(format!("band must be 'lo,hi', got '{text}'"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let (lo, hi): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if !(lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn emit<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { spec, out, seed } => {
            let spec: DriftSpec = match spec {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
                None => DriftSpec::default(),
            };
            let data = crate::dataset::generate(&spec, seed)?;
            write_btsd(&out, &data)?;
            eprintln!("wrote {} samples to {}", data.len(), out.display());
            Ok(())
        }
        Command::Train { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let data = cfg.load_data()?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.join(format!("seed-{seed}")));
            fs::create_dir_all(&dir)?;
            let report = run(&cfg, &data, seed, Some(&dir))?;
            eprintln!("checkpoint and logs in {}", dir.display());
            emit(&report)
        }
        Command::TrainSweep { config, seeds, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let seeds = match seeds {
                Some(s) => parse_seeds(&s)?,
                None => cfg.train.seeds.clone(),
            };
            let data = cfg.load_data()?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            fs::create_dir_all(&dir)?;
            let sweep = run_sweep(&cfg, &data, &seeds, sweep_threads(), Some(&dir))?;
            write_json(&dir.join("sweep.json"), &sweep)?;
            emit(&sweep)
        }
        Command::Eval { input } => {
            let (model, data) = input.load()?;
            emit(&evaluate(&model, &data, 128)?)
        }
        Command::Fbd { data, embeddings, checkpoint, bins, fs, band, out } => {
            let (x, batch) = match (&data, &embeddings, &checkpoint) {
                (Some(d), None, Some(ck)) => {
                    let model = Model::load(ck)?;
                    let batch = read_btsd(d)?;
                    check_compatible(model.config(), &batch)?;
                    (finest_scale_sequence(&model, &batch.x, 128)?, batch)
                }
                (Some(d), None, None) => {
                    let b = read_btsd(d)?;
                    (b.x.clone(), b)
                }
                (None, Some(e), None) => {
                    let b = read_btsd(e)?;
                    (b.x.clone(), b)
                }
                _ => return Err(Error::config("give --data, --embeddings, or --data with --checkpoint")),
            };
            let cfg = FbdConfig { fs: fs.unwrap_or(x.shape()[1] as f64), bin_hz: bins, band: band.as_deref().map(parse_band).transpose()? };
            let report = fbd(&x, &batch.labels, &batch.subjects, &cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                write_json(&dir.join("fbd.json"), &report)?;
                fs::write(dir.join("fbd.csv"), report.to_csv())?;
            }
            emit(&report)
        }
        Command::Probe { input, probe_seed } => {
            let (model, data) = input.load()?;
            let pooled = model.infer(&data.x, 128)?.pooled;
            let report = subject_probe(pooled.data(), model.config().model_dim, &data.subjects, &ProbeConfig { seed: probe_seed, ..ProbeConfig::default() })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit(&report)
        }
        Command::Gradcheck { module, seed } => {
            let targets = match module {
                Some(m) => vec![m.parse::<GradTarget>()?],
                None => GradTarget::ALL.to_vec(),
            };
            let mut failed = Vec::new();
            for t in targets {
                let r = gradcheck(t, seed)?;
                let verdict = if r.passed { "PASS" } else { "FAIL" };
                println!("{t:?}: {verdict} max_rel_err<{:.0e} (observed {:.3e})", r.tol, r.max_rel_err);
                if !r.passed {
                    failed.push(format!("{t:?}"));
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::Numeric(format!("gradient check failed for {}", failed.join(", "))))
            }
        }
        Command::AlignDemo { checkpoint, data, out } => {
            let model = Model::load(&checkpoint)?;
            let batch = read_btsd(&data)?;
            check_compatible(model.config(), &batch)?;
            let rows = alignment_spectra(&model, &batch, 128)?;
            fs::create_dir_all(&out)?;
            let path = out.join("spectra.csv");
            fs::write(&path, spectra_csv(&rows))?;
            eprintln!("wrote {} spectra to {}", rows.len(), path.display());
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("41..45").unwrap(), vec![41, 42, 43, 44, 45]);
        assert_eq!(parse_seeds("1,5").unwrap(), vec![1, 5]);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn bands() {
        assert_eq!(parse_band("0,20").unwrap(), (0.0, 20.0));
        assert!(parse_band("3,1").is_err());
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["specdrift", "no-such-command"]), 1);
        assert_eq!(main_with_args(["specdrift", "gradcheck", "--module", "lstm"]), 1);
    }
}
