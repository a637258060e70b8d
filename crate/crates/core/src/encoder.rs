//! Hybrid encoder: pyramid embedding, per-scale attention interleaved with an
//! alignment block, temporal concatenation, conditional normalization, mean
//! pooling and an MLP classifier.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbam::{Fbam, FbamConfig};
use crate::nn::{LayerNorm, Mlp, MultiHeadAttention};
use crate::numcore::{ParamStore, Tape, Tensor, Var};
use crate::pce::{parse_pool, Mode, Pce};
use crate::scln::Scln;
use crate::tsam::{Tsam, TsamConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignModule {
    #[default]
    Fbam,
    Tsam,
    None,
}

/// Order of the two halves of each repeated unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interleave {
    #[default]
    AttentionThenAlign,
    AlignThenAttention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_channels: usize,
    pub seq_len: usize,
    pub num_classes: usize,
    /// Total layers per scale; half are attention, half alignment.
    pub layers: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub heads: usize,
    pub align_module: AlignModule,
    pub interleave: Interleave,
    pub fbam: FbamConfig,
    /// Defaults to the FBAM hyperparameters when absent.
    pub tsam: Option<TsamConfig>,
    pub scln_alpha: f64,
    pub augmentations: Vec<String>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_channels: 1,
            seq_len: 256,
            num_classes: 2,
            layers: 6,
            model_dim: 128,
            ffn_dim: 256,
            heads: 4,
            align_module: AlignModule::Fbam,
            interleave: Interleave::AttentionThenAlign,
            fbam: FbamConfig::default(),
            tsam: None,
            scln_alpha: 0.1,
            augmentations: vec!["scale0.1".into(), "drop0.25".into()],
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.layers % 2 != 0 {
            return Err(Error::config(format!("layers must be a positive even number, got {}", self.layers)));
        }
        if self.input_channels == 0 || self.num_classes == 0 || self.model_dim == 0 || self.ffn_dim == 0 {
            return Err(Error::config("channels, classes and dimensions must be positive"));
        }
        if self.seq_len < 8 {
            return Err(Error::config(format!("seq_len must be at least 8, got {}", self.seq_len)));
        }
        self.fbam.validate()?;
        parse_pool(&self.augmentations)?;
        Ok(())
    }

    pub fn tsam_config(&self) -> TsamConfig {
        self.tsam.clone().unwrap_or_else(|| TsamConfig::from(&self.fbam))
    }

    /// Length of the concatenated sequence fed to the normalization layer.
    pub fn concat_len(&self) -> usize {
        Pce::output_lengths(self.seq_len).iter().sum()
    }
}

#[derive(Clone, Debug)]
struct AttentionBlock {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    ffn: Mlp,
}

impl AttentionBlock {
    fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        Ok(AttentionBlock {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), cfg.model_dim)?,
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), cfg.model_dim, cfg.heads)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), cfg.model_dim)?,
            ffn: Mlp::new(store, &format!("{name}.ffn"), cfg.model_dim, cfg.ffn_dim, cfg.model_dim)?,
        })
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.norm1.forward(tape, store, x)?;
        let h = self.attn.forward(tape, store, h)?;
        let x = tape.add(x, h)?;
        let h = self.norm2.forward(tape, store, x)?;
        let h = self.ffn.forward(tape, store, h)?;
        tape.add(x, h)
    }
}

#[derive(Clone, Debug)]
enum Align {
    Fbam(Fbam),
    Tsam(Tsam),
    None,
}

impl Align {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        match self {
            Align::Fbam(b) => b.forward(tape, store, x),
            Align::Tsam(b) => b.forward(tape, store, x),
            Align::None => Ok(x),
        }
    }
}

/// Caps the uniform band count at the number of oscillatory bins of a short scale.
fn scale_fbam(cfg: &FbamConfig, len: usize) -> FbamConfig {
    let mut c = cfg.clone();
    if c.custom_boundaries.is_none() {
        c.bands = c.bands.min(len / 2);
    }
    c
}

/// Short scales get at most one segment per step.
fn scale_tsam(cfg: &TsamConfig, len: usize) -> TsamConfig {
    let mut c = cfg.clone();
    c.segments = c.segments.min(len);
    c
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ModelOutput {
    /// `[B, num_classes]`.
    pub logits: Var,
    /// `[B, D]` temporal mean of the normalized sequence.
    pub pooled: Var,
    /// `[B, T/2 + T/4 + T/8, D]` normalized concatenated sequence.
    pub sequence: Var,
    /// Per-scale encoder outputs before concatenation.
    pub scales: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    cfg: EncoderConfig,
    pce: Pce,
    units: Vec<Vec<(AttentionBlock, Align)>>,
    scln: Scln,
    head: Mlp,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim;
        let pce = Pce::new(store, "pce", cfg.input_channels, d, parse_pool(&cfg.augmentations)?)?;
        let mut units = Vec::new();
        for (s, &len) in Pce::output_lengths(cfg.seq_len).iter().enumerate() {
            let mut scale = Vec::new();
            for l in 0..cfg.layers / 2 {
                let prefix = format!("scale{}.unit{l}", s + 1);
                let attn = AttentionBlock::new(store, &format!("{prefix}.attn"), cfg)?;
                let align = match cfg.align_module {
                    AlignModule::Fbam if len < 4 => Align::None,
                    AlignModule::Fbam => Align::Fbam(Fbam::new(store, &format!("{prefix}.fbam"), &scale_fbam(&cfg.fbam, len), len, d, s)?),
                    AlignModule::Tsam => Align::Tsam(Tsam::new(store, &format!("{prefix}.tsam"), &scale_tsam(&cfg.tsam_config(), len), len, d)?),
                    AlignModule::None => Align::None,
                };
                scale.push((attn, align));
            }
            units.push(scale);
        }
        let scln = Scln::new(store, "scln", d, cfg.scln_alpha)?;
        let head = Mlp::new(store, "head", d, d, cfg.num_classes)?;
        Ok(Encoder { cfg: cfg.clone(), pce, units, scln, head })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: Mode<'_>) -> Result<ModelOutput> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != self.cfg.seq_len || shape[2] != self.cfg.input_channels {
            return Err(Error::dim(format!("model expects [B, {}, {}], got {shape:?}", self.cfg.seq_len, self.cfg.input_channels)));
        }
        let pyramid = self.pce.forward(tape, store, x, mode)?;
        let mut scales = Vec::with_capacity(3);
        for (mut h, units) in pyramid.into_iter().zip(&self.units) {
            for (attn, align) in units {
                h = match self.cfg.interleave {
                    Interleave::AttentionThenAlign => {
                        let h = attn.forward(tape, store, h)?;
                        align.forward(tape, store, h)?
                    }
                    Interleave::AlignThenAttention => {
                        let h = align.forward(tape, store, h)?;
                        attn.forward(tape, store, h)?
                    }
                };
            }
            scales.push(h);
        }
        let cat = tape.concat(&scales, 1)?;
        let sequence = self.scln.forward(tape, store, cat)?;
        let pooled = tape.mean(sequence, 1)?;
        let b = shape[0];
        let pooled = tape.reshape(pooled, &[b, self.cfg.model_dim])?;
        let logits = self.head.forward(tape, store, pooled)?;
        Ok(ModelOutput { logits, pooled, sequence, scales })
    }
}

impl Encoder {
    /// Input and output of the first alignment block at the finest scale, or
    /// `None` when that block is a pass-through.
    pub fn first_alignment(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Option<(Var, Var)>> {
        let Some((attn, align)) = self.units[0].first() else { return Ok(None) };
        if matches!(align, Align::None) {
            return Ok(None);
        }
        let [h, ..] = self.pce.forward(tape, store, x, Mode::Eval)?;
        let before = match self.cfg.interleave {
            Interleave::AttentionThenAlign => attn.forward(tape, store, h)?,
            Interleave::AlignThenAttention => h,
        };
        let after = align.forward(tape, store, before)?;
        Ok(Some((before, after)))
    }
}

/// An encoder together with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub encoder: Encoder,
    pub store: ParamStore,
}

/// Values of one evaluation-mode pass.
#[derive(Clone, Debug)]
pub struct Inference {
    pub logits: Tensor,
    pub pooled: Tensor,
    pub sequence: Tensor,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointIndex {
    format: String,
    version: u32,
    seed: u64,
    config: EncoderConfig,
    params: Vec<CheckpointEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset in f64 elements into the binary file.
    offset: usize,
}

const CHECKPOINT_FORMAT: &str = "specdrift-checkpoint";

/// Path of the JSON index written next to a checkpoint binary.
pub fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl Model {
    pub fn new(cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(seed);
        let encoder = Encoder::new(&mut store, cfg)?;
        Ok(Model { encoder, store })
    }

    pub fn config(&self) -> &EncoderConfig {
        self.encoder.config()
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, mode: Mode<'_>) -> Result<ModelOutput> {
        self.encoder.forward(tape, &self.store, x, mode)
    }

    /// Evaluation-mode pass over `x` in chunks of `batch` samples.
    pub fn infer(&self, x: &Tensor, batch: usize) -> Result<Inference> {
        let shape = x.shape();
        if shape.len() != 3 {
            return Err(Error::dim(format!("infer expects [N, T, C], got {shape:?}")));
        }
        let (n, row) = (shape[0], shape[1] * shape[2]);
        let (mut logits, mut pooled, mut sequence) = (Vec::new(), Vec::new(), Vec::new());
        let mut seq_shape = vec![0, 0];
        for start in (0..n).step_by(batch.max(1)) {
            let len = batch.max(1).min(n - start);
            let chunk = Tensor::new(vec![len, shape[1], shape[2]], x.data()[start * row..(start + len) * row].to_vec())?;
            let mut tape = Tape::inference();
            let xv = tape.constant(chunk);
            let out = self.forward(&mut tape, xv, Mode::Eval)?;
            logits.extend_from_slice(tape.value(out.logits).data());
            pooled.extend_from_slice(tape.value(out.pooled).data());
            sequence.extend_from_slice(tape.value(out.sequence).data());
            seq_shape = tape.shape(out.sequence)[1..].to_vec();
        }
        let cfg = self.config();
        Ok(Inference {
            logits: Tensor::new(vec![n, cfg.num_classes], logits)?,
            pooled: Tensor::new(vec![n, cfg.model_dim], pooled)?,
            sequence: Tensor::new(vec![n, seq_shape[0], seq_shape[1]], sequence)?,
        })
    }

    /// Writes the flat little-endian f64 binary to `path` and its JSON index
    /// to `path.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.store.num_scalars() * 8);
        let mut params = Vec::new();
        let mut offset = 0;
        for id in self.store.ids() {
            let v = self.store.value(id);
            params.push(CheckpointEntry { name: self.store.name(id).to_string(), shape: v.shape().to_vec(), offset });
            for x in v.data() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            offset += v.len();
        }
        let index = CheckpointIndex { format: CHECKPOINT_FORMAT.into(), version: 1, seed: self.store.seed(), config: self.config().clone(), params };
        fs::File::create(path)?.write_all(&bytes)?;
        fs::write(index_path(path), serde_json::to_string_pretty(&index)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let index: CheckpointIndex = serde_json::from_str(&fs::read_to_string(index_path(path))?)?;
        if index.format != CHECKPOINT_FORMAT || index.version != 1 {
            return Err(Error::Validation(format!("unsupported checkpoint {} v{}", index.format, index.version)));
        }
        let bytes = fs::read(path)?;
        let mut model = Model::new(&index.config, index.seed)?;
        if index.params.len() != model.store.len() {
            return Err(Error::Validation(format!("checkpoint has {} arrays, model expects {}", index.params.len(), model.store.len())));
        }
        for entry in &index.params {
            let id = model.store.id(&entry.name).ok_or_else(|| Error::Validation(format!("checkpoint array `{}` unknown to model", entry.name)))?;
            let target = model.store.value_mut(id);
            if target.shape() != entry.shape.as_slice() {
                return Err(Error::Validation(format!("checkpoint array `{}` has shape {:?}", entry.name, entry.shape)));
            }
            let n = target.len();
            let (lo, hi) = (entry.offset * 8, (entry.offset + n) * 8);
            if hi > bytes.len() {
                return Err(Error::Format { offset: bytes.len() as u64, message: format!("checkpoint truncated in `{}`", entry.name) });
            }
            for (dst, chunk) in target.data_mut().iter_mut().zip(bytes[lo..hi].chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
        }
        Ok(model)
    }
}
