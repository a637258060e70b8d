//! Pyramid convolutional embedding: token and positional embedding followed by
//! three parallel stacks of stride-2 convolution blocks producing sequences of
//! length `T/2`, `T/4` and `T/8`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{sinusoidal_positions, LayerNorm, Linear};
use crate::numcore::{ParamStore, Tape, Tensor, Var};

/// One entry of the augmentation pool, written as name plus strength, e.g.
/// `jitter0.2`, `scale0.1`, `drop0.25`, or `identity`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Augmentation {
    Identity,
    /// Additive Gaussian noise with this standard deviation.
    Jitter(f64),
    /// Multiplicative factor `1 + N(0, s)` per sample and feature.
    Scale(f64),
    /// Zero features with this probability; survivors scaled by `1 / (1 - p)`.
    Dropout(f64),
}

impl FromStr for Augmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "identity" || s == "none" {
            return Ok(Augmentation::Identity);
        }
        let split = s.find(|c: char| c.is_ascii_digit() || c == '.').unwrap_or(s.len());
        let (name, num) = s.split_at(split);
        let value: f64 = num.parse().map_err(|_| Error::config(format!("augmentation `{s}` lacks a numeric strength")))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::config(format!("augmentation `{s}` has invalid strength")));
        }
        match name {
            "jitter" => Ok(Augmentation::Jitter(value)),
            "scale" => Ok(Augmentation::Scale(value)),
            "drop" | "dropout" if value <= 1.0 => Ok(Augmentation::Dropout(value)),
            "drop" | "dropout" => Err(Error::config(format!("dropout rate {value} exceeds 1"))),
            _ => Err(Error::config(format!("unknown augmentation `{name}`"))),
        }
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Augmentation::Identity => write!(f, "identity"),
            Augmentation::Jitter(v) => write!(f, "jitter{v}"),
            Augmentation::Scale(v) => write!(f, "scale{v}"),
            Augmentation::Dropout(v) => write!(f, "drop{v}"),
        }
    }
}

pub fn parse_pool(pool: &[String]) -> Result<Vec<Augmentation>> {
    pool.iter().map(|s| s.parse()).collect()
}

/// Applies `aug` to `x`, drawing noise from `rng`.
pub fn augment(tape: &mut Tape, x: Var, aug: Augmentation, rng: &mut ChaCha8Rng) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    match aug {
        Augmentation::Identity => Ok(x),
        Augmentation::Jitter(sigma) => {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
            let noise = tape.constant(Tensor::from_fn(&shape, |_| normal.sample(rng)));
            tape.add(x, noise)
        }
        Augmentation::Scale(sigma) => {
            let normal = Normal::new(1.0, sigma).map_err(|e| Error::config(e.to_string()))?;
            let mut fshape = shape.clone();
            fshape[1] = 1;
            let factor = tape.constant(Tensor::from_fn(&fshape, |_| normal.sample(rng)));
            tape.mul(x, factor)
        }
        Augmentation::Dropout(p) => {
            let keep = if p >= 1.0 { 0.0 } else { 1.0 / (1.0 - p) };
            let mask = tape.constant(Tensor::from_fn(&shape, |_| if rng.random::<f64>() < p { 0.0 } else { keep }));
            tape.mul(x, mask)
        }
    }
}

/// Training draws one augmentation per block from the pool; evaluation skips it.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

#[derive(Clone, Debug)]
struct DownBlock {
    conv: Linear,
    norm: LayerNorm,
}

impl DownBlock {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let t = tape.shape(x)[1];
        let windows = tape.unfold(x, 3, 2, 1, t / 2)?;
        let y = self.conv.forward(tape, store, windows)?;
        let y = self.norm.forward(tape, store, y)?;
        tape.gelu(y)
    }
}

#[derive(Clone, Debug)]
pub struct Pce {
    embed: Linear,
    stacks: Vec<Vec<DownBlock>>,
    pool: Vec<Augmentation>,
    dim: usize,
}

impl Pce {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, dim: usize, pool: Vec<Augmentation>) -> Result<Self> {
        let embed = Linear::new(store, &format!("{name}.embed"), channels, dim)?;
        let mut stacks = Vec::new();
        for s in 0..3 {
            let mut blocks = Vec::new();
            for b in 0..=s {
                let prefix = format!("{name}.scale{}.block{b}", s + 1);
                blocks.push(DownBlock {
                    conv: Linear::new(store, &format!("{prefix}.conv"), 3 * dim, dim)?,
                    norm: LayerNorm::new(store, &format!("{prefix}.norm"), dim)?,
                });
            }
            stacks.push(blocks);
        }
        Ok(Pce { embed, stacks, pool, dim })
    }

    pub fn output_lengths(t: usize) -> [usize; 3] {
        [t / 2, t / 4, t / 8]
    }

    /// `[B, T, C]` to three sequences `[B, T/2, D]`, `[B, T/4, D]`, `[B, T/8, D]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mut mode: Mode<'_>) -> Result<[Var; 3]> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 {
            return Err(Error::dim(format!("embedding expects [B, T, C], got {shape:?}")));
        }
        let t = shape[1];
        if t < 8 {
            return Err(Error::config(format!("pyramid embedding needs T >= 8, got {t}")));
        }
        let e = self.embed.forward(tape, store, x)?;
        let pos = tape.constant(sinusoidal_positions(t, self.dim));
        let e = tape.add(e, pos)?;
        let mut outs = Vec::with_capacity(3);
        for stack in &self.stacks {
            let mut h = e;
            for block in stack {
                h = block.forward(tape, store, h)?;
                if let Mode::Train(rng) = &mut mode {
                    if !self.pool.is_empty() {
                        let aug = self.pool[rng.random_range(0..self.pool.len())];
                        h = augment(tape, h, aug, rng)?;
                    }
                }
            }
            outs.push(h);
        }
        Ok([outs[0], outs[1], outs[2]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn input(b: usize, t: usize, c: usize) -> Tensor {
        Tensor::from_fn(&[b, t, c], |i| ((i * 37) % 23) as f64 / 23.0 - 0.5)
    }

    #[test]
    fn parses_pool_entries() {
        let pool = parse_pool(&["scale0.1".into(), "drop0.25".into(), "jitter0.2".into(), "identity".into()]).unwrap();
        assert_eq!(pool, vec![Augmentation::Scale(0.1), Augmentation::Dropout(0.25), Augmentation::Jitter(0.2), Augmentation::Identity]);
        assert_eq!(pool[1].to_string(), "drop0.25");
        assert!("warp0.3".parse::<Augmentation>().is_err());
        assert!("scale".parse::<Augmentation>().is_err());
        assert!("drop1.5".parse::<Augmentation>().is_err());
    }

    #[test]
    fn shapes_follow_the_pyramid() {
        let mut store = ParamStore::new(0);
        let pce = Pce::new(&mut store, "pce", 16, 128, vec![]).unwrap();
        let mut tape = Tape::inference();
        let x = tape.constant(input(1, 256, 16));
        let outs = pce.forward(&mut tape, &store, x, Mode::Eval).unwrap();
        assert_eq!(tape.shape(outs[0]), &[1, 128, 128]);
        assert_eq!(tape.shape(outs[1]), &[1, 64, 128]);
        assert_eq!(tape.shape(outs[2]), &[1, 32, 128]);
    }

    #[test]
    fn odd_lengths_floor() {
        let mut store = ParamStore::new(0);
        let pce = Pce::new(&mut store, "pce", 2, 8, vec![]).unwrap();
        for t in [8, 9, 15, 21, 30] {
            let mut tape = Tape::inference();
            let x = tape.constant(input(2, t, 2));
            let outs = pce.forward(&mut tape, &store, x, Mode::Eval).unwrap();
            // each block floors its own input length
            let expect = [t / 2, (t / 2) / 2, ((t / 2) / 2) / 2];
            for (o, e) in outs.iter().zip(expect) {
                assert_eq!(tape.shape(*o)[1], e);
            }
            assert_eq!(expect, Pce::output_lengths(t));
        }
    }

    #[test]
    fn eval_is_deterministic() {
        let mut store = ParamStore::new(3);
        let pce = Pce::new(&mut store, "pce", 3, 8, vec![Augmentation::Jitter(0.5)]).unwrap();
        let run = || {
            let mut tape = Tape::inference();
            let x = tape.constant(input(2, 16, 3));
            let outs = pce.forward(&mut tape, &store, x, Mode::Eval).unwrap();
            outs.map(|o| tape.value(o).clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn full_dropout_zeroes_stage_features() {
        let mut store = ParamStore::new(3);
        let pce = Pce::new(&mut store, "pce", 3, 8, vec![Augmentation::Dropout(1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let x = tape.constant(input(2, 16, 3));
        let outs = pce.forward(&mut tape, &store, x, Mode::Train(&mut rng)).unwrap();
        for o in outs {
            assert!(tape.value(o).data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn training_augmentation_is_seeded() {
        let mut store = ParamStore::new(3);
        let pce = Pce::new(&mut store, "pce", 3, 8, vec![Augmentation::Jitter(0.2), Augmentation::Scale(0.1)]).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tape = Tape::new();
            let x = tape.constant(input(2, 16, 3));
            let outs = pce.forward(&mut tape, &store, x, Mode::Train(&mut rng)).unwrap();
            tape.value(outs[0]).clone()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn short_input_is_a_config_error() {
        let mut store = ParamStore::new(0);
        let pce = Pce::new(&mut store, "pce", 1, 4, vec![]).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(input(1, 7, 1));
        assert!(matches!(pce.forward(&mut tape, &store, x, Mode::Eval), Err(Error::Config(_))));
    }
}
