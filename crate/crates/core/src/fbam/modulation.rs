//! Descriptor-conditioned modulation network shared by the frequency and
//! time-domain alignment modules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{attention, Linear, Mlp};
use crate::numcore::{Init, ParamId, ParamStore, Tape, Tensor, Var};
use crate::spectral::{DescriptorSubset, EPS};

/// How band representations interact before the heads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandInteraction {
    /// Learned band tokens query the projected descriptors.
    #[default]
    CrossAttention,
    /// Projected descriptors attend among themselves; no tokens.
    SelfAttention,
}

/// Meaning of the third head's output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThirdHead {
    /// Phase offset in `(-pi, pi)` via `pi * tanh`.
    Phase,
    /// Unbounded additive bias.
    Bias,
}

/// Tape handles for one batch of modulation parameters.
#[derive(Clone, Copy, Debug)]
pub struct ModulationVars {
    /// `[B, M, r]` (or `[1, M, r]` when shared), each row on the simplex.
    pub kernel: Var,
    /// `[B, M]` (or `[1, M]`) gains in `(-1, 1)`.
    pub gain: Var,
    /// `[B, M]` (or `[1, M]`) phase offsets or biases.
    pub third: Var,
}

/// Plain-value copy of [`ModulationVars`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationParams {
    pub kernel: Tensor,
    pub gain: Tensor,
    pub phase: Tensor,
}

impl ModulationParams {
    pub fn from_tape(tape: &Tape, vars: &ModulationVars) -> Self {
        ModulationParams { kernel: tape.value(vars.kernel).clone(), gain: tape.value(vars.gain).clone(), phase: tape.value(vars.third).clone() }
    }
}

/// Differentiable band descriptors of a non-negative `[B, R, L]` array over the
/// segments `bounds` (offsets from 0 to `L`). Output is `[B, M, n]` with the
/// entries selected by `subset`.
pub fn descriptors(tape: &mut Tape, mag: Var, bounds: &[usize], subset: DescriptorSubset) -> Result<Var> {
    let shape = tape.shape(mag).to_vec();
    if shape.len() != 3 {
        return Err(Error::dim(format!("descriptors expect [B, R, L], got {shape:?}")));
    }
    let (b, rows) = (shape[0], shape[1]);
    let mut per_band = Vec::with_capacity(bounds.len() - 1);
    for seg in bounds.windows(2) {
        let (lo, len) = (seg[0], seg[1] - seg[0]);
        let band = tape.narrow(mag, 2, lo, len)?;
        let flat = tape.reshape(band, &[b, rows * len])?;

        let mean = tape.mean(flat, 1)?;
        let var = tape.variance(flat, 1)?;
        let std = tape.sqrt(var)?;
        let peak = tape.max(flat, 1)?;
        let sq = tape.square(flat)?;
        let energy = tape.sum(sq, 1)?;
        let values = tape.value(flat).data();
        let loc: Vec<f64> = (0..b)
            .map(|bi| {
                let row = &values[bi * rows * len..(bi + 1) * rows * len];
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                (best % len) as f64 / len as f64
            })
            .collect();
        let loc = tape.constant(Tensor::new(vec![b, 1], loc)?);

        let mut full = Vec::with_capacity(5);
        for v in [mean, std, peak, energy] {
            let shifted = tape.add_scalar(v, EPS)?;
            full.push(tape.log(shifted)?);
        }
        full.push(loc);
        let picked: Vec<Var> = subset.indices().iter().map(|&i| full[i]).collect();
        let row = tape.concat(&picked, 1)?;
        per_band.push(tape.reshape(row, &[b, 1, subset.len()])?);
    }
    tape.concat(&per_band, 1)
}

#[derive(Clone, Debug)]
enum Generator {
    Dynamic {
        tokens: Option<ParamId>,
        token_proj: Option<Linear>,
        desc_proj: Linear,
        wq: Linear,
        wk: Linear,
        wv: Linear,
        kernel_head: Mlp,
        gain_head: Mlp,
        third_head: Mlp,
    },
    Static {
        kernel: ParamId,
        gain: ParamId,
        third: ParamId,
    },
}

/// Maps `[B, M, n]` descriptors to per-band kernel, gain and phase (or bias).
#[derive(Clone, Debug)]
pub struct ModulationNet {
    bands: usize,
    kernel_size: usize,
    desc_dim: usize,
    third: ThirdHead,
    generator: Generator,
}

pub struct ModulationSpec {
    pub bands: usize,
    pub desc_dim: usize,
    pub token_dim: usize,
    pub kernel_size: usize,
    pub interaction: BandInteraction,
    pub static_modulation: bool,
    pub third: ThirdHead,
}

impl ModulationNet {
    pub fn new(store: &mut ParamStore, name: &str, spec: &ModulationSpec) -> Result<Self> {
        let (m, d, r) = (spec.bands, spec.token_dim, spec.kernel_size);
        if r == 0 || r % 2 == 0 {
            return Err(Error::config(format!("kernel size must be odd and positive, got {r}")));
        }
        if m == 0 || d == 0 {
            return Err(Error::config("band count and token dim must be positive"));
        }
        let generator = if spec.static_modulation {
            Generator::Static {
                kernel: store.add(&format!("{name}.static_kernel"), &[m, r], Init::Zeros)?,
                gain: store.add(&format!("{name}.static_gain"), &[m], Init::Zeros)?,
                third: store.add(&format!("{name}.static_phase"), &[m], Init::Zeros)?,
            }
        } else {
            let cross = spec.interaction == BandInteraction::CrossAttention;
            Generator::Dynamic {
                tokens: if cross { Some(store.add(&format!("{name}.band_tokens"), &[m, d], Init::Normal(1.0))?) } else { None },
                token_proj: if cross { Some(Linear::new(store, &format!("{name}.phi_o"), d, d)?) } else { None },
                desc_proj: Linear::new(store, &format!("{name}.phi_s"), spec.desc_dim, d)?,
                wq: Linear::new(store, &format!("{name}.attn.q"), d, d)?,
                wk: Linear::new(store, &format!("{name}.attn.k"), d, d)?,
                wv: Linear::new(store, &format!("{name}.attn.v"), d, d)?,
                kernel_head: Mlp::zero_output(store, &format!("{name}.head_w"), d, d, r)?,
                gain_head: Mlp::zero_output(store, &format!("{name}.head_g"), d, d, 1)?,
                third_head: Mlp::zero_output(store, &format!("{name}.head_p"), d, d, 1)?,
            }
        };
        Ok(ModulationNet { bands: m, kernel_size: r, desc_dim: spec.desc_dim, third: spec.third, generator })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    fn third_activation(&self, tape: &mut Tape, raw: Var) -> Result<Var> {
        match self.third {
            ThirdHead::Phase => {
                let t = tape.tanh(raw)?;
                tape.scale(t, PI)
            }
            ThirdHead::Bias => Ok(raw),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, desc: Var) -> Result<ModulationVars> {
        let shape = tape.shape(desc).to_vec();
        if shape.len() != 3 || shape[1] != self.bands || shape[2] != self.desc_dim {
            return Err(Error::dim(format!("modulation expects [B, {}, {}] descriptors, got {shape:?}", self.bands, self.desc_dim)));
        }
        let (b, m, r) = (shape[0], self.bands, self.kernel_size);
        match &self.generator {
            Generator::Static { kernel, gain, third } => {
                let k = tape.param(store, *kernel);
                let k = tape.reshape(k, &[1, m, r])?;
                let kernel = tape.softmax(k, 2)?;
                let g = tape.param(store, *gain);
                let g = tape.reshape(g, &[1, m])?;
                let gain = tape.tanh(g)?;
                let p = tape.param(store, *third);
                let p = tape.reshape(p, &[1, m])?;
                let third = self.third_activation(tape, p)?;
                Ok(ModulationVars { kernel, gain, third })
            }
            Generator::Dynamic { tokens, token_proj, desc_proj, wq, wk, wv, kernel_head, gain_head, third_head } => {
                let ctx = desc_proj.forward(tape, store, desc)?;
                let q = match (tokens, token_proj) {
                    (Some(t), Some(proj)) => {
                        let t = tape.param(store, *t);
                        let t = proj.forward(tape, store, t)?;
                        wq.forward(tape, store, t)?
                    }
                    _ => wq.forward(tape, store, ctx)?,
                };
                let k = wk.forward(tape, store, ctx)?;
                let v = wv.forward(tape, store, ctx)?;
                let o = attention(tape, q, k, v)?;

                let kw = kernel_head.forward(tape, store, o)?;
                let kernel = tape.softmax(kw, 2)?;
                let g = gain_head.forward(tape, store, o)?;
                let g = tape.reshape(g, &[b, m])?;
                let gain = tape.tanh(g)?;
                let p = third_head.forward(tape, store, o)?;
                let p = tape.reshape(p, &[b, m])?;
                let third = self.third_activation(tape, p)?;
                Ok(ModulationVars { kernel, gain, third })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: usize, interaction: BandInteraction) -> ModulationSpec {
        ModulationSpec { bands: m, desc_dim: 5, token_dim: 8, kernel_size: 3, interaction, static_modulation: false, third: ThirdHead::Phase }
    }

    fn randomize(store: &mut ParamStore, seed: u64) {
        let mut other = ParamStore::new(seed);
        for id in store.ids().collect::<Vec<_>>() {
            let shape = store.value(id).shape().to_vec();
            let name = store.name(id).to_string();
            let src = other.add(&name, &shape, Init::Normal(0.5)).unwrap();
            *store.value_mut(id) = other.value(src).clone();
        }
    }

    #[test]
    fn zero_init_heads_give_identity_modulation() {
        let mut store = ParamStore::new(1);
        let net = ModulationNet::new(&mut store, "m", &spec(4, BandInteraction::CrossAttention)).unwrap();
        let mut tape = Tape::new();
        let desc = tape.constant(Tensor::from_fn(&[2, 4, 5], |i| (i as f64 * 0.37).sin()));
        let out = net.forward(&mut tape, &store, desc).unwrap();
        let p = ModulationParams::from_tape(&tape, &out);
        assert!(p.kernel.data().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
        assert!(p.gain.data().iter().all(|g| *g == 0.0));
        assert!(p.phase.data().iter().all(|b| *b == 0.0));
    }

    #[test]
    fn identical_descriptor_rows_give_identical_rows() {
        for interaction in [BandInteraction::CrossAttention, BandInteraction::SelfAttention] {
            let mut store = ParamStore::new(2);
            let net = ModulationNet::new(&mut store, "m", &spec(3, interaction)).unwrap();
            randomize(&mut store, 9);
            let mut tape = Tape::new();
            let row = [0.1, -0.4, 0.9, 1.3, 0.25];
            let desc = tape.constant(Tensor::from_fn(&[1, 3, 5], |i| row[i % 5]));
            let out = net.forward(&mut tape, &store, desc).unwrap();
            let p = ModulationParams::from_tape(&tape, &out);
            let k = p.kernel.data();
            for m in 1..3 {
                for j in 0..3 {
                    assert!((k[m * 3 + j] - k[j]).abs() < 1e-12);
                }
                assert!((p.gain.data()[m] - p.gain.data()[0]).abs() < 1e-12);
                assert!((p.phase.data()[m] - p.phase.data()[0]).abs() < 1e-12);
            }
            assert!(p.gain.data()[0] != 0.0);
        }
    }

    #[test]
    fn ranges_hold_for_random_weights() {
        let mut store = ParamStore::new(3);
        let net = ModulationNet::new(&mut store, "m", &spec(5, BandInteraction::CrossAttention)).unwrap();
        randomize(&mut store, 4);
        let mut tape = Tape::new();
        let desc = tape.constant(Tensor::from_fn(&[3, 5, 5], |i| ((i * 7) % 11) as f64 - 5.0));
        let out = net.forward(&mut tape, &store, desc).unwrap();
        let p = ModulationParams::from_tape(&tape, &out);
        for row in p.kernel.data().chunks(3) {
            assert!(row.iter().all(|w| *w >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(p.gain.data().iter().all(|g| g.abs() < 1.0));
        assert!(p.phase.data().iter().all(|b| b.abs() < PI));
    }

    #[test]
    fn band_count_mismatch_is_a_dimension_error() {
        let mut store = ParamStore::new(0);
        let net = ModulationNet::new(&mut store, "m", &spec(4, BandInteraction::CrossAttention)).unwrap();
        let mut tape = Tape::new();
        let desc = tape.constant(Tensor::zeros(&[1, 3, 5]));
        assert!(matches!(net.forward(&mut tape, &store, desc), Err(Error::Dimension(_))));
    }

    #[test]
    fn descriptors_match_plain_computation() {
        let mut tape = Tape::new();
        let vals = Tensor::from_fn(&[2, 3, 7], |i| ((i * 13) % 17) as f64 * 0.3);
        let mag = tape.constant(vals.clone());
        let bounds = [0, 3, 7];
        let d = descriptors(&mut tape, mag, &bounds, DescriptorSubset::Full).unwrap();
        assert_eq!(tape.shape(d), &[2, 2, 5]);
        let got = tape.value(d).data();
        for b in 0..2 {
            for (m, seg) in bounds.windows(2).enumerate() {
                let vals = &vals;
                let pooled: Vec<f64> = (0..3).flat_map(|r| (seg[0]..seg[1]).map(move |j| vals.at(&[b, r, j]))).collect();
                let expect = crate::spectral::band_descriptor(&pooled, seg[1] - seg[0]);
                for (e, x) in expect.iter().enumerate() {
                    assert!((got[(b * 2 + m) * 5 + e] - x).abs() < 1e-12);
                }
            }
        }
    }
}
