//! Frequency-band alignment: per-band magnitude smoothing with a residual gain
//! and per-band phase rotation, both predicted from band descriptors.

pub mod modulation;
pub mod subspace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Init, ParamId, ParamStore, Tape, Tensor, Var};
use crate::spectral::{BandLayout, DescriptorSubset, EPS};

pub use modulation::{descriptors, BandInteraction, ModulationNet, ModulationParams, ModulationSpec, ModulationVars, ThirdHead};
pub use subspace::{align_to, rotation_action, subspace_align_demo, AlignDemo};

/// Whether magnitude kernels are shared across the batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// Per-sample kernels averaged over the batch (after softmax).
    BatchShared,
    #[default]
    SampleSpecific,
}

/// Which part of the spectrum is modulated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulate {
    Magnitude,
    Phase,
    #[default]
    Both,
}

impl Modulate {
    fn magnitude(self) -> bool {
        matches!(self, Modulate::Magnitude | Modulate::Both)
    }

    fn phase(self) -> bool {
        matches!(self, Modulate::Phase | Modulate::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbamConfig {
    pub bands: usize,
    pub kernel_size: usize,
    pub token_dim: usize,
    pub kernel_mode: KernelMode,
    pub dc_learnable: bool,
    pub magnitude_residual: bool,
    pub static_modulation: bool,
    pub band_interaction: BandInteraction,
    pub modulate: Modulate,
    pub descriptor_subset: DescriptorSubset,
    /// One boundary table per scale; overrides `bands` when present.
    pub custom_boundaries: Option<Vec<Vec<usize>>>,
}

impl Default for FbamConfig {
    fn default() -> Self {
        FbamConfig {
            bands: 6,
            kernel_size: 3,
            token_dim: 64,
            kernel_mode: KernelMode::SampleSpecific,
            dc_learnable: false,
            magnitude_residual: true,
            static_modulation: false,
            band_interaction: BandInteraction::CrossAttention,
            modulate: Modulate::Both,
            descriptor_subset: DescriptorSubset::Full,
            custom_boundaries: None,
        }
    }
}

impl FbamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::config(format!("kernel_size must be odd and positive, got {}", self.kernel_size)));
        }
        if self.bands == 0 || self.token_dim == 0 {
            return Err(Error::config("bands and token_dim must be positive"));
        }
        Ok(())
    }

    /// Band layout for a sequence of `length` at pyramid scale `scale` (0-based).
    pub fn layout(&self, length: usize, scale: usize) -> Result<BandLayout> {
        match &self.custom_boundaries {
            Some(tables) => {
                let table = tables.get(scale).ok_or_else(|| Error::config(format!("no custom band boundaries for scale {}", scale + 1)))?;
                BandLayout::custom(length, table)
            }
            None => BandLayout::uniform(length, self.bands),
        }
    }
}

/// One alignment block for sequences of fixed length and channel count.
#[derive(Clone, Debug)]
pub struct Fbam {
    cfg: FbamConfig,
    layout: BandLayout,
    channels: usize,
    net: ModulationNet,
    dc: Option<(ParamId, ParamId)>,
}

impl Fbam {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &FbamConfig, length: usize, channels: usize, scale: usize) -> Result<Self> {
        cfg.validate()?;
        if length < 4 {
            return Err(Error::config(format!("frequency alignment needs length >= 4, got {length}")));
        }
        let layout = cfg.layout(length, scale)?;
        let net = ModulationNet::new(
            store,
            name,
            &ModulationSpec {
                bands: layout.num_bands(),
                desc_dim: cfg.descriptor_subset.len(),
                token_dim: cfg.token_dim,
                kernel_size: cfg.kernel_size,
                interaction: cfg.band_interaction,
                static_modulation: cfg.static_modulation,
                third: ThirdHead::Phase,
            },
        )?;
        let dc = if cfg.dc_learnable {
            Some((
                store.add(&format!("{name}.dc_gain"), &[1, channels, 1], Init::Zeros)?,
                store.add(&format!("{name}.dc_offset"), &[1, channels, 1], Init::Zeros)?,
            ))
        } else {
            None
        };
        Ok(Fbam { cfg: cfg.clone(), layout, channels, net, dc })
    }

    pub fn layout(&self) -> &BandLayout {
        &self.layout
    }

    pub fn config(&self) -> &FbamConfig {
        &self.cfg
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        Ok(self.forward_with_modulation(tape, store, x)?.0)
    }

    /// Forward pass on `[B, T, D]`, also returning the modulation handles.
    pub fn forward_with_modulation(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<(Var, ModulationVars)> {
        let shape = tape.shape(x).to_vec();
        let t = self.layout.length();
        if shape.len() != 3 || shape[1] != t || shape[2] != self.channels {
            return Err(Error::dim(format!("alignment block expects [B, {t}, {}], got {shape:?}", self.channels)));
        }
        let (b, d) = (shape[0], shape[2]);
        let k = self.layout.num_oscillatory();

        // I: spectrum per channel
        let xt = tape.permute(x, &[0, 2, 1])?;
        let z = tape.rfft(xt)?;
        let re = tape.narrow(z, 3, 0, 1)?;
        let re = tape.reshape(re, &[b, d, k + 1])?;
        let im = tape.narrow(z, 3, 1, 1)?;
        let im = tape.reshape(im, &[b, d, k + 1])?;

        // II: DC aside, polar split of oscillatory bins
        let re_dc = tape.narrow(re, 2, 0, 1)?;
        let im_dc = tape.narrow(im, 2, 0, 1)?;
        let re_o = tape.narrow(re, 2, 1, k)?;
        let im_o = tape.narrow(im, 2, 1, k)?;
        let a = tape.hypot(re_o, im_o)?;
        let a_eps = tape.add_scalar(a, EPS)?;
        let pr = tape.div(re_o, a_eps)?;
        let pi = tape.div(im_o, a_eps)?;

        // III-IV: descriptors and modulation
        let desc = descriptors(tape, a, &self.layout.offsets(), self.cfg.descriptor_subset)?;
        let mods = self.net.forward(tape, store, desc)?;

        // V: magnitude and phase updates
        let a2 = if self.cfg.modulate.magnitude() {
            apply_magnitude(tape, a, &self.layout, mods.kernel, mods.gain, self.cfg.kernel_mode, self.cfg.magnitude_residual)?
        } else {
            a
        };
        let (pr2, pi2) = if self.cfg.modulate.phase() { apply_phase(tape, pr, pi, &self.layout, mods.third)? } else { (pr, pi) };
        let re2 = tape.mul(a2, pr2)?;
        let im2 = tape.mul(a2, pi2)?;

        // VI: recombine with DC and invert
        let re_dc = match self.dc {
            Some((gain, offset)) => {
                let g = tape.param(store, gain);
                let o = tape.param(store, offset);
                let scaled = tape.mul(re_dc, g)?;
                let shifted = tape.add(re_dc, scaled)?;
                tape.add(shifted, o)?
            }
            None => re_dc,
        };
        let re_full = tape.concat(&[re_dc, re2], 2)?;
        let im_full = tape.concat(&[im_dc, im2], 2)?;
        let re_full = tape.reshape(re_full, &[b, d, k + 1, 1])?;
        let im_full = tape.reshape(im_full, &[b, d, k + 1, 1])?;
        let zf = tape.concat(&[re_full, im_full], 3)?;
        let y = tape.irfft(zf, t)?;
        Ok((tape.permute(y, &[0, 2, 1])?, mods))
    }
}

fn per_position(tape: &mut Tape, per_band: Var, index: &[usize]) -> Result<Var> {
    let lead = tape.shape(per_band)[0];
    let v = tape.index_select(per_band, 1, index)?;
    tape.reshape(v, &[lead, 1, index.len()])
}

/// Residual band-wise smoothing of magnitudes `a` (`[B, D, K]`).
///
/// `kernel` is `[B|1, M, r]`, `gain` is `[B|1, M]`. In batch-shared mode the
/// kernels are averaged over the batch first.
pub fn apply_magnitude(tape: &mut Tape, a: Var, layout: &BandLayout, kernel: Var, gain: Var, mode: KernelMode, residual: bool) -> Result<Var> {
    let kernel = match mode {
        KernelMode::BatchShared if tape.shape(kernel)[0] > 1 => tape.mean(kernel, 0)?,
        _ => kernel,
    };
    let conv = tape.segment_conv(a, kernel, &layout.offsets())?;
    let out = if residual {
        let g = per_position(tape, gain, &layout.band_of_position())?;
        let delta = tape.sub(conv, a)?;
        let delta = tape.mul(delta, g)?;
        tape.add(a, delta)?
    } else {
        conv
    };
    tape.clamp_min_zero(out)
}

/// Band-wise rotation of unit phases `(pr, pi)` (`[B, D, K]` each) by `beta`
/// (`[B|1, M]`), renormalized. The Nyquist bin of an even length is not rotated.
pub fn apply_phase(tape: &mut Tape, pr: Var, pi: Var, layout: &BandLayout, beta: Var) -> Result<(Var, Var)> {
    let mut angle = per_position(tape, beta, &layout.band_of_position())?;
    if layout.nyquist_present() {
        let k = layout.num_oscillatory();
        let mask = tape.constant(Tensor::from_fn(&[k], |i| if i + 1 == k { 0.0 } else { 1.0 }));
        angle = tape.mul(angle, mask)?;
    }
    let c = tape.cos(angle)?;
    let s = tape.sin(angle)?;
    let rc = tape.mul(pr, c)?;
    let is = tape.mul(pi, s)?;
    let rs = tape.mul(pr, s)?;
    let ic = tape.mul(pi, c)?;
    let re = tape.sub(rc, is)?;
    let im = tape.add(rs, ic)?;
    let norm = tape.hypot(re, im)?;
    let norm = tape.add_scalar(norm, EPS)?;
    Ok((tape.div(re, norm)?, tape.div(im, norm)?))
}
