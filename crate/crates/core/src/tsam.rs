//! Time-domain counterpart of the frequency alignment block: the same
//! descriptor network drives a residual dynamic convolution over uniform
//! temporal segments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbam::{descriptors, BandInteraction, FbamConfig, ModulationNet, ModulationSpec, ModulationVars, ThirdHead};
use crate::numcore::{ParamStore, Tape, Var};
use crate::spectral::DescriptorSubset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsamConfig {
    pub segments: usize,
    pub kernel_size: usize,
    pub token_dim: usize,
}

impl Default for TsamConfig {
    fn default() -> Self {
        TsamConfig { segments: 6, kernel_size: 3, token_dim: 64 }
    }
}

impl From<&FbamConfig> for TsamConfig {
    fn from(c: &FbamConfig) -> Self {
        TsamConfig { segments: c.bands, kernel_size: c.kernel_size, token_dim: c.token_dim }
    }
}

/// `M + 1` offsets splitting `0..length` into `m` contiguous segments, earlier
/// segments taking the remainder.
pub fn segment_bounds(length: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > length {
        return Err(Error::config(format!("cannot split length {length} into {m} segments")));
    }
    let mut bounds = vec![0];
    let mut at = 0;
    for i in 0..m {
        at += length / m + usize::from(i < length % m);
        bounds.push(at);
    }
    Ok(bounds)
}

#[derive(Clone, Debug)]
pub struct Tsam {
    bounds: Vec<usize>,
    length: usize,
    channels: usize,
    net: ModulationNet,
}

impl Tsam {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &TsamConfig, length: usize, channels: usize) -> Result<Self> {
        let bounds = segment_bounds(length, cfg.segments)?;
        let net = ModulationNet::new(
            store,
            name,
            &ModulationSpec {
                bands: cfg.segments,
                desc_dim: DescriptorSubset::Full.len(),
                token_dim: cfg.token_dim,
                kernel_size: cfg.kernel_size,
                interaction: BandInteraction::CrossAttention,
                static_modulation: false,
                third: ThirdHead::Bias,
            },
        )?;
        Ok(Tsam { bounds, length, channels, net })
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        Ok(self.forward_with_modulation(tape, store, x)?.0)
    }

    pub fn forward_with_modulation(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<(Var, ModulationVars)> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != self.length || shape[2] != self.channels {
            return Err(Error::dim(format!("alignment block expects [B, {}, {}], got {shape:?}", self.length, self.channels)));
        }
        let xt = tape.permute(x, &[0, 2, 1])?;
        let mag = tape.abs(xt)?;
        let desc = descriptors(tape, mag, &self.bounds, DescriptorSubset::Full)?;
        let mods = self.net.forward(tape, store, desc)?;

        let seg_of: Vec<usize> = self.bounds.windows(2).enumerate().flat_map(|(m, w)| std::iter::repeat_n(m, w[1] - w[0])).collect();
        let expand = |tape: &mut Tape, v: Var| -> Result<Var> {
            let lead = tape.shape(v)[0];
            let e = tape.index_select(v, 1, &seg_of)?;
            tape.reshape(e, &[lead, 1, seg_of.len()])
        };
        let conv = tape.segment_conv(xt, mods.kernel, &self.bounds)?;
        let g = expand(tape, mods.gain)?;
        let bias = expand(tape, mods.third)?;
        let delta = tape.sub(conv, xt)?;
        let delta = tape.mul(delta, g)?;
        let y = tape.add(xt, delta)?;
        let y = tape.add(y, bias)?;
        Ok((tape.permute(y, &[0, 2, 1])?, mods))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, GradCheckOptions, Tensor};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn cfg() -> TsamConfig {
        TsamConfig { segments: 3, kernel_size: 3, token_dim: 8 }
    }

    #[test]
    fn identity_at_init() {
        let mut store = ParamStore::new(1);
        let block = Tsam::new(&mut store, "tsam", &cfg(), 20, 4).unwrap();
        let x = random_tensor(&[2, 20, 4], 3);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = block.forward(&mut tape, &store, xv).unwrap();
        assert!(tape.value(y).max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn single_segment_is_a_global_dynamic_conv() {
        let mut store = ParamStore::new(1);
        let block = Tsam::new(&mut store, "tsam", &TsamConfig { segments: 1, ..cfg() }, 6, 1).unwrap();
        let g = store.id("tsam.head_g.fc2.bias").unwrap();
        store.value_mut(g).data_mut()[0] = 100.0; // tanh saturates to 1
        let x = Tensor::new(vec![1, 6, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = block.forward(&mut tape, &store, xv).unwrap();
        let expect = [4.0 / 3.0, 2.0, 3.0, 4.0, 5.0, 17.0 / 3.0];
        for (o, e) in tape.value(y).data().iter().zip(expect) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut store = ParamStore::new(2);
        let block = Tsam::new(&mut store, "tsam", &cfg(), 16, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.value_mut(id).data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let xid = store.insert("x", random_tensor(&[2, 16, 2], 6)).unwrap();
        let probe = random_tensor(&[2, 16, 2], 7);
        let report = grad_check(
            &store,
            |tape, s| {
                let xv = tape.param(s, xid);
                let y = block.forward(tape, s, xv)?;
                let w = tape.constant(probe.clone());
                let y = tape.mul(y, w)?;
                tape.sum_all(y)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed, "{}", report.summary());
    }

    #[test]
    fn too_many_segments_is_a_config_error() {
        let mut store = ParamStore::new(0);
        assert!(matches!(Tsam::new(&mut store, "t", &TsamConfig { segments: 9, ..cfg() }, 8, 1), Err(Error::Config(_))));
    }

    #[test]
    fn remainder_goes_to_early_segments() {
        assert_eq!(segment_bounds(10, 3).unwrap(), vec![0, 4, 7, 10]);
    }

    proptest! {
        #[test]
        fn segments_cover_and_are_disjoint(t in 1usize..300, m_seed in 1usize..64) {
            let m = 1 + m_seed % t;
            let b = segment_bounds(t, m).unwrap();
            prop_assert_eq!(b.len(), m + 1);
            prop_assert_eq!(b[0], 0);
            prop_assert_eq!(b[m], t);
            prop_assert!(b.windows(2).all(|w| w[1] > w[0]));
            let sizes: Vec<usize> = b.windows(2).map(|w| w[1] - w[0]).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
