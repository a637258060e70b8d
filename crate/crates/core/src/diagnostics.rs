//! Finite-difference gradient checks of the model building blocks at small sizes.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{AlignModule, EncoderConfig, Model};
use crate::error::{Error, Result};
use crate::fbam::{Fbam, FbamConfig};
use crate::numcore::{grad_check, GradCheckOptions, GradCheckReport, ParamStore, Tensor};
use crate::pce::Mode;
use crate::scln::Scln;
use crate::tsam::{Tsam, TsamConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    Fbam,
    Tsam,
    Scln,
    Encoder,
}

impl GradTarget {
    pub const ALL: [GradTarget; 4] = [GradTarget::Fbam, GradTarget::Tsam, GradTarget::Scln, GradTarget::Encoder];

    /// Pass threshold: blocks are checked at 1e-4, the whole encoder at 1e-3.
    pub fn tolerance(self) -> f64 {
        match self {
            GradTarget::Encoder => 1e-3,
            _ => 1e-4,
        }
    }
}

impl FromStr for GradTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbam" => Ok(GradTarget::Fbam),
            "tsam" => Ok(GradTarget::Tsam),
            "scln" => Ok(GradTarget::Scln),
            "encoder" => Ok(GradTarget::Encoder),
            other => Err(Error::config(format!("unknown module '{other}' (fbam, tsam, scln, encoder)"))),
        }
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Adds uniform noise to every parameter whose name does not start with `skip`,
/// so zero-initialized heads carry gradient too.
fn jitter(store: &mut ParamStore, amount: f64, skip: Option<&str>, rng: &mut ChaCha8Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        if skip.is_some_and(|p| store.name(id).starts_with(p)) {
            continue;
        }
        for v in store.value_mut(id).data_mut() {
            *v += rng.random_range(-amount..amount);
        }
    }
}

/// Checks analytic against central-difference gradients of a random linear
/// read-out of `target`, including the gradient with respect to its input.
pub fn gradcheck(target: GradTarget, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = GradCheckOptions { tol: target.tolerance(), ..GradCheckOptions::default() };
    let mut store = ParamStore::new(seed);
    match target {
        GradTarget::Fbam => {
            let cfg = FbamConfig { bands: 3, token_dim: 8, ..FbamConfig::default() };
            let block = Fbam::new(&mut store, "fbam", &cfg, 16, 3, 0)?;
            jitter(&mut store, 0.3, None, &mut rng);
            let xid = store.insert("input", random(&[2, 16, 3], &mut rng))?;
            let probe = random(&[2, 16, 3], &mut rng);
            grad_check(
                &store,
                |tape, s| {
                    let x = tape.param(s, xid);
                    let y = block.forward(tape, s, x)?;
                    let w = tape.constant(probe.clone());
                    let y = tape.mul(y, w)?;
                    tape.sum_all(y)
                },
                &opts,
            )
        }
        GradTarget::Tsam => {
            let cfg = TsamConfig { segments: 3, token_dim: 8, ..TsamConfig::default() };
            let block = Tsam::new(&mut store, "tsam", &cfg, 16, 3)?;
            jitter(&mut store, 0.3, None, &mut rng);
            let xid = store.insert("input", random(&[2, 16, 3], &mut rng))?;
            let probe = random(&[2, 16, 3], &mut rng);
            grad_check(
                &store,
                |tape, s| {
                    let x = tape.param(s, xid);
                    let y = block.forward(tape, s, x)?;
                    let w = tape.constant(probe.clone());
                    let y = tape.mul(y, w)?;
                    tape.sum_all(y)
                },
                &opts,
            )
        }
        GradTarget::Scln => {
            let block = Scln::new(&mut store, "scln", 4, 0.3)?;
            jitter(&mut store, 0.3, None, &mut rng);
            let x = random(&[2, 6, 4], &mut rng);
            let xid = store.insert("input", x.clone())?;
            let probe = random(&[2, 6, 4], &mut rng);
            // statistics come from a frozen copy: the conditioning branch is gradient-blocked
            grad_check(
                &store,
                |tape, s| {
                    let h = tape.param(s, xid);
                    let frozen = tape.constant(x.clone());
                    let y = block.forward_branches(tape, s, h, frozen)?;
                    let w = tape.constant(probe.clone());
                    let y = tape.mul(y, w)?;
                    tape.sum_all(y)
                },
                &opts,
            )
        }
        GradTarget::Encoder => {
            let cfg = EncoderConfig {
                input_channels: 2,
                seq_len: 16,
                num_classes: 3,
                layers: 2,
                model_dim: 8,
                ffn_dim: 16,
                heads: 2,
                align_module: AlignModule::Fbam,
                fbam: FbamConfig { bands: 2, token_dim: 8, ..FbamConfig::default() },
                scln_alpha: 0.2,
                augmentations: vec![],
                ..EncoderConfig::default()
            };
            let mut model = Model::new(&cfg, seed)?;
            // the conditioning output layer stays at zero so the blocked
            // statistics path has no first-order effect on the differences
            jitter(&mut model.store, 0.1, Some("scln.mlp.fc2"), &mut rng);
            let x = random(&[2, 16, 2], &mut rng);
            let labels = [0usize, 2];
            let encoder = model.encoder.clone();
            grad_check(
                &model.store,
                |tape, s| {
                    let xv = tape.constant(x.clone());
                    let out = encoder.forward(tape, s, xv, Mode::Eval)?;
                    tape.cross_entropy(out.logits, &labels)
                },
                &GradCheckOptions { max_entries: Some(6), ..opts },
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_target_passes() {
        for t in GradTarget::ALL {
            let r = gradcheck(t, 3).unwrap();
            assert!(r.passed, "{t:?}: {}", r.summary());
        }
    }

    #[test]
    fn names_parse() {
        assert_eq!("scln".parse::<GradTarget>().unwrap(), GradTarget::Scln);
        assert!("lstm".parse::<GradTarget>().is_err());
    }
}
