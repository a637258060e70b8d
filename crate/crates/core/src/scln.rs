//! Sample-conditional layer normalization: plain layer norm blended with a
//! scale/shift predicted from the gradient-blocked temporal mean.

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::numcore::{ParamStore, Tape, Var};

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Scln {
    mlp: Mlp,
    dim: usize,
    alpha: f64,
}

impl Scln {
    /// `alpha` is a fixed blend weight in `[0, 1]`, not a parameter.
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!("scln alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Scln { mlp: Mlp::zero_output(store, &format!("{name}.mlp"), dim, dim, 2 * dim)?, dim, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        self.forward_branches(tape, store, h, h)
    }

    /// Normalizes `h` while conditioning on `stats_src`; [`Scln::forward`]
    /// passes the same node twice. Splitting them lets callers probe the
    /// statistics branch on its own.
    pub fn forward_branches(&self, tape: &mut Tape, store: &ParamStore, h: Var, stats_src: Var) -> Result<Var> {
        let shape = tape.shape(h).to_vec();
        if shape.len() != 3 || shape[2] != self.dim {
            return Err(Error::dim(format!("scln expects [B, T, {}], got {shape:?}", self.dim)));
        }
        let hhat = tape.layer_norm(h, 2, LN_EPS)?;
        let stats = tape.mean(stats_src, 1)?;
        let stats = tape.stopgrad(stats);
        let gb = self.mlp.forward(tape, store, stats)?;
        let raw_gamma = tape.narrow(gb, 2, 0, self.dim)?;
        let gamma = tape.add_scalar(raw_gamma, 1.0)?;
        let beta = tape.narrow(gb, 2, self.dim, self.dim)?;
        blend(tape, hhat, gamma, beta, self.alpha)
    }
}

/// `(1 - alpha) hhat + alpha (gamma * hhat + beta)`.
pub fn blend(tape: &mut Tape, hhat: Var, gamma: Var, beta: Var, alpha: f64) -> Result<Var> {
    let modulated = tape.mul(gamma, hhat)?;
    let modulated = tape.add(modulated, beta)?;
    let a = tape.scale(hhat, 1.0 - alpha)?;
    let b = tape.scale(modulated, alpha)?;
    tape.add(a, b)
}
