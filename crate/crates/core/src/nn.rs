//! Small layers shared by the model modules.

use crate::error::{Error, Result};
use crate::numcore::{Init, ParamId, ParamStore, Tape, Tensor, Var};

/// Affine map over the last axis: `x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        let weight = store.add(&format!("{name}.weight"), &[fan_in, fan_out], Init::XavierUniform { fan_in, fan_out })?;
        let bias = store.add(&format!("{name}.bias"), &[fan_out], Init::Zeros)?;
        Ok(Linear { weight, bias, fan_in, fan_out })
    }

    /// Weights and bias start at zero.
    pub fn zeros(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        let weight = store.add(&format!("{name}.weight"), &[fan_in, fan_out], Init::Zeros)?;
        let bias = store.add(&format!("{name}.bias"), &[fan_out], Init::Zeros)?;
        Ok(Linear { weight, bias, fan_in, fan_out })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let last = *tape.shape(x).last().unwrap_or(&0);
        if last != self.fan_in {
            return Err(Error::dim(format!("linear expects {} inputs, got {:?}", self.fan_in, tape.shape(x))));
        }
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }
}

/// Layer normalization over the last axis with learnable scale and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.add(&format!("{name}.gamma"), &[dim], Init::Ones)?,
            beta: store.add(&format!("{name}.beta"), &[dim], Init::Zeros)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let axis = tape.shape(x).len() - 1;
        let y = tape.layer_norm(x, axis, self.eps)?;
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        let y = tape.mul(y, g)?;
        tape.add(y, b)
    }
}

/// `Linear -> GELU -> Linear`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, output: usize) -> Result<Self> {
        Ok(Mlp { hidden: Linear::new(store, &format!("{name}.fc1"), input, hidden)?, out: Linear::new(store, &format!("{name}.fc2"), hidden, output)? })
    }

    /// Same as [`Mlp::new`] but the output layer starts at zero.
    pub fn zero_output(store: &mut ParamStore, name: &str, input: usize, hidden: usize, output: usize) -> Result<Self> {
        Ok(Mlp { hidden: Linear::new(store, &format!("{name}.fc1"), input, hidden)?, out: Linear::zeros(store, &format!("{name}.fc2"), hidden, output)? })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, store, x)?;
        let h = tape.gelu(h)?;
        self.out.forward(tape, store, h)
    }
}

/// Scaled dot-product attention. `q` is `[.., Lq, d]` (or a shared `[Lq, d]`),
/// `k` and `v` are `[.., Lk, d]`.
pub fn attention(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    let d = *tape.shape(k).last().unwrap_or(&1);
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt())?;
    let axis = tape.shape(scores).len() - 1;
    let weights = tape.softmax(scores, axis)?;
    tape.matmul(weights, v)
}

/// Multi-head self-attention over `[B, T, D]`.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::config(format!("model dim {dim} is not divisible by {heads} heads")));
        }
        Ok(MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), dim, dim)?,
            k: Linear::new(store, &format!("{name}.k"), dim, dim)?,
            v: Linear::new(store, &format!("{name}.v"), dim, dim)?,
            o: Linear::new(store, &format!("{name}.o"), dim, dim)?,
            heads,
            dim,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let (b, t) = (shape[0], shape[1]);
        let (h, dh) = (self.heads, self.dim / self.heads);
        let split = |tape: &mut Tape, lin: &Linear| -> Result<Var> {
            let y = lin.forward(tape, store, x)?;
            let y = tape.reshape(y, &[b, t, h, dh])?;
            tape.permute(y, &[0, 2, 1, 3])
        };
        let q = split(tape, &self.q)?;
        let k = split(tape, &self.k)?;
        let v = split(tape, &self.v)?;
        let ctx = attention(tape, q, k, v)?;
        let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = tape.reshape(ctx, &[b, t, self.dim])?;
        self.o.forward(tape, store, ctx)
    }
}

/// Fixed sinusoidal position table `[length, dim]`.
pub fn sinusoidal_positions(length: usize, dim: usize) -> Tensor {
    Tensor::from_fn(&[length, dim], |i| {
        let (pos, j) = (i / dim, i % dim);
        let rate = 1.0 / 10000f64.powf((2 * (j / 2)) as f64 / dim as f64);
        let angle = pos as f64 * rate;
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_over_one_key_returns_its_value() {
        let mut tape = Tape::new();
        let q = tape.leaf(Tensor::new(vec![3, 4], (0..12).map(|i| i as f64).collect()).unwrap()).unwrap();
        let k = tape.leaf(Tensor::new(vec![2, 1, 4], vec![0.3; 8]).unwrap()).unwrap();
        let v = tape.leaf(Tensor::new(vec![2, 1, 4], (0..8).map(|i| i as f64).collect()).unwrap()).unwrap();
        let o = attention(&mut tape, q, k, v).unwrap();
        assert_eq!(tape.shape(o), &[2, 3, 4]);
        let out = tape.value(o).data();
        for b in 0..2 {
            for m in 0..3 {
                for j in 0..4 {
                    assert!((out[(b * 3 + m) * 4 + j] - (b * 4 + j) as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mha_rejects_indivisible_heads() {
        let mut s = ParamStore::new(0);
        assert!(MultiHeadAttention::new(&mut s, "a", 10, 4).is_err());
    }

    #[test]
    fn positions_start_with_sin_cos() {
        let p = sinusoidal_positions(3, 4);
        assert_eq!(p.at(&[0, 0]), 0.0);
        assert_eq!(p.at(&[0, 1]), 1.0);
        assert!((p.at(&[1, 0]) - 1f64.sin()).abs() < 1e-15);
    }
}
