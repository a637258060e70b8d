//! Adam with bias correction over every parameter of a store.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0 && self.lr.is_finite() && unit(self.beta1) && unit(self.beta2) && self.eps > 0.0) {
            return Err(Error::config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.value(id).len()]).collect();
        Adam { cfg, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients and clears them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for id in store.ids().collect::<Vec<_>>() {
            let g = store.grad(id).data().to_vec();
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient for '{}'", store.name(id))));
            }
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            for (((w, gi), mi), vi) in store.value_mut(id).data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        store.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Init, Tape};

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut store = ParamStore::new(0);
        let id = store.add("w", &[2], Init::Constant(1.0)).unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&store, id);
        let c = tape.constant(crate::numcore::Tensor::from_vec(vec![3.0, -0.5]));
        let y = tape.mul(w, c).unwrap();
        let y = tape.sum_all(y).unwrap();
        let g = tape.backward(y).unwrap();
        store.accumulate(&tape, &g);
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &store);
        opt.step(&mut store).unwrap();
        let v = store.value(id).data();
        assert!((v[0] - 0.9).abs() < 1e-6 && (v[1] - 1.1).abs() < 1e-6);
        assert!(store.grad(id).data().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn zero_gradient_leaves_values() {
        let mut store = ParamStore::new(0);
        let id = store.add("w", &[3], Init::Normal(1.0)).unwrap();
        let before = store.value(id).clone();
        let mut opt = Adam::new(AdamConfig::default(), &store);
        opt.step(&mut store).unwrap();
        assert_eq!(store.value(id), &before);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::new(0);
        let id = store.add("w", &[1], Init::Constant(5.0)).unwrap();
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &store);
        for _ in 0..500 {
            let mut tape = Tape::new();
            let w = tape.param(&store, id);
            let d = tape.add_scalar(w, -2.0).unwrap();
            let y = tape.square(d).unwrap();
            let y = tape.sum_all(y).unwrap();
            let g = tape.backward(y).unwrap();
            store.accumulate(&tape, &g);
            opt.step(&mut store).unwrap();
        }
        assert!((store.value(id).data()[0] - 2.0).abs() < 1e-2);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(AdamConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig::default().validate().is_ok());
    }
}
