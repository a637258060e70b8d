//! Central finite-difference verification of tape gradients.

use serde::Serialize;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub h: f64,
    /// Pass threshold on the largest per-parameter relative error.
    pub tol: f64,
    /// Check at most this many evenly spaced entries of each parameter.
    pub max_entries: Option<usize>,
    /// Lower bound on the relative-error denominator, so parameters whose
    /// true gradient is zero are judged by finite-difference noise alone.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { h: 1e-5, tol: 1e-4, max_entries: None, floor: 1e-5 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_abs_analytic: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn summary(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} max_rel_err={:.3e} (tol {:.0e})", self.max_rel_err, self.tol)
    }
}

fn eval(store: &ParamStore, f: &impl Fn(&mut Tape, &ParamStore) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::inference();
    let out = f(&mut tape, store)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(Error::dim(format!("grad_check objective must be scalar, got {:?}", v.shape())));
    }
    let y = v.data()[0];
    if !y.is_finite() {
        return Err(Error::Numeric("grad_check objective is not finite".into()));
    }
    Ok(y)
}

/// Compares analytic gradients of the scalar `f` against central differences
/// for every parameter in `store`.
///
/// The relative error of a parameter is `|a - n|_inf / max(|a|_inf, |n|_inf, floor)`
/// over its checked entries.
pub fn grad_check(store: &ParamStore, f: impl Fn(&mut Tape, &ParamStore) -> Result<Var>, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let grads = tape.backward(out)?;
    let mut scratch = store.clone();
    scratch.zero_grads();
    scratch.accumulate(&tape, &grads);

    let mut params = Vec::new();
    let mut max_rel_err: f64 = 0.0;
    for id in store.ids() {
        let analytic = scratch.grad(id).clone();
        let n = analytic.len();
        let picks: Vec<usize> = match opts.max_entries {
            Some(k) if k < n => (0..k).map(|i| i * n / k).collect(),
            _ => (0..n).collect(),
        };
        let mut diff: f64 = 0.0;
        let mut scale_a: f64 = 0.0;
        let mut scale_n: f64 = 0.0;
        for &i in &picks {
            let orig = store.value(id).data()[i];
            scratch.value_mut(id).data_mut()[i] = orig + opts.h;
            let up = eval(&scratch, &f)?;
            scratch.value_mut(id).data_mut()[i] = orig - opts.h;
            let down = eval(&scratch, &f)?;
            scratch.value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * opts.h);
            let a = analytic.data()[i];
            diff = diff.max((a - numeric).abs());
            scale_a = scale_a.max(a.abs());
            scale_n = scale_n.max(numeric.abs());
        }
        let rel = diff / scale_a.max(scale_n).max(opts.floor);
        max_rel_err = max_rel_err.max(rel);
        params.push(ParamCheck { name: store.name(id).to_string(), checked: picks.len(), max_abs_analytic: scale_a, rel_err: rel });
    }
    Ok(GradCheckReport { params, max_rel_err, tol: opts.tol, passed: max_rel_err < opts.tol })
}

/// Convenience wrapper checking gradients with respect to plain input tensors.
pub fn grad_check_inputs(inputs: &[(&str, Tensor)], f: impl Fn(&mut Tape, &[Var]) -> Result<Var>, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut store = ParamStore::new(0);
    let mut ids = Vec::new();
    for (name, t) in inputs {
        ids.push(store.insert(name, t.clone())?);
    }
    grad_check(
        &store,
        |tape, s| {
            let vars: Vec<Var> = ids.iter().map(|&id| tape.param(s, id)).collect();
            f(tape, &vars)
        },
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let r = grad_check_inputs(&[("x", Tensor::scalar(3.0))], |t, v| t.mul(v[0], v[0]), &GradCheckOptions::default()).unwrap();
        assert!(r.passed, "{}", r.summary());
        assert!((r.params[0].max_abs_analytic - 6.0).abs() < 1e-12);
    }

    #[test]
    fn stopgrad_branch_has_zero_gradient() {
        let r = grad_check_inputs(
            &[("x", Tensor::from_vec(vec![0.5, -1.5]))],
            |t, v| {
                let s = t.stopgrad(v[0]);
                let y = t.square(s)?;
                t.sum_all(y)
            },
            &GradCheckOptions::default(),
        );
        // numeric derivative is nonzero (the value does depend on x) while analytic is exactly 0
        let r = r.unwrap();
        assert_eq!(r.params[0].max_abs_analytic, 0.0);
        assert!(!r.passed);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let r = grad_check_inputs(&[("x", Tensor::scalar(0.0))], |t, v| t.log(v[0]), &GradCheckOptions::default());
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
