//! Real-input discrete Fourier transforms over the last axis.
//!
//! Forward transforms are unnormalized; inverse transforms carry the `1/T`
//! factor. Complex values on the tape are stored interleaved as a trailing
//! axis of extent 2 (`[..., K, 2]`, real part first).

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::tensor::Tensor;
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Number of non-redundant bins of a length-`n` real transform.
pub fn rfft_bins(n: usize) -> usize {
    n / 2 + 1
}

/// Complex array with split real and imaginary buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if re.len() != n || im.len() != n {
            return Err(Error::dim(format!("complex shape {:?} needs {} values, got re={} im={}", shape, n, re.len(), im.len())));
        }
        Ok(ComplexTensor { shape, re, im })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn get(&self, flat: usize) -> Complex64 {
        Complex64::new(self.re[flat], self.im[flat])
    }

    /// Interleaved `[..., 2]` real tensor, the layout used on the tape.
    pub fn to_interleaved(&self) -> Tensor {
        let mut shape = self.shape.clone();
        shape.push(2);
        let mut data = Vec::with_capacity(self.re.len() * 2);
        for (r, i) in self.re.iter().zip(&self.im) {
            data.push(*r);
            data.push(*i);
        }
        Tensor::new(shape, data).expect("interleaved layout")
    }

    pub fn from_interleaved(t: &Tensor) -> Result<Self> {
        let shape = t.shape();
        if shape.last() != Some(&2) {
            return Err(Error::dim(format!("interleaved complex needs trailing axis 2, got {shape:?}")));
        }
        let data = t.data();
        let re = data.iter().step_by(2).copied().collect();
        let im = data.iter().skip(1).step_by(2).copied().collect();
        ComplexTensor::new(shape[..shape.len() - 1].to_vec(), re, im)
    }
}

/// Forward transform of every row of length `n`; output interleaved `[rows, n/2+1, 2]`.
pub(crate) fn rfft_rows(x: &[f64], n: usize) -> Vec<f64> {
    let rows = x.len() / n;
    let k = rfft_bins(n);
    let fft = plan(n, false);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(rows * k * 2);
    for row in x.chunks_exact(n) {
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = Complex64::new(v, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for c in &buf[..k] {
            out.push(c.re);
            out.push(c.im);
        }
    }
    out
}

/// Adjoint of [`rfft_rows`]: maps interleaved bin gradients back to the signal.
pub(crate) fn rfft_adjoint_rows(g: &[f64], n: usize) -> Vec<f64> {
    let k = rfft_bins(n);
    let rows = g.len() / (2 * k);
    let fft = plan(n, true);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(rows * n);
    for row in g.chunks_exact(2 * k) {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (j, pair) in row.chunks_exact(2).enumerate() {
            buf[j] = Complex64::new(pair[0], pair[1]);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend(buf.iter().map(|c| c.re));
    }
    out
}

/// Inverse transform of interleaved `[rows, n/2+1, 2]` bins to real rows of length `n`.
///
/// Imaginary parts of the DC bin and (for even `n`) the Nyquist bin are discarded.
pub(crate) fn irfft_rows(z: &[f64], n: usize) -> Vec<f64> {
    let k = rfft_bins(n);
    let rows = z.len() / (2 * k);
    let fft = plan(n, true);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let scale = 1.0 / n as f64;
    let mut out = Vec::with_capacity(rows * n);
    for row in z.chunks_exact(2 * k) {
        buf[0] = Complex64::new(row[0], 0.0);
        for j in 1..k {
            let c = Complex64::new(row[2 * j], row[2 * j + 1]);
            if 2 * j == n {
                buf[j] = Complex64::new(c.re, 0.0);
            } else {
                buf[j] = c;
                buf[n - j] = c.conj();
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend(buf.iter().map(|c| c.re * scale));
    }
    out
}

/// Adjoint of [`irfft_rows`].
pub(crate) fn irfft_adjoint_rows(g: &[f64], n: usize) -> Vec<f64> {
    let k = rfft_bins(n);
    let f = rfft_rows(g, n);
    let mut out = f;
    let scale = 1.0 / n as f64;
    for row in out.chunks_exact_mut(2 * k) {
        for j in 0..k {
            let edge = j == 0 || 2 * j == n;
            let c = if edge { scale } else { 2.0 * scale };
            row[2 * j] *= c;
            row[2 * j + 1] = if edge { 0.0 } else { row[2 * j + 1] * c };
        }
    }
    out
}

/// Unnormalized real FFT along the last axis.
pub fn rfft(x: &Tensor) -> Result<ComplexTensor> {
    let n = *x.shape().last().ok_or_else(|| Error::dim("rfft of a scalar"))?;
    if n < 2 {
        return Err(Error::dim(format!("rfft needs length >= 2, got {n}")));
    }
    let inter = rfft_rows(x.data(), n);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = rfft_bins(n);
    shape.push(2);
    ComplexTensor::from_interleaved(&Tensor::new(shape, inter)?)
}

/// Inverse real FFT along the last axis producing length-`n` rows.
pub fn irfft(z: &ComplexTensor, n: usize) -> Result<Tensor> {
    let bins = *z.shape().last().ok_or_else(|| Error::dim("irfft of a scalar"))?;
    if n < 2 || bins != rfft_bins(n) {
        return Err(Error::dim(format!("irfft to length {n} needs {} bins, got {bins}", rfft_bins(n))));
    }
    let out = irfft_rows(z.to_interleaved().data(), n);
    let mut shape = z.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Tensor::new(shape, out)
}
