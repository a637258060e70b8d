//! Single-bin view of the modulation: multiplying a Fourier coefficient by
//! `u = r e^{j delta}` is a scaled rotation of its `[re, im]` plane.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignDemo {
    /// `u * z` computed in complex arithmetic.
    pub modulated: Complex64,
    /// `r R(delta) [re z, im z]^T` computed as a 2x2 matrix product.
    pub matrix_action: [f64; 2],
    /// The 2x2 matrix `r R(delta)`, row-major.
    pub matrix: [[f64; 2]; 2],
}

/// `r R(delta)` as a row-major 2x2 matrix.
pub fn rotation_action(r: f64, delta: f64) -> [[f64; 2]; 2] {
    let (s, c) = delta.sin_cos();
    [[r * c, -r * s], [r * s, r * c]]
}

pub fn subspace_align_demo(z: Complex64, r: f64, delta: f64) -> AlignDemo {
    let u = Complex64::from_polar(r, delta);
    let m = rotation_action(r, delta);
    AlignDemo { modulated: u * z, matrix_action: [m[0][0] * z.re + m[0][1] * z.im, m[1][0] * z.re + m[1][1] * z.im], matrix: m }
}

/// The modulation `u = target / z` and the aligned coefficient `u * z`.
pub fn align_to(z: Complex64, target: Complex64) -> Result<(Complex64, Complex64)> {
    if z.norm() == 0.0 {
        return Err(Error::Validation("cannot align a zero-magnitude bin".into()));
    }
    let u = target / z;
    Ok((u, u * z))
}
