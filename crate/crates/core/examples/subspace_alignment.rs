//! A complex modulation of one Fourier bin is a scaled rotation of its 2-D
//! real plane, and any non-zero bin can be moved onto any target.

use rustfft::num_complex::Complex64;
use specdrift::fbam::{align_to, subspace_align_demo};

fn main() -> specdrift::Result<()> {
    let z = Complex64::new(0.8, -0.3);
    let demo = subspace_align_demo(z, 1.5, 0.7);
    println!("u z              = {:.6}", demo.modulated);
    println!("r R(delta) [z]   = [{:.6}, {:.6}]", demo.matrix_action[0], demo.matrix_action[1]);
    println!("matrix           = {:?}", demo.matrix);

    let target = Complex64::new(-2.0, 1.0);
    let (u, aligned) = align_to(z, target)?;
    println!("\nalign {z} onto {target}: u = {u:.6} (|u| = {:.4}, arg = {:.4})", u.norm(), u.arg());
    println!("u z = {aligned:.12}");
    Ok(())
}
