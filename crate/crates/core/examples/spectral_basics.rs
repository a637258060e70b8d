//! Real FFT round trip, Parseval's identity and the band layout used by the
//! alignment blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specdrift::numcore::{irfft, rfft, Tensor};
use specdrift::spectral::BandLayout;

fn main() -> specdrift::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for t in [15, 16, 128] {
        let x = Tensor::from_fn(&[t], |_| rng.random_range(-1.0..1.0));
        let z = rfft(&x)?;
        let back = irfft(&z, t)?;
        let time_energy: f64 = x.data().iter().map(|v| v * v).sum();
        // one-sided spectrum: interior bins stand for a conjugate pair
        let mut freq_energy = 0.0;
        for k in 0..z.shape()[0] {
            let w = if k == 0 || (t % 2 == 0 && k == t / 2) { 1.0 } else { 2.0 };
            freq_energy += w * z.get(k).norm_sqr() / t as f64;
        }
        println!("T={t:3}  round trip err {:.2e}  parseval gap {:.2e}", back.max_abs_diff(&x), (time_energy - freq_energy).abs());
    }

    let layout = BandLayout::uniform(128, 6)?;
    println!("\n6 bands over T=128 (oscillatory bins 1..=64):");
    for m in 0..layout.num_bands() {
        let r = layout.band(m);
        println!("  band {m}: bins {}..{}", r.start, r.end);
    }
    Ok(())
}
