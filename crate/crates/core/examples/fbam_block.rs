//! One frequency-band alignment block: identity at initialization, DC kept,
//! and what the modulation heads produce once their weights move.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specdrift::fbam::{Fbam, FbamConfig};
use specdrift::numcore::{ParamStore, Tape, Tensor};

fn channel_means(x: &Tensor) -> Vec<f64> {
    let (b, t, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = vec![0.0; b * d];
    for i in 0..b {
        for tt in 0..t {
            for c in 0..d {
                out[i * d + c] += x.data()[(i * t + tt) * d + c] / t as f64;
            }
        }
    }
    out
}

fn main() -> specdrift::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::from_fn(&[4, 64, 16], |_| rng.random_range(-1.0..1.0));
    let mut store = ParamStore::new(7);
    let block = Fbam::new(&mut store, "fbam", &FbamConfig::default(), 64, 16, 0)?;

    let mut tape = Tape::inference();
    let xv = tape.constant(x.clone());
    let y = block.forward(&mut tape, &store, xv)?;
    println!("fresh block, max |y - x| = {:.2e}", tape.value(y).max_abs_diff(&x));

    // move every weight, as training would
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.value_mut(id).data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    let mut tape = Tape::inference();
    let xv = tape.constant(x.clone());
    let (y, m) = block.forward_with_modulation(&mut tape, &store, xv)?;
    let y = tape.value(y).clone();
    let drift = channel_means(&x).iter().zip(channel_means(&y)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("perturbed block, max |y - x| = {:.3}, max DC change = {drift:.2e}", y.max_abs_diff(&x));
    println!("kernel shape {:?}, first band kernel {:?}", tape.shape(m.kernel), &tape.value(m.kernel).data()[..3]);
    println!("gain shape {:?}, phase shape {:?}", tape.shape(m.gain), tape.shape(m.third));
    Ok(())
}
