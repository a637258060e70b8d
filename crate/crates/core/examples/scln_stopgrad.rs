//! Sample-conditional layer normalization: at alpha = 0 it is plain layer
//! normalization, and no gradient reaches the input through its statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specdrift::numcore::{ParamStore, Tape, Tensor};
use specdrift::scln::Scln;

fn main() -> specdrift::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::from_fn(&[2, 8, 4], |_| rng.random_range(-2.0..2.0));
    let w = Tensor::from_fn(&[2, 8, 4], |_| rng.random_range(-1.0..1.0));

    for alpha in [0.0, 0.1, 0.5] {
        let mut store = ParamStore::new(0);
        let block = Scln::new(&mut store, "scln", 4, alpha)?;
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.value_mut(id).data_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
        }
        // gradient of <w, SCLN(h, stats from s)> with respect to s, the statistics input
        let mut tape = Tape::new();
        let h = tape.constant(x.clone());
        let s = tape.leaf(x.clone())?;
        let y = block.forward_branches(&mut tape, &store, h, s)?;
        let wv = tape.constant(w.clone());
        let y = tape.mul(y, wv)?;
        let loss = tape.sum_all(y)?;
        let grads = tape.backward(loss)?;
        let g = grads.wrt(s);
        let norm = g.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        println!("alpha {alpha:.1}: loss {:+.4}, max |dloss/dstats| = {norm}", tape.value(loss).data()[0]);
    }
    Ok(())
}
