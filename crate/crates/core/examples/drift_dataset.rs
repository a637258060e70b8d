//! Synthetic spectral drift: generate subjects, split them disjointly and
//! round-trip the data through the BTSD file format.

use specdrift::dataset::{generate, read_btsd, split_by_subject, write_btsd, DriftSpec, Part, SplitPolicy};
use specdrift::metrics::{fbd, FbdConfig};

fn main() -> specdrift::Result<()> {
    let spec = DriftSpec { num_subjects: 12, samples_per_subject: 40, ..DriftSpec::default() };
    let data = generate(&spec, 5)?;
    println!("{} samples of [{} x {}], {} subjects", data.len(), data.length(), data.channels(), data.num_subjects);

    let plan = split_by_subject(&data, &SplitPolicy::Counts { train: 8, val: 2, test: 2 }, 5)?;
    println!("train subjects {:?}\nval {:?}\ntest {:?}", plan.train, plan.val, plan.test);
    for part in [Part::Train, Part::Val, Part::Test] {
        println!("  {part:?}: {} samples", plan.select(&data, part).len());
    }

    let dir = std::env::temp_dir().join("specdrift-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("drift.btsd");
    write_btsd(&path, &data)?;
    let back = read_btsd(&path)?;
    println!("BTSD round trip: {} bytes, max value error {:.1e}", std::fs::metadata(&path)?.len(), back.x.max_abs_diff(&data.x));

    // more gain drift spreads band power across subjects and lowers discriminability
    let cfg = FbdConfig { fs: 128.0, bin_hz: 2.0, band: Some((4.0, 16.0)) };
    for spread in [0.0, 0.3, 0.6, 1.0] {
        let d = generate(&DriftSpec { gain_spread: spread, ..spec.clone() }, 5)?;
        println!("gain spread {spread:.1}: raw FBD over 4-16 = {:.2}", fbd(&d.x, &d.labels, &d.subjects, &cfg)?.aggregate);
    }
    Ok(())
}
