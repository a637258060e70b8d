//! Central finite differences against the tape gradients of every block.

use specdrift::diagnostics::{gradcheck, GradTarget};

fn main() -> specdrift::Result<()> {
    for target in GradTarget::ALL {
        let report = gradcheck(target, 0)?;
        println!("{target:?}: {}", report.summary());
        let worst = report.params.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err)).expect("parameters");
        println!("    worst: {} ({:.2e} over {} entries)", worst.name, worst.rel_err, worst.checked);
    }
    Ok(())
}
