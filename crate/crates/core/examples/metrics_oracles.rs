//! Classification metrics next to their brute-force definitions.

use specdrift::metrics::{auroc_binary, classification_metrics, silhouette};

fn main() -> specdrift::Result<()> {
    let y = [0usize, 0, 1, 1];
    let p = [0.1, 0.4, 0.35, 0.8];
    let scores: Vec<Vec<f64>> = p.iter().map(|&s| vec![1.0 - s, s]).collect();
    let report = classification_metrics(&y, &scores)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let mut concordant = 0.0;
    let mut pairs = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                concordant += if p[i] > p[j] {
                    1.0
                } else if p[i] == p[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    let pos: Vec<bool> = y.iter().map(|&v| v == 1).collect();
    println!("AUROC rank form {:.4}, pair count {:.4}", auroc_binary(&pos, &p).unwrap_or(f64::NAN), concordant / pairs);

    let s = silhouette(&[0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0], 2, &[0, 0, 1, 1])?;
    println!("silhouette of two tight pairs 10 apart: {s:.4}");
    Ok(())
}
