use std::path::Path;

use specdrift::cli::main_with_args;
use specdrift::dataset::read_btsd;

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["specdrift"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_train_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/quick.json");
    let spec = d.join("spec.json");
    std::fs::write(&spec, r#"{"num_subjects": 4, "samples_per_subject": 6, "length": 32, "channels": 2}"#).unwrap();
    let data = d.join("data.btsd");
    assert_eq!(cli(&["gen-data", "--spec", s(&spec), "--out", s(&data), "--seed", "3"]), 0);
    let batch = read_btsd(&data).unwrap();
    assert_eq!((batch.len(), batch.length(), batch.channels()), (24, 32, 2));

    let run = d.join("run");
    assert_eq!(cli(&["train", "--config", s(&config), "--seed", "41", "--out", s(&run)]), 0);
    for f in ["checkpoint.bin", "train_log.csv", "train_log.json", "metrics.json", "embedding_fbd.csv", "split.json"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let ck = run.join("checkpoint.bin");
    assert_eq!(cli(&["eval", "--checkpoint", s(&ck), "--data", s(&data)]), 0);
    assert_eq!(cli(&["probe", "--checkpoint", s(&ck), "--data", s(&data)]), 0);

    let fbd_out = d.join("fbd");
    assert_eq!(cli(&["fbd", "--data", s(&data), "--band", "0,8", "--out", s(&fbd_out)]), 0);
    let csv = std::fs::read_to_string(fbd_out.join("fbd.csv")).unwrap();
    assert!(csv.starts_with("bin,freq_lo,freq_hi,intra,inter,fbd"));
    assert_eq!(cli(&["fbd", "--data", s(&data), "--checkpoint", s(&ck)]), 0);

    let demo = d.join("demo");
    assert_eq!(cli(&["align-demo", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&demo)]), 0);
    let spectra = std::fs::read_to_string(demo.join("spectra.csv")).unwrap();
    assert!(spectra.starts_with("stage,class,subject,bin,magnitude"));
    assert!(spectra.lines().count() > 1);
}

#[test]
fn sweep_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/quick.json");
    assert_eq!(cli(&["train-sweep", "--config", s(&config), "--seeds", "41,42", "--out", s(dir.path())]), 0);
    let sweep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep["runs"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("seed-42/checkpoint.bin").exists());
}

#[test]
fn gradcheck_subcommand() {
    assert_eq!(cli(&["gradcheck", "--module", "scln"]), 0);
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    // an unreadable file is a runtime failure, a malformed one is invalid input
    assert_eq!(cli(&["train", "--config", s(&missing)]), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"model": {"layers": 3}}"#).unwrap();
    assert_eq!(cli(&["train", "--config", s(&bad)]), 1);
    let data = dir.path().join("data.btsd");
    assert_eq!(cli(&["gen-data", "--out", s(&data)]), 0);
    assert_eq!(cli(&["fbd", "--data", s(&data), "--band", "9,1"]), 1);
    assert_eq!(cli(&["eval", "--checkpoint", s(&missing), "--data", s(&data), "--part", "holdout"]), 1);
}

#[test]
fn mismatched_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/quick.json");
    let run = dir.path().join("run");
    assert_eq!(cli(&["train", "--config", s(&config), "--out", s(&run)]), 0);
    let data = dir.path().join("wide.btsd");
    std::fs::write(dir.path().join("spec.json"), r#"{"num_subjects": 2, "samples_per_subject": 2, "length": 32, "channels": 3}"#).unwrap();
    assert_eq!(cli(&["gen-data", "--spec", s(&dir.path().join("spec.json")), "--out", s(&data)]), 0);
    assert_eq!(cli(&["eval", "--checkpoint", s(&run.join("checkpoint.bin")), "--data", s(&data)]), 1);
}
