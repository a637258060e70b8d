use serde_json::json;
use specdrift::encoder::EncoderConfig;
use specdrift::experiment::ExperimentConfig;
use specdrift::trainer::TrainConfig;

#[test]
fn encoder_and_alignment_defaults() {
    let enc = serde_json::to_value(EncoderConfig::default()).unwrap();
    assert_eq!(enc["layers"], json!(6));
    assert_eq!(enc["scln_alpha"], json!(0.1));
    assert_eq!(enc["align_module"], json!("fbam"));
    assert_eq!(
        enc["fbam"],
        json!({
            "bands": 6,
            "kernel_size": 3,
            "token_dim": 64,
            "kernel_mode": "sample_specific",
            "dc_learnable": false,
            "magnitude_residual": true,
            "static_modulation": false,
            "band_interaction": "cross_attention",
            "modulate": "both",
            "descriptor_subset": "full",
            "custom_boundaries": null
        })
    );
}

#[test]
fn training_defaults() {
    assert_eq!(
        serde_json::to_value(TrainConfig::default()).unwrap(),
        json!({
            "lr": 1e-4,
            "max_epochs": 100,
            "patience": 10,
            "batch_size": 32,
            "seeds": [41, 42, 43, 44, 45],
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "eval_batch": 128
        })
    );
}

#[test]
fn empty_document_is_the_default_config() {
    assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    let text = serde_json::to_string(&ExperimentConfig::default()).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), ExperimentConfig::default());
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(ExperimentConfig::from_json(r#"{"model": {"layerz": 2}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"train": {"patience": 200}}"#).is_err());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 2);
}
