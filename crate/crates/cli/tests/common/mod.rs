#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::json;
use xprojct_cli::phantom::{cmd_phantom, MANIFEST};
use xprojct_core::pipeline::PreprocessConfig;
use xprojct_core::volume::ResampleConfig;

/// Phantom-scale preprocessing with small outputs.
pub fn small_preprocess() -> PreprocessConfig {
    PreprocessConfig {
        resample: ResampleConfig::with_spacing(2.0),
        image_size: (32, 32),
        cube_size: 16,
        ..Default::default()
    }
}

/// Writes a phantom dataset into `dir` and returns the manifest path.
pub fn dataset(dir: &Path, n_full: usize, n_patches: usize, seed: u64) -> PathBuf {
    cmd_phantom(None, n_full, n_patches, seed, dir, false).unwrap();
    dir.join(MANIFEST)
}

/// Writes a training config next to the manifest's parent directory.
pub fn run_config(dir: &Path, manifest: &Path, representation: &str, epochs: usize, seed: u64) -> PathBuf {
    let cfg = json!({
        "representation": representation,
        "manifest": manifest,
        "output_dir": dir.join("run"),
        "preprocess": small_preprocess(),
        "train": {"max_epochs": 50, "epoch_budget": epochs, "batch_size": 4, "seed": seed},
        "augment": null,
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

pub fn schema_validator() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/prediction.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

/// Schema violations of a prediction file, empty when it validates.
pub fn schema_errors(validator: &jsonschema::Validator, path: &Path) -> Vec<String> {
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    validator.iter_errors(&doc).map(|e| e.to_string()).collect()
}
