use std::path::Path;

use xprojct_core::phantom::{generate_dataset, write_dataset, DatasetManifest, PhantomSpec};
use xprojct_core::LabelVocabulary;

use crate::data::read_json;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

/// Generates a phantom dataset into `out`: `manifest.json`, and unless
/// `manifest_only`, `images/<id>.nii` and `labels/<id>.json` per sample.
pub fn cmd_phantom(
    spec_path: Option<&Path>,
    n_full: usize,
    n_patches: usize,
    seed: u64,
    out: &Path,
    manifest_only: bool,
) -> Result<DatasetManifest> {
    let spec: PhantomSpec = match spec_path {
        Some(p) => read_json(p)?,
        None => PhantomSpec::default(),
    };
    let vocab = LabelVocabulary::default();
    let mut manifest = generate_dataset(&spec, &vocab, n_full, n_patches, seed)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    if manifest_only {
        manifest.save(out.join(MANIFEST))?;
    } else {
        write_dataset(&mut manifest, &vocab, out)?;
    }
    Ok(manifest)
}
