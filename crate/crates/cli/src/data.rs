//! Model inputs from volumes and manifest entries.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xprojct_core::augment::{AugmentParams, AugmentPlan, ChannelImage};
use xprojct_core::nifti::read_nifti;
use xprojct_core::phantom::{DatasetManifest, ManifestEntry, Split};
use xprojct_core::pipeline::{preprocess_cube, preprocess_projection, PreprocessConfig};
use xprojct_core::{CtVolume, LabelVocabulary, ProjectionImage};
use xprojct_nn::train::{InMemory, SampleSource};
use xprojct_nn::ModelSpec;

use crate::error::{CliError, Result};

/// How a volume is presented to a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Representation {
    #[serde(rename = "2d")]
    Projection,
    #[serde(rename = "2.5d")]
    Shrunk,
    #[serde(rename = "3d")]
    Volumetric,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Projection => "2d",
            Representation::Shrunk => "2.5d",
            Representation::Volumetric => "3d",
        }
    }

    pub fn default_model(self) -> &'static str {
        match self {
            Representation::Projection => "tiny2d",
            Representation::Shrunk => "tiny2p5d",
            Representation::Volumetric => "tiny3d",
        }
    }

    /// Edge length the preset is built for.
    pub fn input_size(self, pre: &PreprocessConfig) -> Result<usize> {
        match self {
            Representation::Projection => {
                let (h, w) = pre.image_size;
                if h != w {
                    return Err(CliError::Config(format!("projection models need a square image, got {h}x{w}")));
                }
                Ok(h)
            }
            _ => Ok(pre.cube_size),
        }
    }

    pub fn model_spec(self, name: &str, pre: &PreprocessConfig, classes: usize) -> Result<ModelSpec> {
        let size = self.input_size(pre)?;
        xprojct_nn::presets::by_name(name, size, classes)
            .ok_or_else(|| CliError::Config(format!("unknown model preset {name:?}")))
    }
}

/// Preprocessed model input of one volume, before channel replication.
#[derive(Debug, Clone, PartialEq)]
pub enum Prepared {
    Image(ProjectionImage),
    Cube(Vec<f32>),
}

impl Prepared {
    pub fn into_input(self) -> Vec<f32> {
        match self {
            Prepared::Image(img) => ChannelImage::replicate(&img, 3).data,
            Prepared::Cube(v) => v,
        }
    }
}

pub fn prepare(vol: &CtVolume, rep: Representation, pre: &PreprocessConfig) -> Result<Prepared> {
    let stage = |source| CliError::Stage {
        stage: "preprocess",
        source,
    };
    Ok(match rep {
        Representation::Projection => Prepared::Image(preprocess_projection(vol, pre).map_err(stage)?),
        _ => Prepared::Cube(preprocess_cube(vol, pre).map_err(stage)?.into_voxels()),
    })
}

/// Volume of a manifest entry: read from disk when the dataset was
/// written, regenerated from the seed otherwise.
pub fn entry_volume(
    manifest: &DatasetManifest,
    root: &Path,
    vocab: &LabelVocabulary,
    entry: &ManifestEntry,
) -> Result<CtVolume> {
    match &entry.image {
        Some(rel) => {
            let path: PathBuf = root.join(rel);
            read_nifti(&path)
                .map(|(v, _)| v)
                .map_err(|source| CliError::Stage { stage: "load", source })
        }
        None => Ok(manifest
            .materialize(vocab, entry)?
            .quantized_volume(&manifest.spec.storage_axes)),
    }
}

/// Preprocessed samples of one split, in manifest order.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub ids: Vec<String>,
    pub inputs: Vec<Prepared>,
    pub targets: Vec<Vec<f32>>,
}

pub fn prepare_split(
    manifest: &DatasetManifest,
    root: &Path,
    vocab: &LabelVocabulary,
    split: Split,
    rep: Representation,
    pre: &PreprocessConfig,
) -> Result<PreparedSplit> {
    let entries: Vec<&ManifestEntry> = manifest.split(split).collect();
    let rows: Vec<(String, Prepared, Vec<f32>)> = entries
        .par_iter()
        .map(|e| {
            let vol = entry_volume(manifest, root, vocab, e)?;
            Ok((e.id.clone(), prepare(&vol, rep, pre)?, vocab.encode(&e.label)?))
        })
        .collect::<Result<_>>()?;
    let mut out = PreparedSplit {
        ids: Vec::with_capacity(rows.len()),
        inputs: Vec::with_capacity(rows.len()),
        targets: Vec::with_capacity(rows.len()),
    };
    for (id, x, t) in rows {
        out.ids.push(id);
        out.inputs.push(x);
        out.targets.push(t);
    }
    Ok(out)
}

/// Training source over prepared samples. Projection samples are
/// augmented during training passes with a seed derived from
/// `(seed, epoch, index)`.
pub struct PreparedSource {
    inputs: Vec<Prepared>,
    targets: Vec<Vec<f32>>,
    augment: Option<AugmentParams>,
    seed: u64,
}

impl PreparedSource {
    pub fn new(split: PreparedSplit, augment: Option<AugmentParams>, seed: u64) -> Self {
        PreparedSource {
            inputs: split.inputs,
            targets: split.targets,
            augment,
            seed,
        }
    }

    pub fn targets(&self) -> &[Vec<f32>] {
        &self.targets
    }
}

impl SampleSource<f32> for PreparedSource {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn sample(&self, index: usize, epoch: Option<usize>) -> xprojct_nn::Result<(Vec<f32>, Vec<f32>)> {
        let x = match (&self.inputs[index], &self.augment, epoch) {
            (Prepared::Image(img), Some(params), Some(epoch)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(((epoch as u64) << 32) | index as u64);
                let rgb = ChannelImage::replicate(img, 3);
                AugmentPlan::sample(params, &mut rng).apply(&rgb, params).data
            }
            (p, _, _) => p.clone().into_input(),
        };
        Ok((x, self.targets[index].clone()))
    }
}

/// Flattens a prepared split into an unaugmented in-memory source.
pub fn in_memory(split: &PreparedSplit) -> InMemory<f32> {
    InMemory {
        inputs: split.inputs.iter().cloned().map(Prepared::into_input).collect(),
        targets: split.targets.clone(),
    }
}

/// Reads a JSON file into `T`.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push(b'\n');
    Ok(xprojct_core::io_util::write_atomic(path, &text)?)
}
