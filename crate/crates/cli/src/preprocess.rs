use std::path::Path;

use serde::Serialize;
use xprojct_core::nifti::{read_nifti, write_nifti_with, WriteOptions};
use xprojct_core::pipeline::{preprocess_projection_traced, PreprocessConfig};
use xprojct_core::projection::export_preview;
use xprojct_core::roi::RoiDebug;

use crate::data::write_json;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize)]
struct Bounds {
    lower_hu: f64,
    upper_hu: f64,
    fallback: bool,
    median: f64,
    window_bins: (usize, usize),
}

#[derive(Debug, Clone, Serialize)]
struct Histogram<'a> {
    bin_centers: &'a [f64],
    counts: &'a [u64],
    adjusted: &'a [f64],
}

#[derive(Debug, Clone, Serialize)]
struct RawProjection<'a> {
    height: usize,
    width: usize,
    pixels: &'a [f32],
}

fn dump_roi(roi: &RoiDebug, dir: &Path) -> Result<()> {
    write_json(
        &Histogram {
            bin_centers: &roi.bin_centers,
            counts: &roi.counts,
            adjusted: &roi.adjusted,
        },
        &dir.join("histogram.json"),
    )?;
    write_json(
        &Bounds {
            lower_hu: roi.lower_hu,
            upper_hu: roi.upper_hu,
            fallback: roi.fallback,
            median: roi.median,
            window_bins: roi.window_bins,
        },
        &dir.join("bounds.json"),
    )
}

/// Runs the projection pipeline on one NIfTI file and writes an 8-bit
/// preview. With `dump_dir`, also writes the resampled volume, the
/// histogram, the bounds and the raw normalized projection.
pub fn cmd_preprocess(input: &Path, output: &Path, cfg: &PreprocessConfig, dump_dir: Option<&Path>) -> Result<()> {
    let (vol, _) = read_nifti(input).map_err(|source| CliError::Stage { stage: "load", source })?;
    let (image, trace) =
        preprocess_projection_traced(&vol, cfg).map_err(|source| CliError::Stage { stage: "preprocess", source })?;
    export_preview(&image, output).map_err(|source| CliError::Stage { stage: "export", source })?;
    if let Some(dir) = dump_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let opts = WriteOptions::default();
        write_nifti_with(&trace.resampled, dir.join("resampled.nii"), &opts)?;
        write_nifti_with(&trace.masked, dir.join("masked.nii"), &opts)?;
        dump_roi(&trace.roi, dir)?;
        write_json(
            &RawProjection {
                height: trace.projection.height(),
                width: trace.projection.width(),
                pixels: trace.projection.pixels(),
            },
            &dir.join("projection.json"),
        )?;
    }
    Ok(())
}
