//! The full preprocessing chain from a CT volume to a model input.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::projection::{minmax_normalize, project_coronal, resize_letterbox, Image};
use crate::roi::{apply_roi, compute_histogram, detect_roi_bounds_debug, RoiDebug, RoiSearchWindow, DEFAULT_BINS};
use crate::scalar::Scalar;
use crate::volume::{ResampleConfig, Volume, HU_MAX, HU_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub resample: ResampleConfig,
    pub clip: (f64, f64),
    pub histogram_bins: usize,
    pub roi: RoiSearchWindow,
    /// Output image (height, width) of the projection path.
    pub image_size: (usize, usize),
    /// Cube edge of the volumetric path.
    pub cube_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            resample: ResampleConfig::default(),
            clip: (HU_MIN, HU_MAX),
            histogram_bins: DEFAULT_BINS,
            roi: RoiSearchWindow::default(),
            image_size: (224, 224),
            cube_size: 64,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        self.resample.validate()?;
        self.roi.validate()?;
        if !(self.clip.0 < self.clip.1) || self.histogram_bins == 0 {
            return Err(CoreError::Config("clip range and histogram bins must be non-empty".into()));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 || self.cube_size == 0 {
            return Err(CoreError::Config("output sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Intermediate products of one run, for inspection and dumps.
#[derive(Debug, Clone)]
pub struct Intermediates<S> {
    pub resampled: Volume<S>,
    pub roi: RoiDebug,
    pub masked: Volume<S>,
    pub projection: Image<S>,
}

/// Resample, clip, standardize, and bone-ROI mask; shared by both paths.
pub fn bone_volume<S: Scalar>(vol: &Volume<S>, cfg: &PreprocessConfig) -> Result<(Volume<S>, Volume<S>, RoiDebug)> {
    cfg.validate()?;
    let resampled = vol.resample_isotropic(&cfg.resample)?;
    let clipped = resampled.clip_hu(cfg.clip.0, cfg.clip.1)?;
    let coronal = clipped.standardize_coronal()?;
    let hist = compute_histogram(&coronal, cfg.histogram_bins, cfg.clip.0, cfg.clip.1)?;
    let roi = detect_roi_bounds_debug(&hist, &cfg.roi)?;
    if roi.fallback {
        log::warn!("no bone peak in the search window; lower bound falls back to {} HU", roi.lower_hu);
    }
    let bounds = crate::roi::RoiBounds {
        lower_hu: roi.lower_hu,
        upper_hu: roi.upper_hu,
        fallback: roi.fallback,
    };
    let masked = apply_roi(&coronal, &bounds)?;
    Ok((resampled, masked, roi))
}

/// Volume to letterboxed, normalized coronal projection.
pub fn preprocess_projection<S: Scalar>(vol: &Volume<S>, cfg: &PreprocessConfig) -> Result<Image<S>> {
    preprocess_projection_traced(vol, cfg).map(|(img, _)| img)
}

pub fn preprocess_projection_traced<S: Scalar>(
    vol: &Volume<S>,
    cfg: &PreprocessConfig,
) -> Result<(Image<S>, Intermediates<S>)> {
    let (resampled, masked, roi) = bone_volume(vol, cfg)?;
    let projection = minmax_normalize(&project_coronal(&masked)?);
    let image = resize_letterbox(&projection, cfg.image_size.0, cfg.image_size.1)?;
    Ok((
        image,
        Intermediates {
            resampled,
            roi,
            masked,
            projection,
        },
    ))
}

/// Volume to normalized, letterboxed cube for the volumetric models.
pub fn preprocess_cube<S: Scalar>(vol: &Volume<S>, cfg: &PreprocessConfig) -> Result<Volume<S>> {
    let (_, masked, _) = bone_volume(vol, cfg)?;
    masked.minmax_normalize().letterbox_cube(cfg.cube_size, S::zero())
}
