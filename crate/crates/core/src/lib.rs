//! CT volume handling and the bone-enhanced coronal projection pipeline.
//!
//! Volumes are stored axis-0-slowest with anatomical axis codes. The
//! canonical layout is [`AxisCodes::CORONAL`]: axis 0 runs superior to
//! inferior, axis 1 anterior to posterior (the projection axis), axis 2
//! right to left.

pub mod augment;
pub mod error;
pub mod io_util;
pub mod labels;
pub mod nifti;
pub mod orientation;
pub mod phantom;
pub mod pipeline;
pub mod projection;
pub mod roi;
pub mod scalar;
pub mod volume;

pub use error::{CoreError, Result};
pub use labels::{LabelFile, LabelVocabulary, SeriesPrediction};
pub use orientation::{AxisCodes, Direction};
pub use projection::Image;
pub use scalar::Scalar;
pub use volume::{ResampleConfig, Volume};

/// Single-precision CT volume in Hounsfield units.
pub type CtVolume = Volume<f32>;
/// Single-precision projection image.
pub type ProjectionImage = Image<f32>;
