//! X-ray-like 2D estimates of a coronal-standardized volume, plus the
//! normalization and model-input resizing applied to them.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::orientation::AxisCodes;
use crate::scalar::Scalar;
use crate::volume::Volume;

/// Row-major single-channel image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image<S> {
    height: usize,
    width: usize,
    pixels: Vec<S>,
    normalized: bool,
}

impl<S: Scalar> Image<S> {
    pub fn new(height: usize, width: usize, pixels: Vec<S>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CoreError::Precondition(format!("empty image {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(CoreError::Precondition(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        Ok(Image {
            height,
            width,
            pixels,
            normalized: false,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> S) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[S] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<S> {
        self.pixels
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.pixels[r * self.width + c]
    }

    pub fn min_max(&self) -> (S, S) {
        self.pixels.iter().fold((S::infinity(), S::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Clamp-to-edge bilinear sample at a continuous (row, col) position.
    pub fn sample_bilinear(&self, r: f64, c: f64) -> f64 {
        let r = r.clamp(0.0, (self.height - 1) as f64);
        let c = c.clamp(0.0, (self.width - 1) as f64);
        let (r0, c0) = (r.floor() as usize, c.floor() as usize);
        let (r1, c1) = ((r0 + 1).min(self.height - 1), (c0 + 1).min(self.width - 1));
        let (fr, fc) = (r - r0 as f64, c - c0 as f64);
        let at = |r: usize, c: usize| self.get(r, c).as_f64();
        let top = at(r0, c0) + (at(r0, c1) - at(r0, c0)) * fc;
        let bottom = at(r1, c0) + (at(r1, c1) - at(r1, c0)) * fc;
        top + (bottom - top) * fr
    }
}

/// Array axis of a canonical coronal volume to reduce over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionAxis {
    /// axis0; yields an axial view (rows anterior→posterior, cols right→left).
    SuperiorInferior,
    /// axis1; yields the coronal view (rows superior→inferior, cols right→left).
    AnteriorPosterior,
    /// axis2; yields a sagittal view (rows superior→inferior, cols anterior→posterior).
    RightLeft,
}

impl ProjectionAxis {
    pub fn array_axis(self) -> usize {
        match self {
            ProjectionAxis::SuperiorInferior => 0,
            ProjectionAxis::AnteriorPosterior => 1,
            ProjectionAxis::RightLeft => 2,
        }
    }
}

/// Sums voxels along the anterior-posterior axis:
/// `pixels[z][x] = Σ_y voxels[z][y][x]`.
pub fn project_coronal<S: Scalar>(vol: &Volume<S>) -> Result<Image<S>> {
    project_axis(vol, ProjectionAxis::AnteriorPosterior)
}

/// Summation projection along one axis of a coronal-standardized volume.
/// Each pixel accumulates in `f64` in increasing index order.
pub fn project_axis<S: Scalar>(vol: &Volume<S>, axis: ProjectionAxis) -> Result<Image<S>> {
    if vol.axes() != AxisCodes::CORONAL {
        return Err(CoreError::Orientation(format!(
            "projection needs canonical {} axes, volume is {}",
            AxisCodes::CORONAL,
            vol.axes()
        )));
    }
    let [d0, d1, d2] = vol.dims();
    let v = vol.voxels();
    let (h, w) = match axis {
        ProjectionAxis::SuperiorInferior => (d1, d2),
        ProjectionAxis::AnteriorPosterior => (d0, d2),
        ProjectionAxis::RightLeft => (d0, d1),
    };
    let mut pixels = vec![S::zero(); h * w];
    pixels.par_chunks_mut(w).enumerate().for_each(|(row, out)| {
        let mut acc = vec![0.0f64; w];
        match axis {
            ProjectionAxis::SuperiorInferior => {
                for z in 0..d0 {
                    let base = (z * d1 + row) * d2;
                    for (a, &x) in acc.iter_mut().zip(&v[base..base + d2]) {
                        *a += x.as_f64();
                    }
                }
            }
            ProjectionAxis::AnteriorPosterior => {
                for y in 0..d1 {
                    let base = (row * d1 + y) * d2;
                    for (a, &x) in acc.iter_mut().zip(&v[base..base + d2]) {
                        *a += x.as_f64();
                    }
                }
            }
            ProjectionAxis::RightLeft => {
                for (y, a) in acc.iter_mut().enumerate() {
                    let base = (row * d1 + y) * d2;
                    for &x in &v[base..base + d2] {
                        *a += x.as_f64();
                    }
                }
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = S::of(a);
        }
    });
    Image::new(h, w, pixels)
}

/// `(p - min) / (max - min)`; a constant image maps to zeros.
pub fn minmax_normalize<S: Scalar>(img: &Image<S>) -> Image<S> {
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    let pixels = if range > S::zero() {
        img.pixels.iter().map(|&p| (p - lo) / range).collect()
    } else {
        vec![S::zero(); img.pixels.len()]
    };
    Image {
        height: img.height,
        width: img.width,
        pixels,
        normalized: true,
    }
}

/// Geometry of a letterboxed resize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Letterbox {
    pub inner_h: usize,
    pub inner_w: usize,
    pub top: usize,
    pub left: usize,
}

impl Letterbox {
    pub fn fit(h: usize, w: usize, target_h: usize, target_w: usize) -> Letterbox {
        let s = (target_h as f64 / h as f64).min(target_w as f64 / w as f64);
        let inner_h = ((h as f64 * s).round() as usize).clamp(1, target_h);
        let inner_w = ((w as f64 * s).round() as usize).clamp(1, target_w);
        Letterbox {
            inner_h,
            inner_w,
            top: (target_h - inner_h) / 2,
            left: (target_w - inner_w) / 2,
        }
    }
}

/// Aspect-preserving bilinear resize, centered and zero padded to the target.
pub fn resize_letterbox<S: Scalar>(img: &Image<S>, target_h: usize, target_w: usize) -> Result<Image<S>> {
    if target_h == 0 || target_w == 0 {
        return Err(CoreError::Precondition("letterbox target must be positive".into()));
    }
    let lb = Letterbox::fit(img.height, img.width, target_h, target_w);
    let sr = img.height as f64 / lb.inner_h as f64;
    let sc = img.width as f64 / lb.inner_w as f64;
    let mut pixels = vec![S::zero(); target_h * target_w];
    for r in 0..lb.inner_h {
        let src_r = (r as f64 + 0.5) * sr - 0.5;
        let row = &mut pixels[(lb.top + r) * target_w..(lb.top + r + 1) * target_w];
        for c in 0..lb.inner_w {
            let src_c = (c as f64 + 0.5) * sc - 0.5;
            row[lb.left + c] = S::of(img.sample_bilinear(src_r, src_c));
        }
    }
    Ok(Image {
        height: target_h,
        width: target_w,
        pixels,
        normalized: img.normalized,
    })
}

/// 8-bit grayscale rendering, `round(255 * p)` of the normalized image.
pub fn to_gray8<S: Scalar>(img: &Image<S>) -> Vec<u8> {
    let norm;
    let src = if img.normalized {
        img
    } else {
        norm = minmax_normalize(img);
        &norm
    };
    src.pixels
        .iter()
        .map(|p| (255.0 * p.as_f64().clamp(0.0, 1.0)).round() as u8)
        .collect()
}

/// Writes an 8-bit preview; the format follows the extension (`.png` or `.pgm`).
pub fn export_preview<S: Scalar>(img: &Image<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let gray = to_gray8(img);
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => {
            let mut bytes = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
            bytes.extend_from_slice(&gray);
            fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
        }
        "png" => {
            let file = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
            let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let to_io = |e: png::EncodingError| CoreError::io(path, std::io::Error::other(e));
            let mut writer = enc.write_header().map_err(to_io)?;
            writer.write_image_data(&gray).map_err(to_io)?;
            writer.finish().map_err(to_io)
        }
        other => Err(CoreError::Config(format!(
            "preview format {other:?} not supported (use .png or .pgm)"
        ))),
    }
}
