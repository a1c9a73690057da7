//! Training-time augmentation of normalized projections.
//!
//! The gray input is replicated to three channels, then each operation runs
//! independently with probability `p_apply`, in this fixed order:
//! horizontal flip, rotation, Gaussian noise, Gaussian blur, brightness,
//! contrast, saturation, hue. Intensity operations clamp to [0, 1].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::projection::Image;
use crate::scalar::Scalar;

/// Channel-major multi-channel image (`data[c][row][col]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage<S> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> ChannelImage<S> {
    pub fn replicate(img: &Image<S>, channels: usize) -> Self {
        let mut data = Vec::with_capacity(channels * img.pixels().len());
        for _ in 0..channels {
            data.extend_from_slice(img.pixels());
        }
        ChannelImage {
            channels,
            height: img.height(),
            width: img.width(),
            data,
        }
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[S] {
        &self.data[c * self.plane()..(c + 1) * self.plane()]
    }

    fn map_channels(&mut self, mut f: impl FnMut(&[S]) -> Vec<S>) {
        let plane = self.plane();
        for c in 0..self.channels {
            let out = f(&self.data[c * plane..(c + 1) * plane]);
            self.data[c * plane..(c + 1) * plane].copy_from_slice(&out);
        }
    }

    fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.max(S::zero()).min(S::one());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    HorizontalFlip,
    Rotation,
    GaussianNoise,
    GaussianBlur,
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

impl AugmentOp {
    pub const ORDER: [AugmentOp; 8] = [
        AugmentOp::HorizontalFlip,
        AugmentOp::Rotation,
        AugmentOp::GaussianNoise,
        AugmentOp::GaussianBlur,
        AugmentOp::Brightness,
        AugmentOp::Contrast,
        AugmentOp::Saturation,
        AugmentOp::Hue,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    pub p_apply: f64,
    pub rotation_deg: f64,
    pub noise_mu: f64,
    pub noise_sigma: f64,
    pub blur_kernel: usize,
    pub blur_sigma_range: (f64, f64),
    pub brightness_range: (f64, f64),
    pub contrast_range: (f64, f64),
    /// Saturation factor is drawn from `[max(0, 1 - s), 1 + s]`.
    pub saturation: f64,
    /// Hue shift is drawn from `[-h, h]` of a full turn.
    pub hue: f64,
    /// Operations that may fire; the rest are always skipped.
    pub enabled: Vec<AugmentOp>,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            p_apply: 0.5,
            rotation_deg: 15.0,
            noise_mu: 0.05,
            noise_sigma: 0.05,
            blur_kernel: 9,
            blur_sigma_range: (0.1, 5.0),
            brightness_range: (0.8, 1.2),
            contrast_range: (0.8, 1.3),
            saturation: 0.5,
            hue: 0.5,
            enabled: AugmentOp::ORDER.to_vec(),
        }
    }
}

impl AugmentParams {
    pub fn only(ops: &[AugmentOp], p_apply: f64) -> Self {
        AugmentParams {
            p_apply,
            enabled: ops.to_vec(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !(0.0..=1.0).contains(&self.p_apply) {
            return Err(CoreError::Config(format!("p_apply {} outside [0, 1]", self.p_apply)));
        }
        if !(range_ok(self.blur_sigma_range)
            && range_ok(self.brightness_range)
            && range_ok(self.contrast_range)
            && self.blur_sigma_range.0 > 0.0)
        {
            return Err(CoreError::Config("augmentation ranges must be ordered and finite".into()));
        }
        if self.blur_kernel % 2 == 0 {
            return Err(CoreError::Config("blur kernel must be odd".into()));
        }
        if self.noise_sigma < 0.0 || self.saturation < 0.0 || self.hue < 0.0 || self.rotation_deg < 0.0 {
            return Err(CoreError::Config("augmentation magnitudes must be non-negative".into()));
        }
        Ok(())
    }
}

/// Concrete random draws for one sample.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentStep {
    HorizontalFlip,
    Rotation { degrees: f64 },
    GaussianNoise { seed: u64 },
    GaussianBlur { sigma: f64 },
    Brightness { factor: f64 },
    Contrast { factor: f64 },
    Saturation { factor: f64 },
    Hue { shift: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPlan {
    pub steps: Vec<AugmentStep>,
}

impl AugmentPlan {
    /// Draws decisions in operation order. One coin is consumed per operation
    /// even when it is disabled, so enabling a subset does not shift the
    /// draws of later operations.
    pub fn sample<R: Rng + ?Sized>(params: &AugmentParams, rng: &mut R) -> AugmentPlan {
        let mut steps = Vec::new();
        for op in AugmentOp::ORDER {
            let coin: f64 = rng.random();
            if !(params.enabled.contains(&op) && coin < params.p_apply) {
                continue;
            }
            let uniform = |rng: &mut R, (a, b): (f64, f64)| {
                if a == b {
                    a
                } else {
                    rng.random_range(a..b)
                }
            };
            steps.push(match op {
                AugmentOp::HorizontalFlip => AugmentStep::HorizontalFlip,
                AugmentOp::Rotation => AugmentStep::Rotation {
                    degrees: uniform(rng, (-params.rotation_deg, params.rotation_deg)),
                },
                AugmentOp::GaussianNoise => AugmentStep::GaussianNoise { seed: rng.random() },
                AugmentOp::GaussianBlur => AugmentStep::GaussianBlur {
                    sigma: uniform(rng, params.blur_sigma_range),
                },
                AugmentOp::Brightness => AugmentStep::Brightness {
                    factor: uniform(rng, params.brightness_range),
                },
                AugmentOp::Contrast => AugmentStep::Contrast {
                    factor: uniform(rng, params.contrast_range),
                },
                AugmentOp::Saturation => AugmentStep::Saturation {
                    factor: uniform(rng, ((1.0 - params.saturation).max(0.0), 1.0 + params.saturation)),
                },
                AugmentOp::Hue => AugmentStep::Hue {
                    shift: uniform(rng, (-params.hue, params.hue)),
                },
            });
        }
        AugmentPlan { steps }
    }

    pub fn apply<S: Scalar>(&self, img: &ChannelImage<S>, params: &AugmentParams) -> ChannelImage<S> {
        let mut out = img.clone();
        for step in &self.steps {
            match *step {
                AugmentStep::HorizontalFlip => hflip(&mut out),
                AugmentStep::Rotation { degrees } => rotate(&mut out, degrees),
                AugmentStep::GaussianNoise { seed } => {
                    gaussian_noise(&mut out, params.noise_mu, params.noise_sigma, seed)
                }
                AugmentStep::GaussianBlur { sigma } => gaussian_blur(&mut out, params.blur_kernel, sigma),
                AugmentStep::Brightness { factor } => brightness(&mut out, factor),
                AugmentStep::Contrast { factor } => contrast(&mut out, factor),
                AugmentStep::Saturation { factor } => saturation(&mut out, factor),
                AugmentStep::Hue { shift } => hue(&mut out, shift),
            }
        }
        out
    }
}

/// Replicates a normalized gray image to three channels and applies a
/// randomly drawn augmentation plan.
pub fn augment<S: Scalar, R: Rng + ?Sized>(img: &Image<S>, params: &AugmentParams, rng: &mut R) -> ChannelImage<S> {
    let rgb = ChannelImage::replicate(img, 3);
    AugmentPlan::sample(params, rng).apply(&rgb, params)
}

pub fn hflip<S: Scalar>(img: &mut ChannelImage<S>) {
    let w = img.width;
    for row in img.data.chunks_mut(w) {
        row.reverse();
    }
}

/// Rotation about the image center with bilinear sampling; samples outside
/// the source read as zero.
pub fn rotate<S: Scalar>(img: &mut ChannelImage<S>, degrees: f64) {
    let (h, w) = (img.height, img.width);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    img.map_channels(|src| {
        let at = |r: isize, c: isize| -> f64 {
            if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                0.0
            } else {
                src[r as usize * w + c as usize].as_f64()
            }
        };
        let mut out = vec![S::zero(); h * w];
        for r in 0..h {
            for c in 0..w {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                let sy = cos * dy - sin * dx + cy;
                let sx = sin * dy + cos * dx + cx;
                if sy <= -1.0 || sx <= -1.0 || sy >= h as f64 || sx >= w as f64 {
                    continue;
                }
                let (y0, x0) = (sy.floor(), sx.floor());
                let (fy, fx) = (sy - y0, sx - x0);
                let (y0, x0) = (y0 as isize, x0 as isize);
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
                let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
                out[r * w + c] = S::of(top * (1.0 - fy) + bottom * fy);
            }
        }
        out
    });
}

pub fn gaussian_noise<S: Scalar>(img: &mut ChannelImage<S>, mu: f64, sigma: f64, seed: u64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(mu, sigma.max(0.0)).expect("sigma validated non-negative");
    for v in &mut img.data {
        *v = S::of(v.as_f64() + normal.sample(&mut rng));
    }
    img.clamp_unit();
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur<S: Scalar>(img: &mut ChannelImage<S>, kernel: usize, sigma: f64) {
    let radius = (kernel / 2) as isize;
    let mut weights: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let (h, w) = (img.height, img.width);
    img.map_channels(|src| {
        let mut tmp = vec![0.0f64; h * w];
        for r in 0..h {
            for c in 0..w {
                tmp[r * w + c] = weights
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * src[r * w + reflect(c as isize + k as isize - radius, w)].as_f64())
                    .sum();
            }
        }
        let mut out = vec![S::zero(); h * w];
        for r in 0..h {
            for c in 0..w {
                let v: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * tmp[reflect(r as isize + k as isize - radius, h) * w + c])
                    .sum();
                out[r * w + c] = S::of(v);
            }
        }
        out
    });
    img.clamp_unit();
}

pub fn brightness<S: Scalar>(img: &mut ChannelImage<S>, factor: f64) {
    for v in &mut img.data {
        *v = S::of(v.as_f64() * factor);
    }
    img.clamp_unit();
}

fn luma<S: Scalar>(img: &ChannelImage<S>, i: usize) -> f64 {
    if img.channels < 3 {
        return img.data[i].as_f64();
    }
    let p = img.plane();
    0.299 * img.data[i].as_f64() + 0.587 * img.data[p + i].as_f64() + 0.114 * img.data[2 * p + i].as_f64()
}

/// Blends toward the mean luma of the whole image.
pub fn contrast<S: Scalar>(img: &mut ChannelImage<S>, factor: f64) {
    let p = img.plane();
    let mean = (0..p).map(|i| luma(img, i)).sum::<f64>() / p as f64;
    for v in &mut img.data {
        *v = S::of(mean + factor * (v.as_f64() - mean));
    }
    img.clamp_unit();
}

/// Blends each pixel toward its own luma.
pub fn saturation<S: Scalar>(img: &mut ChannelImage<S>, factor: f64) {
    let p = img.plane();
    let gray: Vec<f64> = (0..p).map(|i| luma(img, i)).collect();
    for c in 0..img.channels {
        for (i, g) in gray.iter().enumerate() {
            let v = &mut img.data[c * p + i];
            *v = S::of(g + factor * (v.as_f64() - g));
        }
    }
    img.clamp_unit();
}

/// Rotates hue in HSV space by `shift` turns. Requires three channels.
pub fn hue<S: Scalar>(img: &mut ChannelImage<S>, shift: f64) {
    if img.channels != 3 {
        return;
    }
    let p = img.plane();
    for i in 0..p {
        let rgb = [0, 1, 2].map(|c| img.data[c * p + i].as_f64());
        let (h, s, v) = rgb_to_hsv(rgb);
        if s == 0.0 {
            continue;
        }
        let out = hsv_to_rgb((h + shift).rem_euclid(1.0), s, v);
        for c in 0..3 {
            img.data[c * p + i] = S::of(out[c]);
        }
    }
    img.clamp_unit();
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, v);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (h / 6.0, s, v)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i64 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gradient() -> Image<f32> {
        crate::projection::minmax_normalize(&Image::from_fn(12, 9, |r, c| (r * 3 + c * c) as f32).unwrap())
    }

    #[test]
    fn disabled_plan_replicates_input() {
        let img = gradient();
        let out = augment(&img, &AugmentParams::only(&[], 0.5), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out, ChannelImage::replicate(&img, 3));
    }

    #[test]
    fn some_seed_skips_everything_with_default_params() {
        let params = AugmentParams::default();
        let seed = (0..10_000u64)
            .find(|&s| AugmentPlan::sample(&params, &mut ChaCha8Rng::seed_from_u64(s)).steps.is_empty())
            .expect("1/256 of seeds skip every operation");
        let img = gradient();
        let out = augment(&img, &params, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(out, ChannelImage::replicate(&img, 3));
    }

    #[test]
    fn flip_twice_is_identity() {
        let img = gradient();
        let params = AugmentParams::only(&[AugmentOp::HorizontalFlip], 1.0);
        let once = augment(&img, &params, &mut ChaCha8Rng::seed_from_u64(3));
        assert_ne!(once, ChannelImage::replicate(&img, 3));
        let plan = AugmentPlan::sample(&params, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(plan.steps, vec![AugmentStep::HorizontalFlip]);
        assert_eq!(plan.apply(&once, &params), ChannelImage::replicate(&img, 3));
    }

    #[test]
    fn gray_is_fixed_point_of_hue_and_saturation() {
        let img = gradient();
        let params = AugmentParams::only(&[AugmentOp::Saturation, AugmentOp::Hue], 1.0);
        for seed in 0..20 {
            let out = augment(&img, &params, &mut ChaCha8Rng::seed_from_u64(seed));
            let base = ChannelImage::replicate(&img, 3);
            for (a, b) in out.data.iter().zip(&base.data) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn hue_rotates_colored_pixels() {
        let mut img = ChannelImage {
            channels: 3,
            height: 1,
            width: 1,
            data: vec![1.0f64, 0.0, 0.0],
        };
        hue(&mut img, 1.0 / 3.0);
        assert!((img.data[0]).abs() < 1e-12 && (img.data[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_pipeline_stays_in_unit_range_and_is_deterministic() {
        let img = gradient();
        let params = AugmentParams::only(&AugmentOp::ORDER, 1.0);
        let a = augment(&img, &params, &mut ChaCha8Rng::seed_from_u64(11));
        let b = augment(&img, &params, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn small_rotation_keeps_center() {
        let img = Image::from_fn(9, 9, |r, c| if r == 4 && c == 4 { 1.0f32 } else { 0.0 }).unwrap();
        let mut rgb = ChannelImage::replicate(&img, 3);
        rotate(&mut rgb, 10.0);
        assert!((rgb.data[4 * 9 + 4] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn blur_preserves_constant() {
        let img = Image::from_fn(6, 5, |_, _| 0.4f32).unwrap();
        let mut rgb = ChannelImage::replicate(&img, 3);
        gaussian_blur(&mut rgb, 9, 2.0);
        assert!(rgb.data.iter().all(|v| (v - 0.4).abs() < 1e-6));
    }

    #[test]
    fn params_validate() {
        assert!(AugmentParams::default().validate().is_ok());
        let bad = AugmentParams {
            p_apply: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
