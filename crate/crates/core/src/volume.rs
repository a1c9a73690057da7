//! CT volumes and the geometric/intensity preprocessing applied before the
//! histogram step: isotropic resampling, HU clipping and coronal
//! standardization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::orientation::{AxisCodes, AxisTransform};
use crate::scalar::Scalar;

pub const HU_MIN: f64 = -1024.0;
pub const HU_MAX: f64 = 1500.0;

/// Dense 3D grid, axis0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<S> {
    dims: [usize; 3],
    spacing: [f64; 3],
    axes: AxisCodes,
    oblique: bool,
    pub provenance: String,
    voxels: Vec<S>,
}

impl<S: Scalar> Volume<S> {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], axes: AxisCodes, voxels: Vec<S>) -> Result<Self> {
        let n = checked_len(dims)?;
        if n == 0 {
            return Err(CoreError::Precondition(format!("empty volume {dims:?}")));
        }
        if voxels.len() != n {
            return Err(CoreError::Precondition(format!(
                "voxel buffer holds {} values, dims {dims:?} need {n}",
                voxels.len()
            )));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(CoreError::Precondition(format!("invalid spacing {spacing:?}")));
        }
        if let Some(i) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::Precondition(format!("non-finite voxel at flat index {i}")));
        }
        Ok(Volume {
            dims,
            spacing,
            axes,
            oblique: false,
            provenance: String::new(),
            voxels,
        })
    }

    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        axes: AxisCodes,
        mut f: impl FnMut([usize; 3]) -> S,
    ) -> Result<Self> {
        let mut voxels = Vec::with_capacity(checked_len(dims)?);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    voxels.push(f([i, j, k]));
                }
            }
        }
        Self::new(dims, spacing, axes, voxels)
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], axes: AxisCodes, value: S) -> Result<Self> {
        Self::new(dims, spacing, axes, vec![value; checked_len(dims)?])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn axes(&self) -> AxisCodes {
        self.axes
    }

    /// Set when the source affine was not a pure signed permutation.
    pub fn is_oblique(&self) -> bool {
        self.oblique
    }

    pub fn set_oblique(&mut self, oblique: bool) {
        self.oblique = oblique;
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxels(&self) -> &[S] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<S> {
        self.voxels
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.dims[1] + ijk[1]) * self.dims[2] + ijk[2]
    }

    #[inline]
    pub fn get(&self, ijk: [usize; 3]) -> S {
        self.voxels[self.index(ijk)]
    }

    pub fn min_max(&self) -> (S, S) {
        self.voxels.iter().fold((S::infinity(), S::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Applies `f` to every voxel, keeping geometry and metadata.
    pub fn map(&self, f: impl Fn(S) -> S + Sync) -> Volume<S> {
        let voxels = self.voxels.par_iter().map(|&v| f(v)).collect();
        self.with_voxels(self.dims, self.spacing, self.axes, voxels)
    }

    pub fn cast<T: Scalar>(&self) -> Volume<T> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            axes: self.axes,
            oblique: self.oblique,
            provenance: self.provenance.clone(),
            voxels: self.voxels.iter().map(|v| T::of(v.as_f64())).collect(),
        }
    }

    fn with_voxels(&self, dims: [usize; 3], spacing: [f64; 3], axes: AxisCodes, voxels: Vec<S>) -> Volume<S> {
        Volume {
            dims,
            spacing,
            axes,
            oblique: self.oblique,
            provenance: self.provenance.clone(),
            voxels,
        }
    }

    /// Clamp-to-edge trilinear sample at a continuous index position.
    pub fn sample_trilinear(&self, pos: [f64; 3]) -> S {
        let taps = [0, 1, 2].map(|a| LinearTap::at(pos[a], self.dims[a]));
        self.blend(&taps)
    }

    #[inline]
    fn blend(&self, t: &[LinearTap; 3]) -> S {
        let [_, d1, d2] = self.dims;
        let row = |i: usize, j: usize| {
            let base = (i * d1 + j) * d2;
            let a = self.voxels[base + t[2].lo].as_f64();
            let b = self.voxels[base + t[2].hi].as_f64();
            a + (b - a) * t[2].frac
        };
        let plane = |i: usize| {
            let a = row(i, t[1].lo);
            let b = row(i, t[1].hi);
            a + (b - a) * t[1].frac
        };
        let a = plane(t[0].lo);
        let b = plane(t[0].hi);
        S::of(a + (b - a) * t[0].frac)
    }

    /// Resamples onto an isotropic grid with clamp-to-edge trilinear
    /// interpolation. Output extent per axis is
    /// `max(1, round(n * spacing / target))`.
    pub fn resample_isotropic(&self, cfg: &ResampleConfig) -> Result<Volume<S>> {
        cfg.validate()?;
        let t = cfg.target_spacing_mm;
        let out_dims = [0, 1, 2].map(|a| {
            let extent = (self.dims[a] as f64 * self.spacing[a] / t).round();
            (extent.max(1.0)) as usize
        });
        let total = out_dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
        match total {
            Some(n) if n <= cfg.max_output_voxels => {}
            _ => {
                return Err(CoreError::Resource(format!(
                    "resampling {:?} at {:?} mm to {t} mm gives {:?} voxels, guard is {}",
                    self.dims, self.spacing, out_dims, cfg.max_output_voxels
                )))
            }
        }
        let taps: [Vec<LinearTap>; 3] = [0, 1, 2].map(|a| {
            let ratio = t / self.spacing[a];
            (0..out_dims[a])
                .map(|o| LinearTap::at((o as f64 + 0.5) * ratio - 0.5, self.dims[a]))
                .collect()
        });
        let plane = out_dims[1] * out_dims[2];
        let mut voxels = vec![S::zero(); plane * out_dims[0]];
        voxels.par_chunks_mut(plane).enumerate().for_each(|(i, slab)| {
            for j in 0..out_dims[1] {
                for k in 0..out_dims[2] {
                    slab[j * out_dims[2] + k] = self.blend(&[taps[0][i], taps[1][j], taps[2][k]]);
                }
            }
        });
        Ok(self.with_voxels(out_dims, [t; 3], self.axes, voxels))
    }

    /// Replaces every voxel by `min(max(v, lo), hi)`.
    pub fn clip_hu(&self, lo: f64, hi: f64) -> Result<Volume<S>> {
        if !(lo < hi) {
            return Err(CoreError::Precondition(format!("clip range [{lo}, {hi}] is empty")));
        }
        let (lo, hi) = (S::of(lo), S::of(hi));
        Ok(self.map(|v| v.max(lo).min(hi)))
    }

    /// Signed-permutation reorientation onto `target` codes. Values are
    /// moved, never interpolated.
    pub fn reorient(&self, target: &AxisCodes) -> Volume<S> {
        let tf = self.axes.transform_to(target);
        self.apply_transform(&tf, *target)
    }

    pub fn apply_transform(&self, tf: &AxisTransform, codes: AxisCodes) -> Volume<S> {
        if tf.is_identity() {
            let mut v = self.clone();
            v.axes = codes;
            return v;
        }
        let out_dims = tf.output_dims(self.dims);
        let spacing = tf.source_axis.map(|s| self.spacing[s]);
        let plane = out_dims[1] * out_dims[2];
        let mut voxels = vec![S::zero(); plane * out_dims[0]];
        voxels.par_chunks_mut(plane).enumerate().for_each(|(i, slab)| {
            for j in 0..out_dims[1] {
                for k in 0..out_dims[2] {
                    let src = tf.source_index(self.dims, [i, j, k]);
                    slab[j * out_dims[2] + k] = self.get(src);
                }
            }
        });
        self.with_voxels(out_dims, spacing, codes, voxels)
    }

    /// Transposes/flips into the canonical coronal layout
    /// ([`AxisCodes::CORONAL`]).
    pub fn standardize_coronal(&self) -> Result<Volume<S>> {
        if self.oblique {
            return Err(CoreError::Orientation(format!(
                "oblique volume (nearest codes {}) cannot be standardized by permutation",
                self.axes
            )));
        }
        Ok(self.reorient(&AxisCodes::CORONAL))
    }

    /// Min-max scaling to [0, 1]; a constant volume maps to zeros.
    pub fn minmax_normalize(&self) -> Volume<S> {
        let (lo, hi) = self.min_max();
        let range = hi - lo;
        if range <= S::zero() {
            return self.map(|_| S::zero());
        }
        self.map(|v| (v - lo) / range)
    }

    /// Aspect-preserving trilinear resize into a `target`³ cube, centered,
    /// padded with `fill`.
    pub fn letterbox_cube(&self, target: usize, fill: S) -> Result<Volume<S>> {
        if target == 0 {
            return Err(CoreError::Precondition("letterbox target must be positive".into()));
        }
        let scale = self
            .dims
            .iter()
            .map(|&d| target as f64 / d as f64)
            .fold(f64::INFINITY, f64::min);
        let inner = self
            .dims
            .map(|d| ((d as f64 * scale).round() as usize).clamp(1, target));
        let offset = inner.map(|n| (target - n) / 2);
        let taps: [Vec<Option<LinearTap>>; 3] = [0, 1, 2].map(|a| {
            let ratio = self.dims[a] as f64 / inner[a] as f64;
            (0..target)
                .map(|o| {
                    if o < offset[a] || o >= offset[a] + inner[a] {
                        None
                    } else {
                        let local = (o - offset[a]) as f64;
                        Some(LinearTap::at((local + 0.5) * ratio - 0.5, self.dims[a]))
                    }
                })
                .collect()
        });
        let plane = target * target;
        let mut voxels = vec![fill; plane * target];
        voxels.par_chunks_mut(plane).enumerate().for_each(|(i, slab)| {
            let Some(ti) = taps[0][i] else { return };
            for j in 0..target {
                let Some(tj) = taps[1][j] else { continue };
                for k in 0..target {
                    if let Some(tk) = taps[2][k] {
                        slab[j * target + k] = self.blend(&[ti, tj, tk]);
                    }
                }
            }
        });
        let spacing = [0, 1, 2].map(|a| self.spacing[a] * self.dims[a] as f64 / inner[a] as f64);
        Ok(self.with_voxels([target; 3], spacing, self.axes, voxels))
    }
}

fn checked_len(dims: [usize; 3]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| CoreError::Resource(format!("volume {dims:?} overflows addressable memory")))
}

/// Two-point linear interpolation stencil along one axis with edge clamping.
#[derive(Debug, Clone, Copy)]
struct LinearTap {
    lo: usize,
    hi: usize,
    frac: f64,
}

impl LinearTap {
    #[inline]
    fn at(pos: f64, n: usize) -> LinearTap {
        let max = (n - 1) as f64;
        let p = pos.clamp(0.0, max);
        let lo = p.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        LinearTap {
            lo,
            hi,
            frac: p - lo as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub target_spacing_mm: f64,
    pub max_output_voxels: u64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            target_spacing_mm: 0.5,
            max_output_voxels: 1_500_000_000,
        }
    }
}

impl ResampleConfig {
    pub fn with_spacing(target_spacing_mm: f64) -> Self {
        ResampleConfig {
            target_spacing_mm,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_spacing_mm.is_finite() && self.target_spacing_mm > 0.0) {
            return Err(CoreError::Config(format!(
                "target spacing must be positive, got {}",
                self.target_spacing_mm
            )));
        }
        if self.max_output_voxels == 0 {
            return Err(CoreError::Config("max_output_voxels must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3], spacing: [f64; 3]) -> Volume<f64> {
        Volume::from_fn(dims, spacing, AxisCodes::CORONAL, |[_, _, k]| k as f64).unwrap()
    }

    #[test]
    fn constant_volume_stays_constant() {
        let v = Volume::filled([5, 7, 3], [1.3, 0.7, 2.1], AxisCodes::RAS, 70.0f32).unwrap();
        let r = v.resample_isotropic(&ResampleConfig::with_spacing(0.5)).unwrap();
        assert!(r.voxels().iter().all(|&x| x == 70.0));
        assert_eq!(r.spacing(), [0.5; 3]);
    }

    #[test]
    fn extent_formula() {
        let v = Volume::filled([10, 10, 10], [1.0; 3], AxisCodes::RAS, 0.0f32).unwrap();
        let r = v.resample_isotropic(&ResampleConfig::default()).unwrap();
        assert_eq!(r.dims(), [20, 20, 20]);

        let v = Volume::filled([3, 1, 7], [0.2, 0.2, 1.5], AxisCodes::RAS, 0.0f32).unwrap();
        let r = v.resample_isotropic(&ResampleConfig::with_spacing(1.0)).unwrap();
        // round(0.6) = 1, max(1, round(0.2)) = 1, round(10.5) = 11
        assert_eq!(r.dims(), [1, 1, 11]);
    }

    #[test]
    fn linear_field_is_reproduced_away_from_borders() {
        let v = ramp([4, 4, 12], [1.0; 3]);
        let r = v.resample_isotropic(&ResampleConfig::with_spacing(0.5)).unwrap();
        let [_, _, n] = r.dims();
        for k in 1..n - 1 {
            let expect = (k as f64 + 0.5) * 0.5 - 0.5;
            let got = r.get([3, 2, k]);
            assert!((got - expect).abs() < 1e-5, "k={k}: {got} vs {expect}");
        }
    }

    #[test]
    fn resample_guard_trips() {
        let v = Volume::filled([10, 10, 10], [1.0; 3], AxisCodes::RAS, 0.0f32).unwrap();
        let cfg = ResampleConfig {
            target_spacing_mm: 0.5,
            max_output_voxels: 7999,
        };
        assert!(matches!(v.resample_isotropic(&cfg), Err(CoreError::Resource(_))));
    }

    #[test]
    fn clip_bounds() {
        let v = Volume::new([1, 1, 4], [1.0; 3], AxisCodes::RAS, vec![3000.0f32, -2000.0, 0.0, 1500.0]).unwrap();
        let c = v.clip_hu(HU_MIN, HU_MAX).unwrap();
        assert_eq!(c.voxels(), &[1500.0, -1024.0, 0.0, 1500.0]);
        assert!(v.clip_hu(5.0, 5.0).is_err());
    }

    #[test]
    fn coronal_identity_and_oblique_rejection() {
        let v = ramp([2, 3, 4], [1.0, 2.0, 3.0]);
        assert_eq!(v.standardize_coronal().unwrap(), v);
        let mut o = v.clone();
        o.set_oblique(true);
        assert!(matches!(o.standardize_coronal(), Err(CoreError::Orientation(_))));
    }

    #[test]
    fn letterbox_cube_pads_and_preserves_constant() {
        let v = Volume::filled([8, 4, 2], [1.0; 3], AxisCodes::CORONAL, 1.0f32).unwrap();
        let c = v.letterbox_cube(16, 0.0).unwrap();
        assert_eq!(c.dims(), [16, 16, 16]);
        // inner extent 16 x 8 x 4, centered
        assert_eq!(c.get([0, 4, 6]), 1.0);
        assert_eq!(c.get([15, 11, 9]), 1.0);
        assert_eq!(c.get([5, 3, 6]), 0.0);
        assert_eq!(c.get([5, 5, 5]), 0.0);
        let ones = c.voxels().iter().filter(|&&x| x == 1.0).count();
        assert_eq!(ones, 16 * 8 * 4);
    }
}
