//! Bone-ROI histogram adjustment.
//!
//! The soft-tissue background is estimated as the median bin count inside a
//! search window of HU values. After subtracting that median from every bin
//! and clipping at zero, the highest window bin that still has mass marks the
//! start of the bone range; everything below it is pushed to air.
//!
//! "Intensities" of the histogram are read as bin counts, and the lower bound
//! is the *center* of the highest surviving window bin.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::volume::{Volume, HU_MAX, HU_MIN};

pub const DEFAULT_BINS: usize = 250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityHistogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
}

impl IntensityHistogram {
    /// Builds a histogram from explicit counts over a uniform range.
    pub fn from_counts(counts: Vec<u64>, lo: f64, hi: f64) -> Result<Self> {
        if counts.is_empty() || !(lo < hi) {
            return Err(CoreError::Config(format!(
                "histogram needs bins over a non-empty range, got {} bins on [{lo}, {hi}]",
                counts.len()
            )));
        }
        Ok(IntensityHistogram {
            edges: uniform_edges(lo, hi, counts.len()),
            counts,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    pub fn center(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin holding `v`: `edges[i] <= v < edges[i + 1]`, the top edge belonging
    /// to the last bin. Out-of-range values land in the end bins.
    pub fn bin_of(&self, v: f64) -> usize {
        let n = self.counts.len();
        let (lo, hi) = self.range();
        if v <= lo {
            return 0;
        }
        if v >= hi {
            return n - 1;
        }
        let mut i = (((v - lo) / (hi - lo)) * n as f64).floor() as usize;
        i = i.min(n - 1);
        // reconcile rounding with the stored edges
        while i > 0 && v < self.edges[i] {
            i -= 1;
        }
        while i + 1 < n && v >= self.edges[i + 1] {
            i += 1;
        }
        i
    }
}

fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|i| {
            if i == bins {
                hi
            } else {
                lo + (hi - lo) * i as f64 / bins as f64
            }
        })
        .collect()
}

/// HU histogram of a clipped volume with `bins` uniform bins over `[lo, hi]`.
pub fn compute_histogram<S: Scalar>(vol: &Volume<S>, bins: usize, lo: f64, hi: f64) -> Result<IntensityHistogram> {
    if vol.is_empty() {
        return Err(CoreError::Precondition("histogram of an empty volume".into()));
    }
    let mut hist = IntensityHistogram::from_counts(vec![0; bins], lo, hi)?;
    let mut counts = vec![0u64; bins];
    for v in vol.voxels() {
        counts[hist.bin_of(v.as_f64())] += 1;
    }
    hist.counts = counts;
    Ok(hist)
}

/// The 250-bin histogram over the post-clip range [-1024, 1500] HU.
pub fn default_histogram<S: Scalar>(vol: &Volume<S>) -> Result<IntensityHistogram> {
    compute_histogram(vol, DEFAULT_BINS, HU_MIN, HU_MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiSearchWindow {
    pub search_lo: f64,
    pub search_hi: f64,
    pub upper: f64,
}

impl Default for RoiSearchWindow {
    fn default() -> Self {
        RoiSearchWindow {
            search_lo: -400.0,
            search_hi: 400.0,
            upper: HU_MAX,
        }
    }
}

impl RoiSearchWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.search_lo < self.search_hi && self.search_hi < self.upper) {
            return Err(CoreError::Config(format!(
                "ROI window needs search_lo < search_hi < upper, got {} / {} / {}",
                self.search_lo, self.search_hi, self.upper
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBounds {
    pub lower_hu: f64,
    pub upper_hu: f64,
    /// Set when no window bin survived the median subtraction.
    pub fallback: bool,
}

/// Inspection record of one bound detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiDebug {
    pub bin_centers: Vec<f64>,
    pub counts: Vec<u64>,
    pub adjusted: Vec<f64>,
    pub window_bins: (usize, usize),
    pub median: f64,
    pub lower_hu: f64,
    pub upper_hu: f64,
    pub fallback: bool,
}

pub fn detect_roi_bounds(hist: &IntensityHistogram, win: &RoiSearchWindow) -> Result<RoiBounds> {
    detect_roi_bounds_debug(hist, win).map(|d| RoiBounds {
        lower_hu: d.lower_hu,
        upper_hu: d.upper_hu,
        fallback: d.fallback,
    })
}

pub fn detect_roi_bounds_debug(hist: &IntensityHistogram, win: &RoiSearchWindow) -> Result<RoiDebug> {
    win.validate()?;
    let (lo, hi) = hist.range();
    if win.search_lo < lo || win.search_hi > hi {
        return Err(CoreError::Config(format!(
            "search window [{}, {}] lies outside histogram range [{lo}, {hi}]",
            win.search_lo, win.search_hi
        )));
    }
    let centers: Vec<f64> = (0..hist.bins()).map(|i| hist.center(i)).collect();
    let first = centers.iter().position(|&c| c >= win.search_lo);
    let last = centers.iter().rposition(|&c| c <= win.search_hi);
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) if f <= l => (f, l),
        _ => {
            return Err(CoreError::Config(format!(
                "no bin center falls inside [{}, {}]",
                win.search_lo, win.search_hi
            )))
        }
    };

    let mut window: Vec<u64> = hist.counts()[first..=last].to_vec();
    window.sort_unstable();
    let n = window.len();
    let median = if n % 2 == 1 {
        window[n / 2] as f64
    } else {
        0.5 * (window[n / 2 - 1] as f64 + window[n / 2] as f64)
    };

    let adjusted: Vec<f64> = hist.counts().iter().map(|&c| (c as f64 - median).max(0.0)).collect();
    let top = (first..=last).rev().find(|&i| adjusted[i] > 0.0);
    let (lower_hu, fallback) = match top {
        Some(i) => (centers[i], false),
        None => (win.search_lo, true),
    };
    Ok(RoiDebug {
        bin_centers: centers,
        counts: hist.counts().to_vec(),
        adjusted,
        window_bins: (first, last),
        median,
        lower_hu,
        upper_hu: win.upper,
        fallback,
    })
}

/// Voxels below the lower bound become air (-1024 HU); voxels above the
/// upper bound are clamped to it.
pub fn apply_roi<S: Scalar>(vol: &Volume<S>, b: &RoiBounds) -> Result<Volume<S>> {
    if !(b.lower_hu < b.upper_hu) {
        return Err(CoreError::Precondition(format!(
            "ROI bounds [{}, {}] are empty",
            b.lower_hu, b.upper_hu
        )));
    }
    let (lower, upper, air) = (S::of(b.lower_hu), S::of(b.upper_hu), S::of(HU_MIN));
    Ok(vol.map(|v| {
        if v < lower {
            air
        } else if v > upper {
            upper
        } else {
            v
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::AxisCodes;

    fn vol(values: Vec<f32>) -> Volume<f32> {
        Volume::new([1, 1, values.len()], [1.0; 3], AxisCodes::CORONAL, values).unwrap()
    }

    #[test]
    fn default_window_spans_bins_62_to_140() {
        let h = IntensityHistogram::from_counts(vec![0; 250], HU_MIN, HU_MAX).unwrap();
        let d = detect_roi_bounds_debug(&h, &RoiSearchWindow::default()).unwrap();
        assert_eq!(d.window_bins, (62, 140));
        assert!((h.edges()[1] - h.edges()[0] - 10.096).abs() < 1e-9);
    }

    #[test]
    fn all_air_volume_fills_first_bin() {
        let h = default_histogram(&vol(vec![-1024.0; 9])).unwrap();
        assert_eq!(h.counts()[0], 9);
        assert_eq!(h.total(), 9);
    }

    #[test]
    fn top_edge_goes_to_last_bin() {
        let h = default_histogram(&vol(vec![1500.0])).unwrap();
        assert_eq!(h.counts()[249], 1);
    }

    #[test]
    fn uniform_window_falls_back() {
        let h = IntensityHistogram::from_counts(vec![17; 250], HU_MIN, HU_MAX).unwrap();
        let b = detect_roi_bounds(&h, &RoiSearchWindow::default()).unwrap();
        assert_eq!(b.lower_hu, -400.0);
        assert!(b.fallback);
        assert_eq!(b.upper_hu, 1500.0);
    }

    #[test]
    fn soft_tissue_peak_with_tail() {
        // Mid-level plateau across the window, a tall soft-tissue peak around
        // 0 HU and a tail that ends at bin 130 (center ~293.5 HU).
        let mut c = vec![0u64; 250];
        for i in 62..=140 {
            c[i] = 50;
        }
        for i in 95..=110 {
            c[i] = 5000;
        }
        for i in 111..=130 {
            c[i] = 60 + (130 - i) as u64;
        }
        let h = IntensityHistogram::from_counts(c, HU_MIN, HU_MAX).unwrap();
        let d = detect_roi_bounds_debug(&h, &RoiSearchWindow::default()).unwrap();
        assert_eq!(d.median, 50.0);
        assert!((d.lower_hu - h.center(130)).abs() < 1e-12);
        assert!((d.lower_hu - 293.528).abs() < 1e-3);
    }

    #[test]
    fn even_window_median_averages_middle_counts() {
        let h = IntensityHistogram::from_counts(vec![0, 1, 5, 9], 0.0, 4.0).unwrap();
        let win = RoiSearchWindow {
            search_lo: 0.0,
            search_hi: 4.0,
            upper: 5.0,
        };
        let d = detect_roi_bounds_debug(&h, &win).unwrap();
        assert_eq!(d.median, 3.0);
        assert_eq!(d.adjusted, vec![0.0, 0.0, 2.0, 6.0]);
        assert_eq!(d.lower_hu, 3.5);
    }

    #[test]
    fn window_outside_range_is_rejected() {
        let h = IntensityHistogram::from_counts(vec![1; 250], HU_MIN, HU_MAX).unwrap();
        let win = RoiSearchWindow {
            search_lo: -2000.0,
            search_hi: 0.0,
            upper: 1500.0,
        };
        assert!(matches!(detect_roi_bounds(&h, &win), Err(CoreError::Config(_))));
        let inverted = RoiSearchWindow {
            search_lo: 10.0,
            search_hi: 0.0,
            upper: 1500.0,
        };
        assert!(detect_roi_bounds(&h, &inverted).is_err());
    }

    #[test]
    fn apply_roi_thresholds() {
        let b = RoiBounds {
            lower_hu: 150.0,
            upper_hu: 1500.0,
            fallback: false,
        };
        let out = apply_roi(&vol(vec![100.0, 150.0, 1600.0, 700.0]), &b).unwrap();
        assert_eq!(out.voxels(), &[-1024.0, 150.0, 1500.0, 700.0]);
        assert_eq!(apply_roi(&out, &b).unwrap(), out);

        let vacuous = RoiBounds {
            lower_hu: -1024.0,
            ..b
        };
        let out = apply_roi(&vol(vec![-1024.0, -500.0, 2000.0]), &vacuous).unwrap();
        assert_eq!(out.voxels(), &[-1024.0, -500.0, 1500.0]);
    }
}
