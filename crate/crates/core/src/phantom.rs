//! Synthetic labeled CT phantoms.
//!
//! Phantoms are built in the canonical coronal layout: an elliptic soft-tissue
//! body in air, with one bone primitive per requested region. Each region has
//! a fixed slot in a head-to-foot grid and a distinct planar footprint
//! (ring, cross, stacked blocks, ...) extruded through a few voxels of depth,
//! so regions are distinguishable from a coronal projection alone.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::io_util::write_atomic;
use crate::labels::{write_labels, LabelFile, LabelVocabulary, REGION_COUNT};
use crate::nifti::{write_nifti_with, NiftiDatatype, WriteOptions};
use crate::orientation::AxisCodes;
use crate::volume::{Volume, HU_MAX, HU_MIN};

/// Smallest accepted patch extent along every axis.
pub const MIN_PATCH_EXTENT: usize = 8;

/// Planar footprint in normalized coordinates `(u, v) ∈ [-1, 1]²`, where
/// `u` runs head to foot and `v` right to left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Glyph {
    Ring,
    StackedBlocks,
    HorizontalBar,
    Ribs,
    VerticalBar,
    DiagonalPair,
    TwinBars,
    Chevron,
    Cross,
    Diagonal,
    Disk,
    Beam,
    Triangle,
    Ell,
}

impl Glyph {
    pub fn contains(self, u: f64, v: f64) -> bool {
        if u.abs() > 1.0 || v.abs() > 1.0 {
            return false;
        }
        let r = (u * u + v * v).sqrt();
        let band = |x: f64| (-1.0..=-0.55).contains(&x) || (-0.2..=0.2).contains(&x) || (0.55..=1.0).contains(&x);
        match self {
            Glyph::Ring => (0.55..=1.0).contains(&r),
            Glyph::StackedBlocks => v.abs() <= 0.4 && band(u),
            Glyph::HorizontalBar => u.abs() <= 0.3,
            Glyph::Ribs => band(u),
            Glyph::VerticalBar => v.abs() <= 0.3,
            Glyph::DiagonalPair => (u <= -0.1 && v <= -0.1) || (u >= 0.1 && v >= 0.1),
            Glyph::TwinBars => (0.4..=0.9).contains(&v.abs()),
            Glyph::Chevron => (v.abs() - (u + 1.0) / 2.0).abs() <= 0.25,
            Glyph::Cross => u.abs() <= 0.25 || v.abs() <= 0.25,
            Glyph::Diagonal => (u - v).abs() <= 0.35,
            Glyph::Disk => r <= 0.65,
            Glyph::Beam => u.abs() >= 0.65 || v.abs() <= 0.25,
            Glyph::Triangle => v.abs() <= (u + 1.0) / 2.0,
            Glyph::Ell => v <= -0.4 || u >= 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecipe {
    pub glyph: Glyph,
    /// Slot center as fractions of the (superior-inferior, right-left) extent.
    pub center: [f64; 2],
    /// Half-size of the footprint in voxels.
    pub half_size: (f64, f64),
    /// Half-depth of the extrusion along the anterior-posterior axis.
    pub half_depth: (f64, f64),
    pub bone_hu: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    /// Canonical extents (superior-inferior, anterior-posterior, right-left).
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub soft_tissue_hu: (f64, f64),
    pub air_hu: f64,
    pub noise_sigma: f64,
    /// Random displacement of each primitive around its slot, in voxels.
    pub jitter: f64,
    pub recipes: Vec<RegionRecipe>,
    /// Probability that a region is included in a full-body sample.
    pub region_probability: f64,
    pub coverage_threshold: f64,
    /// Regions whose coverage falls in `(ambiguity_floor, coverage_threshold)`
    /// make a patch ambiguous; such crops are redrawn.
    pub ambiguity_floor: f64,
    pub patch_extent: [(usize, usize); 3],
    /// Orientation the samples are stored in.
    pub storage_axes: AxisCodes,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        let glyphs = [
            Glyph::Ring,
            Glyph::StackedBlocks,
            Glyph::HorizontalBar,
            Glyph::Ribs,
            Glyph::VerticalBar,
            Glyph::DiagonalPair,
            Glyph::TwinBars,
            Glyph::Chevron,
            Glyph::Cross,
            Glyph::Diagonal,
            Glyph::Disk,
            Glyph::Beam,
            Glyph::Triangle,
            Glyph::Ell,
        ];
        let recipes = glyphs
            .iter()
            .enumerate()
            .map(|(i, &glyph)| RegionRecipe {
                glyph,
                center: [((i / 2) as f64 + 0.5) / 7.0, if i % 2 == 0 { 0.31 } else { 0.69 }],
                half_size: (5.0, 7.0),
                half_depth: (2.0, 4.0),
                bone_hu: (450.0, 1500.0),
            })
            .collect();
        PhantomSpec {
            dims: [128, 24, 64],
            spacing_mm: 2.0,
            soft_tissue_hu: (-100.0, 100.0),
            air_hu: -1000.0,
            noise_sigma: 20.0,
            jitter: 1.5,
            recipes,
            region_probability: 0.5,
            coverage_threshold: 0.25,
            ambiguity_floor: 0.02,
            patch_extent: [(32, 80), (16, 24), (24, 64)],
            storage_axes: AxisCodes::RAS,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self, vocab: &LabelVocabulary) -> Result<()> {
        let in_hu = |(a, b): (f64, f64)| a <= b && a >= HU_MIN && b <= HU_MAX;
        if self.recipes.len() != vocab.len() {
            return Err(CoreError::Config(format!(
                "{} region recipes for a vocabulary of {}",
                self.recipes.len(),
                vocab.len()
            )));
        }
        if self.dims.iter().any(|&d| d < MIN_PATCH_EXTENT) || !(self.spacing_mm > 0.0) {
            return Err(CoreError::Config(format!("phantom dims {:?} too small", self.dims)));
        }
        if !in_hu(self.soft_tissue_hu) || !(HU_MIN..=HU_MAX).contains(&self.air_hu) {
            return Err(CoreError::Config("tissue HU ranges must lie in [-1024, 1500]".into()));
        }
        for r in &self.recipes {
            if !in_hu(r.bone_hu) || r.bone_hu.0 < 300.0 {
                return Err(CoreError::Config(format!("bone HU {:?} outside [300, 1500]", r.bone_hu)));
            }
            if !(r.half_size.0 > 0.0 && r.half_size.0 <= r.half_size.1)
                || !(r.half_depth.0 > 0.0 && r.half_depth.0 <= r.half_depth.1)
            {
                return Err(CoreError::Config("primitive size ranges must be positive and ordered".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.region_probability)
            || !(0.0 < self.coverage_threshold && self.coverage_threshold <= 1.0)
            || !(0.0..self.coverage_threshold).contains(&self.ambiguity_floor)
        {
            return Err(CoreError::Config("probabilities and coverage fractions must lie in [0, 1]".into()));
        }
        for (a, &(lo, hi)) in self.patch_extent.iter().enumerate() {
            if lo < MIN_PATCH_EXTENT || lo > hi {
                return Err(CoreError::Config(format!("patch extent range {:?} on axis {a} is invalid", (lo, hi))));
            }
        }
        if self.noise_sigma < 0.0 || self.jitter < 0.0 {
            return Err(CoreError::Config("noise and jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// A phantom in canonical layout with its per-voxel region map
/// (`0` = no bone, `k + 1` = region `k`).
#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume<f32>,
    pub region_map: Vec<u8>,
    pub label: LabelFile,
}

impl Phantom {
    pub fn region_voxels(&self) -> [usize; REGION_COUNT] {
        let mut counts = [0usize; REGION_COUNT];
        for &r in &self.region_map {
            if r > 0 {
                counts[r as usize - 1] += 1;
            }
        }
        counts
    }

    /// Inclusive-exclusive bounding box `(lo, hi)` of a region's voxels.
    pub fn bounding_box(&self, region: usize) -> Option<([usize; 3], [usize; 3])> {
        let [_, d1, d2] = self.volume.dims();
        let tag = region as u8 + 1;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut found = false;
        for (idx, &r) in self.region_map.iter().enumerate() {
            if r == tag {
                found = true;
                let ijk = [idx / (d1 * d2), (idx / d2) % d1, idx % d2];
                for a in 0..3 {
                    lo[a] = lo[a].min(ijk[a]);
                    hi[a] = hi[a].max(ijk[a] + 1);
                }
            }
        }
        found.then_some((lo, hi))
    }

    fn centroid(&self, region: usize) -> Option<[f64; 3]> {
        let [_, d1, d2] = self.volume.dims();
        let tag = region as u8 + 1;
        let (mut sum, mut n) = ([0.0f64; 3], 0usize);
        for (idx, &r) in self.region_map.iter().enumerate() {
            if r == tag {
                let ijk = [idx / (d1 * d2), (idx / d2) % d1, idx % d2];
                for a in 0..3 {
                    sum[a] += ijk[a] as f64;
                }
                n += 1;
            }
        }
        (n > 0).then(|| sum.map(|s| s / n as f64))
    }

    /// The sample as stored on disk: reoriented to `axes`.
    pub fn storage_volume(&self, axes: &AxisCodes) -> Volume<f32> {
        self.volume.reorient(axes)
    }

    /// The storage volume rounded to 16-bit integers, exactly as
    /// [`write_dataset`] writes it.
    pub fn quantized_volume(&self, axes: &AxisCodes) -> Volume<f32> {
        self.storage_volume(axes).map(|v| v.round().clamp(-32768.0, 32767.0))
    }
}

/// Builds a phantom containing exactly the regions in `subset`.
pub fn generate_phantom<R: Rng + ?Sized>(
    spec: &PhantomSpec,
    vocab: &LabelVocabulary,
    subset: &[usize],
    case_id: &str,
    rng: &mut R,
) -> Result<Phantom> {
    spec.validate(vocab)?;
    let regions: BTreeSet<usize> = subset.iter().copied().collect();
    if regions.is_empty() {
        return Err(CoreError::Precondition("phantom needs at least one region".into()));
    }
    if let Some(&bad) = regions.iter().find(|&&r| r >= vocab.len()) {
        return Err(CoreError::Vocabulary(format!("region index {bad} outside vocabulary")));
    }
    let [d0, d1, d2] = spec.dims;
    let tissue = rng.random_range(spec.soft_tissue_hu.0..=spec.soft_tissue_hu.1);
    let (cy, cx) = ((d1 as f64 - 1.0) / 2.0, (d2 as f64 - 1.0) / 2.0);
    let (ry, rx) = (0.45 * d1 as f64, 0.47 * d2 as f64);
    let mut hu = vec![0.0f32; d0 * d1 * d2];
    let mut region_map = vec![0u8; d0 * d1 * d2];
    for j in 0..d1 {
        for k in 0..d2 {
            let (y, x) = ((j as f64 - cy) / ry, (k as f64 - cx) / rx);
            let value = if y * y + x * x <= 1.0 { tissue } else { spec.air_hu };
            for i in 0..d0 {
                hu[(i * d1 + j) * d2 + k] = value as f32;
            }
        }
    }
    for &region in &regions {
        let recipe = &spec.recipes[region];
        let mut draw = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..hi) };
        let h = draw(recipe.half_size);
        let half = [h, h * draw((0.9, 1.1))];
        let depth = draw(recipe.half_depth);
        let bone = draw(recipe.bone_hu);
        let center = [
            recipe.center[0] * d0 as f64 + draw((-spec.jitter, spec.jitter)),
            cy,
            recipe.center[1] * d2 as f64 + draw((-spec.jitter, spec.jitter)),
        ];
        let range = |c: f64, r: f64, n: usize| {
            let lo = (c - r).floor().max(0.0) as usize;
            let hi = ((c + r).ceil() as usize + 1).min(n);
            lo..hi
        };
        for i in range(center[0], half[0], d0) {
            let u = (i as f64 - center[0]) / half[0];
            for k in range(center[2], half[1], d2) {
                let v = (k as f64 - center[2]) / half[1];
                if !recipe.glyph.contains(u, v) {
                    continue;
                }
                for j in range(center[1], depth, d1) {
                    if (j as f64 - center[1]).abs() <= depth {
                        let idx = (i * d1 + j) * d2 + k;
                        hu[idx] = bone as f32;
                        region_map[idx] = region as u8 + 1;
                    }
                }
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| CoreError::Config(e.to_string()))?;
        for v in &mut hu {
            *v += noise.sample(rng) as f32;
        }
    }
    let volume = Volume::new(spec.dims, [spec.spacing_mm; 3], AxisCodes::CORONAL, hu)?
        .with_provenance(format!("phantom {case_id}"));
    let flags: Vec<bool> = (0..vocab.len()).map(|r| regions.contains(&r)).collect();
    Ok(Phantom {
        volume,
        region_map,
        label: LabelFile::from_flags(case_id, vocab, &flags),
    })
}

/// Per-region coverage of a crop: voxels inside divided by the smaller of
/// the region's total voxels and the crop's voxels. A crop holding a whole
/// region, or lying entirely inside one, has coverage 1.
pub fn crop_coverage(phantom: &Phantom, origin: [usize; 3], extent: [usize; 3]) -> [f64; REGION_COUNT] {
    let [_, d1, d2] = phantom.volume.dims();
    let mut inside = [0usize; REGION_COUNT];
    for i in origin[0]..origin[0] + extent[0] {
        for j in origin[1]..origin[1] + extent[1] {
            let row = (i * d1 + j) * d2;
            for &r in &phantom.region_map[row + origin[2]..row + origin[2] + extent[2]] {
                if r > 0 {
                    inside[r as usize - 1] += 1;
                }
            }
        }
    }
    let total = phantom.region_voxels();
    let crop_voxels: usize = extent.iter().product();
    let mut coverage = [0.0; REGION_COUNT];
    for r in 0..REGION_COUNT {
        if inside[r] > 0 {
            coverage[r] = inside[r] as f64 / total[r].min(crop_voxels) as f64;
        }
    }
    coverage
}

/// Extracts an axis-aligned box and relabels it by coverage.
pub fn crop_box(
    phantom: &Phantom,
    vocab: &LabelVocabulary,
    origin: [usize; 3],
    extent: [usize; 3],
    threshold: f64,
    case_id: &str,
) -> Result<Phantom> {
    let dims = phantom.volume.dims();
    if extent.iter().any(|&e| e < MIN_PATCH_EXTENT) {
        return Err(CoreError::Precondition(format!(
            "crop {extent:?} is smaller than {MIN_PATCH_EXTENT}³ voxels"
        )));
    }
    if (0..3).any(|a| origin[a] + extent[a] > dims[a]) {
        return Err(CoreError::Precondition(format!(
            "crop at {origin:?} of {extent:?} exceeds volume {dims:?}"
        )));
    }
    let [_, d1, d2] = dims;
    let mut voxels = Vec::with_capacity(extent.iter().product());
    let mut region_map = Vec::with_capacity(voxels.capacity());
    for i in origin[0]..origin[0] + extent[0] {
        for j in origin[1]..origin[1] + extent[1] {
            let row = (i * d1 + j) * d2 + origin[2];
            voxels.extend_from_slice(&phantom.volume.voxels()[row..row + extent[2]]);
            region_map.extend_from_slice(&phantom.region_map[row..row + extent[2]]);
        }
    }
    let coverage = crop_coverage(phantom, origin, extent);
    let flags: Vec<bool> = (0..vocab.len())
        .map(|r| phantom.label.regions.iter().any(|n| vocab.index_of(n).ok() == Some(r)) && coverage[r] >= threshold)
        .collect();
    let volume = Volume::new(extent, phantom.volume.spacing(), phantom.volume.axes(), voxels)?
        .with_provenance(format!("phantom {case_id}"));
    Ok(Phantom {
        volume,
        region_map,
        label: LabelFile::from_flags(case_id, vocab, &flags),
    })
}

/// Random crop centered on the centroid of a randomly chosen present region,
/// with extents drawn from the spec's patch ranges and shifted inside the
/// volume. Returns `None` when the crop is ambiguous or labels nothing.
pub fn crop_patch<R: Rng + ?Sized>(
    phantom: &Phantom,
    spec: &PhantomSpec,
    vocab: &LabelVocabulary,
    case_id: &str,
    rng: &mut R,
) -> Result<Option<Phantom>> {
    let counts = phantom.region_voxels();
    let present: Vec<usize> = (0..vocab.len()).filter(|&r| counts[r] > 0).collect();
    let Some(&anchor) = present.choose(rng) else {
        return Err(CoreError::Precondition("phantom has no regions to crop around".into()));
    };
    let centroid = phantom.centroid(anchor).expect("present region has voxels");
    let dims = phantom.volume.dims();
    let mut origin = [0usize; 3];
    let mut extent = [0usize; 3];
    for a in 0..3 {
        let (lo, hi) = spec.patch_extent[a];
        extent[a] = rng.random_range(lo.min(dims[a])..=hi.min(dims[a]));
        let start = (centroid[a] - extent[a] as f64 / 2.0).round().max(0.0) as usize;
        origin[a] = start.min(dims[a] - extent[a]);
    }
    let coverage = crop_coverage(phantom, origin, extent);
    let ambiguous = coverage
        .iter()
        .any(|&c| c > spec.ambiguity_floor && c < spec.coverage_threshold);
    let patch = crop_box(phantom, vocab, origin, extent, spec.coverage_threshold, case_id)?;
    Ok((!ambiguous && !patch.label.regions.is_empty()).then_some(patch))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    FullBody,
    Patch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub source: SampleSource,
    pub index: u64,
    pub split: Split,
    pub label: LabelFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Seed actually used; differs from the requested one when coverage
    /// of the vocabulary forced a regeneration.
    pub seed: u64,
    pub spec: PhantomSpec,
    pub entries: Vec<ManifestEntry>,
}

/// Split sizes for `n` samples: train `ceil(0.7 n)`, validation
/// `floor(0.15 n)`, the remainder to test. Each count is then within one
/// sample of its exact share.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = (n * 70).div_ceil(100);
    let val = (n * 15) / 100;
    (train, val, n - train - val)
}

fn sample_rng(seed: u64, source: SampleSource, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = match source {
        SampleSource::FullBody => 1u64,
        SampleSource::Patch => 2u64,
    };
    rng.set_stream((tag << 48) | index);
    rng
}

fn random_subset<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<usize> {
    loop {
        let subset: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < p).collect();
        if !subset.is_empty() {
            return subset;
        }
    }
}

const MAX_CROP_ATTEMPTS: usize = 500;

/// Deterministically regenerates one sample of a dataset.
pub fn generate_sample(
    spec: &PhantomSpec,
    vocab: &LabelVocabulary,
    seed: u64,
    source: SampleSource,
    index: u64,
) -> Result<Phantom> {
    let mut rng = sample_rng(seed, source, index);
    let id = sample_id(source, index);
    match source {
        SampleSource::FullBody => {
            let subset = random_subset(vocab.len(), spec.region_probability, &mut rng);
            generate_phantom(spec, vocab, &subset, &id, &mut rng)
        }
        SampleSource::Patch => {
            for _ in 0..MAX_CROP_ATTEMPTS {
                let subset = random_subset(vocab.len(), spec.region_probability.max(0.5), &mut rng);
                let parent = generate_phantom(spec, vocab, &subset, &id, &mut rng)?;
                for _ in 0..20 {
                    if let Some(patch) = crop_patch(&parent, spec, vocab, &id, &mut rng)? {
                        return Ok(patch);
                    }
                }
            }
            Err(CoreError::Resource(format!(
                "no unambiguous patch found for {id}; widen the patch extents"
            )))
        }
    }
}

pub fn sample_id(source: SampleSource, index: u64) -> String {
    match source {
        SampleSource::FullBody => format!("full_{index:05}"),
        SampleSource::Patch => format!("patch_{index:05}"),
    }
}

const MAX_SEED_ATTEMPTS: u64 = 16;

/// Generates labels and split assignments for `n_full` full-body and
/// `n_patches` patch samples. Each source is split on its own. Volumes are
/// not kept; [`generate_sample`] rebuilds any entry on demand.
pub fn generate_dataset(
    spec: &PhantomSpec,
    vocab: &LabelVocabulary,
    n_full: usize,
    n_patches: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    spec.validate(vocab)?;
    for (n, what) in [(n_full, "full-body"), (n_patches, "patch")] {
        if n != 0 && n < 10 {
            return Err(CoreError::Precondition(format!("{what} count {n} is below 10")));
        }
    }
    if n_full + n_patches == 0 {
        return Err(CoreError::Precondition("dataset would be empty".into()));
    }
    let mut last_missing = Vec::new();
    for attempt in 0..MAX_SEED_ATTEMPTS {
        let effective = seed.wrapping_add(attempt);
        let mut entries = Vec::with_capacity(n_full + n_patches);
        for (source, n) in [(SampleSource::FullBody, n_full), (SampleSource::Patch, n_patches)] {
            let labels: Vec<LabelFile> = (0..n as u64)
                .map(|i| generate_sample(spec, vocab, effective, source, i).map(|p| p.label))
                .collect::<Result<_>>()?;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut sample_rng(effective, source, u64::MAX >> 16));
            let (train, val, _) = split_counts(n);
            let mut split_of = vec![Split::Test; n];
            for (rank, &i) in order.iter().enumerate() {
                split_of[i] = if rank < train {
                    Split::Train
                } else if rank < train + val {
                    Split::Val
                } else {
                    Split::Test
                };
            }
            for (i, label) in labels.into_iter().enumerate() {
                entries.push(ManifestEntry {
                    id: sample_id(source, i as u64),
                    source,
                    index: i as u64,
                    split: split_of[i],
                    label,
                    image: None,
                });
            }
        }
        let seen: BTreeSet<&str> = entries
            .iter()
            .filter(|e| e.split == Split::Train)
            .flat_map(|e| e.label.regions.iter().map(String::as_str))
            .collect();
        last_missing = vocab
            .names()
            .iter()
            .filter(|n| !seen.contains(n.as_str()))
            .cloned()
            .collect();
        if last_missing.is_empty() {
            return Ok(DatasetManifest {
                seed: effective,
                spec: spec.clone(),
                entries,
            });
        }
        log::warn!("seed {effective}: regions {last_missing:?} absent from training split, retrying");
    }
    Err(CoreError::Resource(format!(
        "regions {last_missing:?} never reached the training split"
    )))
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn materialize(&self, vocab: &LabelVocabulary, entry: &ManifestEntry) -> Result<Phantom> {
        generate_sample(&self.spec, vocab, self.seed, entry.source, entry.index)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DatasetManifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }
}

/// Writes every sample as `images/<id>.nii` (16-bit, stored in the spec's
/// orientation) plus `labels/<id>.json`, and the manifest as
/// `manifest.json`. Image paths in the manifest are relative to `dir`.
pub fn write_dataset(manifest: &mut DatasetManifest, vocab: &LabelVocabulary, dir: &Path) -> Result<()> {
    for sub in ["images", "labels"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| CoreError::io(&d, e))?;
    }
    let opts = WriteOptions {
        datatype: NiftiDatatype::Int16,
        ..Default::default()
    };
    let axes = manifest.spec.storage_axes;
    for i in 0..manifest.entries.len() {
        let phantom = manifest.materialize(vocab, &manifest.entries[i])?;
        let entry = &mut manifest.entries[i];
        let rel = PathBuf::from("images").join(format!("{}.nii", entry.id));
        let stored = phantom.quantized_volume(&axes);
        write_nifti_with(&stored, dir.join(&rel), &opts)?;
        write_labels(&entry.label, vocab, dir.join("labels").join(format!("{}.json", entry.id)))?;
        entry.image = Some(rel);
    }
    manifest.save(dir.join("manifest.json"))
}
