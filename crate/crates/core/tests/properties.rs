use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xprojct_core::labels::{parse_labels, LabelFile};
use xprojct_core::nifti::{decode_nifti, encode_nifti, NiftiDatatype, WriteOptions};
use xprojct_core::phantom::{crop_coverage, generate_phantom, PhantomSpec};
use xprojct_core::projection::{minmax_normalize, project_coronal, resize_letterbox, Letterbox};
use xprojct_core::volume::{HU_MAX, HU_MIN};
use xprojct_core::{AxisCodes, Image, LabelVocabulary, ResampleConfig, Volume};

fn codes() -> impl Strategy<Value = AxisCodes> {
    (0..48usize).prop_map(|i| AxisCodes::all()[i])
}

prop_compose! {
    fn volume(max: usize)(dims in prop::array::uniform3(1..=max))
        (voxels in prop::collection::vec(-3000.0f32..3000.0, dims.iter().product::<usize>()),
         spacing in prop::array::uniform3(prop::sample::select(vec![0.5, 0.75, 1.0, 1.5, 3.0])),
         axes in codes(),
         dims in Just(dims)) -> Volume<f32> {
        Volume::new(dims, spacing, axes, voxels).unwrap()
    }
}

prop_compose! {
    fn image(max: usize)(h in 1..=max, w in 1..=max)
        (pixels in prop::collection::vec(-10.0f32..10.0, h * w), h in Just(h), w in Just(w)) -> Image<f32> {
        Image::new(h, w, pixels).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clip_is_idempotent_and_monotone(v in volume(6), shift in 0.0f32..500.0) {
        let c = v.clip_hu(HU_MIN, HU_MAX).unwrap();
        prop_assert_eq!(&c.clip_hu(HU_MIN, HU_MAX).unwrap(), &c);
        let higher = v.map(|x| x + shift).clip_hu(HU_MIN, HU_MAX).unwrap();
        for (a, b) in c.voxels().iter().zip(higher.voxels()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn resampled_values_stay_within_input_range(v in volume(6), t in 0.4f64..3.0) {
        let r = v.resample_isotropic(&ResampleConfig::with_spacing(t)).unwrap();
        let (lo, hi) = v.min_max();
        prop_assert!(r.voxels().iter().all(|&x| x >= lo && x <= hi));
        prop_assert_eq!(r.spacing(), [t; 3]);
    }

    #[test]
    fn standardization_permutes_voxels(v in volume(6)) {
        let c = v.standardize_coronal().unwrap();
        let mut a = v.voxels().to_vec();
        let mut b = c.voxels().to_vec();
        a.sort_by(f32::total_cmp);
        b.sort_by(f32::total_cmp);
        prop_assert_eq!(a, b);
        prop_assert_eq!(c.reorient(&v.axes()), v);
    }

    #[test]
    fn projection_sums_each_column(v in volume(8)) {
        let v = v.reorient(&AxisCodes::CORONAL).cast::<f64>();
        let img = project_coronal(&v).unwrap();
        let [d0, d1, d2] = v.dims();
        for z in 0..d0 {
            for x in 0..d2 {
                let mut acc = 0.0;
                for y in 0..d1 {
                    acc += v.get([z, y, x]);
                }
                prop_assert_eq!(img.get(z, x).to_bits(), acc.to_bits());
            }
        }
    }

    #[test]
    fn normalization_spans_unit_interval(img in image(12)) {
        let n = minmax_normalize(&img);
        let (lo, hi) = img.min_max();
        if lo < hi {
            prop_assert_eq!(n.min_max(), (0.0, 1.0));
        } else {
            prop_assert!(n.pixels().iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn letterbox_pads_with_zeros(img in image(20), th in 1usize..40, tw in 1usize..40) {
        let shifted = Image::new(img.height(), img.width(), img.pixels().iter().map(|p| p.abs() + 1.0).collect()).unwrap();
        let out = resize_letterbox(&shifted, th, tw).unwrap();
        let lb = Letterbox::fit(img.height(), img.width(), th, tw);
        prop_assert!(lb.inner_h == th || lb.inner_w == tw);
        for r in 0..th {
            for c in 0..tw {
                let inner = r >= lb.top && r < lb.top + lb.inner_h && c >= lb.left && c < lb.left + lb.inner_w;
                prop_assert_eq!(inner, out.get(r, c) != 0.0);
            }
        }
    }

    #[test]
    fn float_nifti_round_trip(v in volume(7)) {
        let bytes = encode_nifti(&v, &WriteOptions::default()).unwrap();
        let (back, header) = decode_nifti(&bytes).unwrap();
        prop_assert_eq!(back.voxels(), v.voxels());
        prop_assert_eq!(back.axes(), v.axes());
        prop_assert_eq!(back.spacing(), v.spacing());
        prop_assert_eq!(header.vox_offset, 352);
    }

    #[test]
    fn integer_storage_rescales_affinely(raw in prop::collection::vec(-16000i16..16000, 1..40),
                                         slope in prop::sample::select(vec![0.5f32, 1.0, 2.0, 4.0]),
                                         inter in prop::sample::select(vec![-1024.0f32, 0.0, 12.5])) {
        let hu: Vec<f32> = raw.iter().map(|&r| f32::from(r) * slope + inter).collect();
        let v = Volume::new([1, 1, hu.len()], [1.0; 3], AxisCodes::RAS, hu.clone()).unwrap();
        let opts = WriteOptions { datatype: NiftiDatatype::Int16, scl_slope: slope, scl_inter: inter };
        let (back, _) = decode_nifti(&encode_nifti(&v, &opts).unwrap()).unwrap();
        prop_assert_eq!(back.voxels(), &hu[..]);
    }

    #[test]
    fn label_json_keeps_region_order(flags in prop::collection::vec(any::<bool>(), 14)) {
        let vocab = LabelVocabulary::default();
        let mut label = LabelFile::from_flags("c", &vocab, &flags);
        label.regions.reverse();
        let text = serde_json::to_string(&label).unwrap();
        prop_assert_eq!(parse_labels(&text, &vocab).unwrap(), label);
    }
}

fn quiet_spec() -> PhantomSpec {
    PhantomSpec {
        noise_sigma: 0.0,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn phantom_labels_match_its_region_map(seed in any::<u64>(), mask in 1u16..(1 << 14)) {
        let vocab = LabelVocabulary::default();
        let spec = quiet_spec();
        let subset: Vec<usize> = (0..14).filter(|r| mask & (1 << r) != 0).collect();
        let p = generate_phantom(&spec, &vocab, &subset, "p", &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let counts = p.region_voxels();
        let present: Vec<&str> = (0..14).filter(|&r| counts[r] > 0).map(|r| vocab.name(r)).collect();
        prop_assert_eq!(&present, &p.label.regions.iter().map(String::as_str).collect::<Vec<_>>());
        for (v, &r) in p.volume.voxels().iter().zip(&p.region_map) {
            if r > 0 {
                let (lo, hi) = spec.recipes[r as usize - 1].bone_hu;
                prop_assert!(f64::from(*v) >= lo - 1e-3 && f64::from(*v) <= hi + 1e-3);
            } else {
                prop_assert!(f64::from(*v) <= spec.soft_tissue_hu.1);
            }
        }
    }

    #[test]
    fn crop_coverage_matches_voxel_count(seed in any::<u64>(),
                                         origin in prop::array::uniform3(0usize..16),
                                         extent in prop::array::uniform3(8usize..24)) {
        let vocab = LabelVocabulary::default();
        let p = generate_phantom(&quiet_spec(), &vocab, &(0..14).collect::<Vec<_>>(), "p",
                                 &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let dims = p.volume.dims();
        let origin = [0, 1, 2].map(|a| origin[a].min(dims[a] - extent[a]));
        let cov = crop_coverage(&p, origin, extent);
        let mut inside = [0usize; 14];
        let mut total = [0usize; 14];
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let r = p.region_map[(i * dims[1] + j) * dims[2] + k];
                    if r == 0 {
                        continue;
                    }
                    total[r as usize - 1] += 1;
                    let ijk = [i, j, k];
                    if (0..3).all(|a| ijk[a] >= origin[a] && ijk[a] < origin[a] + extent[a]) {
                        inside[r as usize - 1] += 1;
                    }
                }
            }
        }
        let crop: usize = extent.iter().product();
        for r in 0..14 {
            let expect = if inside[r] == 0 { 0.0 } else { inside[r] as f64 / total[r].min(crop) as f64 };
            prop_assert_eq!(cov[r], expect);
            prop_assert!(cov[r] <= 1.0);
        }
    }
}
