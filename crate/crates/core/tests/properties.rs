use isoscope_core::io::{load_volume, save_volume};
use isoscope_core::metrics::{
    distance_field, mann_whitney_u, mean_pairwise_similarity, nmi_of, similarity_matrix,
    vocabulary_size, CaptionCorpus, DistanceField, TermFrequencyEmbedder,
};
use isoscope_core::VolumeDataset;
use proptest::prelude::*;

fn volume() -> impl Strategy<Value = VolumeDataset> {
    (2usize..6, 2usize..6, 2usize..6).prop_flat_map(|(x, y, z)| {
        prop::collection::vec(-10.0f64..10.0, x * y * z).prop_map(move |v| {
            VolumeDataset::new("p", [x, y, z], [1.0; 3], [0.0; 3], "s", v).unwrap()
        })
    })
}

fn caption() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["skull", "bone", "Nose", "teeth", "a"]), 0..5)
        .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nmi_is_symmetric_and_bounded(
        a in prop::collection::vec(-5.0f64..5.0, 1..200),
        seed in any::<u64>(),
        bins in 1usize..32,
    ) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| (x * 3.0 + (seed % 7) as f64 * i as f64).sin()).collect();
        let ab = nmi_of(&a, &b, bins).unwrap();
        prop_assert_eq!(ab, nmi_of(&b, &a, bins).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((nmi_of(&a, &a, bins).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distance_is_nonnegative_with_zero_seeds(vol in volume(), t in 0.0f64..1.0) {
        let (lo, hi) = vol.scalar_range();
        let iso = lo + (hi - lo) * t;
        let d = distance_field(&vol, iso, 1).unwrap();
        prop_assert!(d.values.iter().all(|&v| v >= 0.0));
        let [nx, ny, nz] = vol.dims();
        for z in 0..nz { for y in 0..ny { for x in 0..nx {
            let s = vol.value(x, y, z) >= iso;
            let straddles = [(1i64,0i64,0i64),(-1,0,0),(0,1,0),(0,-1,0),(0,0,1),(0,0,-1)].iter().any(|&(dx,dy,dz)| {
                let (a, b, c) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                a >= 0 && b >= 0 && c >= 0 && (a as usize) < nx && (b as usize) < ny && (c as usize) < nz
                    && (vol.value(a as usize, b as usize, c as usize) >= iso) != s
            });
            prop_assert_eq!(d.get(x, y, z) == 0.0, straddles);
        }}}
    }

    #[test]
    fn permuting_fields_permutes_matrix(vol in volume(), isos in prop::collection::vec(-10.0f64..10.0, 2..6), rot in 0usize..6) {
        let fields: Vec<DistanceField> = isos.iter().map(|&v| distance_field(&vol, v, 1).unwrap()).collect();
        let m = similarity_matrix(&fields, 16).unwrap();
        let k = fields.len();
        let perm: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
        let pf: Vec<DistanceField> = perm.iter().map(|&i| fields[i].clone()).collect();
        let pm = similarity_matrix(&pf, 16).unwrap();
        for i in 0..k {
            prop_assert_eq!(m[i][i], 1.0);
            for j in 0..k {
                prop_assert_eq!(pm[i][j], m[perm[i]][perm[j]]);
                prop_assert_eq!(m[i][j], m[j][i]);
            }
        }
    }

    #[test]
    fn vocabulary_monotone_under_union(a in prop::collection::vec(caption(), 0..6), b in prop::collection::vec(caption(), 0..6)) {
        let both: Vec<String> = a.iter().chain(&b).cloned().collect();
        let va = vocabulary_size(&CaptionCorpus::from_captions(&a));
        let vu = vocabulary_size(&CaptionCorpus::from_captions(&both));
        prop_assert!(vu >= va);
    }

    #[test]
    fn pairwise_similarity_order_invariant(mut caps in prop::collection::vec(caption(), 2..8)) {
        let e = TermFrequencyEmbedder;
        let before = mean_pairwise_similarity(&CaptionCorpus::from_captions(&caps), &e).unwrap();
        caps.reverse();
        let after = mean_pairwise_similarity(&CaptionCorpus::from_captions(&caps), &e).unwrap();
        prop_assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn u_test_swap_invariant(
        a in prop::collection::vec(0i32..20, 1..25),
        b in prop::collection::vec(0i32..20, 1..25),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let x = mann_whitney_u(&a, &b).unwrap();
        let y = mann_whitney_u(&b, &a).unwrap();
        prop_assert_eq!(x.u_statistic, y.u_statistic);
        prop_assert!((x.p_value_two_sided - y.p_value_two_sided).abs() < 1e-12);
        prop_assert!(x.p_value_two_sided > 0.0 && x.p_value_two_sided <= 1.0);
    }

    #[test]
    fn vti_round_trip_is_bit_exact(vol in volume()) {
        let dir = tempfile::tempdir().unwrap();
        for name in ["v.vti", "v.volr"] {
            let p = dir.path().join(name);
            save_volume(&vol, &p).unwrap();
            let back = load_volume(&p).unwrap();
            prop_assert_eq!(back.dims(), vol.dims());
            if name.ends_with("vti") {
                prop_assert_eq!(back.scalars(), vol.scalars());
            } else {
                for (a, b) in back.scalars().iter().zip(vol.scalars()) {
                    prop_assert_eq!(*a, *b as f32 as f64);
                }
            }
        }
    }
}

mod external_renderer {
    use isoscope_core::render::{
        CameraAngle, ExternalRenderer, ImageBuffer, IsosurfaceRenderer, ReferenceRenderer, RenderError,
    };
    use isoscope_core::VolumeDataset;

    fn ball() -> VolumeDataset {
        VolumeDataset::from_fn("ball", [12, 12, 12], |x, y, z| {
            let d = |a: usize| a as f64 - 5.5;
            (d(x).powi(2) + d(y).powi(2) + d(z).powi(2)).sqrt()
        })
        .unwrap()
    }

    #[test]
    fn child_process_frame_is_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let frame = dir.path().join("canned.png");
        ImageBuffer::filled(8, 6, [10, 20, 30]).save_png(&frame).unwrap();
        // the last argument is the output path
        let script = format!("for a; do out=$a; done; cp '{}' \"$out\"", frame.display());
        let mut r = ExternalRenderer::new(vec!["sh".into(), "-c".into(), script, "render".into()]);
        r.scratch_root = dir.path().to_path_buf();
        let cam = CameraAngle::canonical_by_label("angle_0").unwrap();
        let img = r.render(&ball(), 3.0, &cam, (8, 6)).unwrap();
        assert_eq!(img.get(0, 0), [10, 20, 30]);
        assert!(matches!(r.render(&ball(), 3.0, &cam, (9, 6)), Err(RenderError::External(_))));
        // scratch directories are removed
        let left: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(left.len(), 1);
    }

    #[test]
    fn failing_or_missing_command_is_an_error() {
        let cam = CameraAngle::canonical_by_label("angle_0").unwrap();
        for cmd in [vec![], vec!["false".to_string()], vec!["/nonexistent/renderer".to_string()]] {
            let r = ExternalRenderer::new(cmd);
            assert!(matches!(r.render(&ball(), 3.0, &cam, (8, 8)), Err(RenderError::External(_))));
        }
        assert!(ReferenceRenderer.render(&ball(), 3.0, &cam, (16, 16)).unwrap().lit_pixel_count() > 0);
    }
}
