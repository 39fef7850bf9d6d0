use asc_rfl::data::*;
use asc_rfl::Matrix;
use proptest::prelude::*;

fn small(seed: u64) -> SynthParams {
    SynthParams {
        n_classes: 3,
        clips_per_class: 4,
        clip_seconds: 1.0,
        test_fraction: 0.5,
        seed,
        ..SynthParams::default()
    }
}

#[test]
fn same_seed_same_audio() {
    let a = synth_dataset(&SynthConfig::from_params(&small(7)).unwrap()).unwrap();
    let b = synth_dataset(&SynthConfig::from_params(&small(7)).unwrap()).unwrap();
    let c = synth_dataset(&SynthConfig::from_params(&small(8)).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].1, c[0].1);
}

#[test]
fn zero_rate_leaves_only_background() {
    let cfg = SynthConfig::from_params(&SynthParams { transient_rate_scale: 0.0, ..small(1) }).unwrap();
    for clip in synth_plan(&cfg).unwrap() {
        let (bg, tr) = render_sources(&cfg, &clip);
        assert!(tr.iter().all(|&v| v == 0.0));
        assert!(bg.iter().any(|&v| v != 0.0));
    }
}

#[test]
fn flat_devices_render_identical_mixes() {
    let cfg = SynthConfig::from_params(&SynthParams { flat_devices: true, ..small(3) }).unwrap();
    for clip in synth_plan(&cfg).unwrap() {
        let (bg, tr) = render_sources(&cfg, &clip);
        let audio = render_clip(&cfg, &clip).unwrap();
        for ((a, b), &s) in bg.iter().zip(&tr).zip(audio.samples()) {
            assert_eq!(((a + b).clamp(-1.0, 1.0)) as f32, s);
        }
    }
}

#[test]
fn synthetic_manifest_survives_a_file_round_trip() {
    let cfg = SynthConfig::from_params(&small(2)).unwrap();
    let entries: Vec<ManifestEntry> = synth_plan(&cfg).unwrap().into_iter().map(|c| c.entry).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.tsv");
    write_manifest(&entries, std::fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(parse_manifest(&path).unwrap(), entries);
}

#[test]
fn rendered_clips_keep_their_filename_city() {
    let cfg = SynthConfig::from_params(&small(4)).unwrap();
    for c in synth_plan(&cfg).unwrap() {
        assert_eq!(city_from_filename(&c.entry.filename).as_deref(), Some(c.entry.city.as_str()));
        assert_eq!(c.entry.label_index(), class_index(&c.entry.scene_label).unwrap());
    }
}

#[test]
fn truncated_cache_is_rejected() {
    let buf = encode_feature(&Matrix::filled(3, 2, 1.5)).unwrap();
    assert!(decode_feature(&buf[..buf.len() - 1]).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(decode_feature(&bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cache_round_trip_is_exact_for_f32(
        (t, b, v) in (1usize..40, 1usize..20).prop_flat_map(|(t, b)| {
            (Just(t), Just(b), prop::collection::vec(-1e4f32..1e4, t * b))
        })
    ) {
        let m = Matrix::from_vec(t, b, v.into_iter().map(f64::from).collect()).unwrap();
        prop_assert_eq!(decode_feature(&encode_feature(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn multicity_split_respects_city_roles(cities in prop::collection::vec(0usize..10, 1..80), seed in 0u64..100) {
        let all: Vec<&str> = TRAIN_CITIES.iter().chain(&TEST_CITIES).chain(&SHARED_CITIES).copied().collect();
        let entries: Vec<ManifestEntry> = cities
            .iter()
            .enumerate()
            .map(|(i, &c)| ManifestEntry {
                filename: format!("audio/park-{}-{i}-0-a.wav", all[c]),
                scene_label: "park".into(),
                city: all[c].into(),
                device: "a".into(),
                split: None,
            })
            .collect();
        let (out, counts) = multicity_split(&entries, seed).unwrap();
        for e in &out {
            let c = e.city.as_str();
            if TRAIN_CITIES.contains(&c) {
                prop_assert_eq!(e.split, Some(Split::Train));
            } else if TEST_CITIES.contains(&c) {
                prop_assert_eq!(e.split, Some(Split::Test));
            }
        }
        for city in SHARED_CITIES {
            if let Some(&(tr, te)) = counts.get(city) {
                prop_assert!(te == tr || te == tr + 1);
            }
        }
    }

    #[test]
    fn minimum_phase_filters_track_flat_gains(db in -12.0f64..12.0) {
        let f = DeviceFilter::minimum_phase("d", |_| db, 16_000, 64);
        for hz in [100.0, 1000.0, 5000.0] {
            prop_assert!((f.response_db(hz, 16_000) - db).abs() < 0.1);
        }
    }
}
