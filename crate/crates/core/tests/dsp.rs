use asc_rfl::dsp::*;
use asc_rfl::pipeline::{FeatureExtractor, FeatureRecipe};
use asc_rfl::Matrix;
use proptest::prelude::*;

fn tone(sr: u32, seconds: f64, hz: f64, amp: f32) -> AudioClip {
    let n = (sr as f64 * seconds) as usize;
    let s = (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * hz * i as f64 / sr as f64).sin() as f32)
        .collect();
    AudioClip::mono(s, sr).unwrap()
}

#[test]
fn wav_to_segments_at_two_rates() {
    let dir = tempfile::tempdir().unwrap();
    for sr in [44_100, 48_000] {
        let path = dir.path().join(format!("t{sr}.wav"));
        write_wav_pcm16(&path, &tone(sr, 10.0, 1000.0, 0.5)).unwrap();
        let clip = load_wav(&path).unwrap();
        let ex = FeatureExtractor::new(FeatureRecipe::default(), sr).unwrap();
        let f = ex.log_mel(&clip).unwrap();
        assert_eq!(f.values.shape(), (1000, N_MELS));
        let segs = segment_feature(&f, "t").unwrap();
        assert_eq!(segs.len(), SEGMENTS_PER_CLIP);
        assert!(segs.iter().all(|s| s.values.shape() == (SEGMENT_FRAMES, N_MELS)));
    }
}

#[test]
fn tone_energy_peaks_in_the_mel_band_holding_it() {
    let sr = 44_100;
    let fb = mel_filterbank(2048, N_MELS, sr).unwrap();
    let ex = FeatureExtractor::new(FeatureRecipe::default(), sr).unwrap();
    let f = ex.log_mel(&tone(sr, 2.0, 2000.0, 0.5)).unwrap();
    let frame = f.values.row(100);
    let best = (0..N_MELS).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
    let bin = (2000.0 * 2048.0 / sr as f64).round() as usize;
    let weights: Vec<f64> = (0..N_MELS).map(|m| fb.get(m, bin)).collect();
    let heaviest = (0..N_MELS).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap();
    assert!(best.abs_diff(heaviest) <= 1, "peak in band {best}, tone bin weighs most in {heaviest}");
}

#[test]
fn silence_hits_the_floor_everywhere() {
    let ex = FeatureExtractor::new(FeatureRecipe::default(), 16_000).unwrap();
    let clip = AudioClip::mono(vec![0.0; 32_000], 16_000).unwrap();
    let f = ex.log_mel(&clip).unwrap();
    assert!(f.values.as_slice().iter().all(|&v| v == LOG_EPS.ln()));
}

#[test]
fn extractor_rejects_other_rates() {
    let ex = FeatureExtractor::new(FeatureRecipe::default(), 16_000).unwrap();
    assert!(ex.log_mel(&tone(22_050, 1.0, 440.0, 0.1)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filterbank_rows_are_nonnegative_triangles(n_mels in 8usize..160, sr_idx in 0usize..3) {
        let sr = [16_000, 44_100, 48_000][sr_idx];
        if let Ok(fb) = mel_filterbank(2048, n_mels, sr) {
            for m in 0..n_mels {
                let row = fb.row(m);
                prop_assert!(row.iter().all(|&w| w >= 0.0));
                let nz: Vec<usize> = (0..row.len()).filter(|&k| row[k] > 0.0).collect();
                if let (Some(&a), Some(&b)) = (nz.first(), nz.last()) {
                    let peak = (a..=b).max_by(|&x, &y| row[x].total_cmp(&row[y])).unwrap();
                    prop_assert!(row[a..=peak].windows(2).all(|w| w[0] <= w[1]));
                    prop_assert!(row[peak..=b].windows(2).all(|w| w[0] >= w[1]));
                }
            }
        }
    }

    #[test]
    fn power_scaling_shifts_log_mel(scale in 1e-3f64..1e3, seed in 0u64..1000) {
        let mut x = seed | 1;
        let values = Matrix::from_fn(20, 1025, |_, _| {
            x ^= x << 13; x ^= x >> 7; x ^= x << 17;
            (x % 1000) as f64 / 10.0 + 1.0
        });
        let spec = PowerSpectrogram::new(values, 0.01, 44_100, 2048).unwrap();
        let fb = mel_filterbank(2048, N_MELS, 44_100).unwrap();
        let a = log_mel(&spec, &fb, LOG_EPS).unwrap();
        let b = log_mel(&spec.scaled(scale), &fb, LOG_EPS).unwrap();
        for (u, v) in a.values.as_slice().iter().zip(b.values.as_slice()) {
            prop_assert!((v - u - scale.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn segments_cover_every_frame_in_order(frames in 128usize..1100) {
        let m = Matrix::from_fn(frames, 3, |r, c| (r * 3 + c) as f64);
        let segs = segment_matrix(&m).unwrap();
        prop_assert_eq!(segs.len(), SEGMENTS_PER_CLIP);
        for (s, seg) in segs.iter().enumerate() {
            for r in 0..SEGMENT_FRAMES {
                let t = (s * SEGMENT_FRAMES + r).min(frames - 1);
                prop_assert_eq!(seg.get(r, 1), m.get(t, 1));
            }
        }
    }
}
