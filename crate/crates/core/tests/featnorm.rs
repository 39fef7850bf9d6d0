use asc_rfl::featnorm::*;
use asc_rfl::Matrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-40.0f64..10.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

#[test]
fn test_values_outside_the_training_range_are_not_clipped() {
    let train = Matrix::from_fn(4, 2, |r, _| r as f64);
    let stats = fit_bin_stats([&train]).unwrap();
    let test = Matrix::from_vec(1, 2, vec![6.0, -3.0]).unwrap();
    let n = normalize_matrix(&test, &stats).unwrap();
    assert_eq!(n.row(0), &[3.0, -3.0]);
}

#[test]
fn bin_count_mismatch_is_rejected() {
    let stats = fit_bin_stats([&Matrix::zeros(3, 4)]).unwrap();
    assert!(normalize_matrix(&Matrix::zeros(3, 5), &stats).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn training_features_land_in_unit_interval(a in matrix(12, 5), b in matrix(7, 5)) {
        let stats = fit_bin_stats([&a, &b]).unwrap();
        for m in [&a, &b] {
            let n = normalize_matrix(m, &stats).unwrap();
            prop_assert!(n.as_slice().iter().all(|&v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(&v)));
        }
    }

    #[test]
    fn lsmn_cancels_any_offsets(m in matrix(30, 8), c in prop::collection::vec(-30.0f64..30.0, 8)) {
        let shifted = Matrix::from_fn(30, 8, |t, b| m.get(t, b) + c[b]);
        let (x, y) = (lsmn_matrix(&shifted), lsmn_matrix(&m));
        for (u, v) in x.as_slice().iter().zip(y.as_slice()) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn lsmn_columns_have_zero_mean(m in matrix(25, 6)) {
        let l = lsmn_matrix(&m);
        for b in 0..6 {
            let mean: f64 = l.column(b).iter().sum::<f64>() / 25.0;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn stats_file_round_trips_f32_values(v in prop::collection::vec(-40.0f32..10.0, 2 * 9)) {
        let m = Matrix::from_vec(2, 9, v.into_iter().map(f64::from).collect()).unwrap();
        let stats = fit_bin_stats([&m]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bst");
        stats.write(&p).unwrap();
        let back = BinStats::read(&p).unwrap();
        prop_assert_eq!(back.min, stats.min);
        prop_assert_eq!(back.max, stats.max);
    }
}
