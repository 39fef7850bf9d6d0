//! Median filtering and the two duration-based decompositions: hard
//! separation of a log-mel feature into long and short sounds, and the
//! soft harmonic/percussive split of a power spectrogram.

use serde::{Deserialize, Serialize};

use crate::dsp::{log_mel, LogMelFeature, PowerSpectrogram};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Time,
    Frequency,
}

/// A median filter of odd length `window = 2k + 1` along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedianFilterSpec {
    pub window: usize,
    pub axis: Axis,
}

impl MedianFilterSpec {
    pub fn new(window: usize, axis: Axis) -> Result<Self> {
        check_window(window)?;
        Ok(Self { window, axis })
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        match self.axis {
            Axis::Time => median_filter_time(m, self.window),
            Axis::Frequency => median_filter_freq(m, self.window),
        }
    }
}

fn check_window(window: usize) -> Result<()> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::arg(
            "window",
            format!("median window must be odd and at least 3, got {window}"),
        ));
    }
    Ok(())
}

/// Sliding median with edge replication: the sequence is extended by `k`
/// copies of its first and last values, so the output has the input's
/// length.
pub fn median_filter_1d(x: &[f64], window: usize) -> Result<Vec<f64>> {
    check_window(window)?;
    if x.is_empty() {
        return Err(Error::arg("x", "empty sequence"));
    }
    let k = window / 2;
    let n = x.len();
    let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];

    let mut sorted: Vec<f64> = (-(k as isize)..=k as isize).map(at).collect();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(n);
    out.push(sorted[k]);
    for t in 1..n as isize {
        let leaving = at(t - 1 - k as isize);
        let entering = at(t + k as isize);
        if leaving.total_cmp(&entering).is_ne() {
            let pos = sorted.partition_point(|v| v.total_cmp(&leaving).is_lt());
            sorted.remove(pos);
            let pos = sorted.partition_point(|v| v.total_cmp(&entering).is_lt());
            sorted.insert(pos, entering);
        }
        out.push(sorted[k]);
    }
    Ok(out)
}

/// Median filter along the time axis (rows) of every frequency bin.
pub fn median_filter_time(m: &Matrix, window: usize) -> Result<Matrix> {
    check_window(window)?;
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for c in 0..m.cols() {
        out.set_column(c, &median_filter_1d(&m.column(c), window)?);
    }
    Ok(out)
}

/// Median filter along the frequency axis (columns) of every frame.
pub fn median_filter_freq(m: &Matrix, window: usize) -> Result<Matrix> {
    check_window(window)?;
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        out.row_mut(r)
            .copy_from_slice(&median_filter_1d(m.row(r), window)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionKind {
    Sdbd,
    Hpss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentRole {
    Long,
    /// Intermediate duration band of a cascade, numbered from the long end.
    Band(usize),
    Short,
    Harmonic,
    Percussive,
}

impl ComponentRole {
    /// File suffix used for cached components.
    pub fn suffix(&self) -> String {
        match self {
            ComponentRole::Long => "long".into(),
            ComponentRole::Band(i) => format!("band{i}"),
            ComponentRole::Short => "short".into(),
            ComponentRole::Harmonic => "h".into(),
            ComponentRole::Percussive => "p".into(),
        }
    }
}

/// Same-shape component matrices and the filters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedFeature {
    pub components: Vec<Matrix>,
    pub roles: Vec<ComponentRole>,
    pub kind: DecompositionKind,
    pub recipe: Vec<MedianFilterSpec>,
    pub frame_hop_s: f64,
}

impl DecomposedFeature {
    pub fn component(&self, role: ComponentRole) -> Option<&Matrix> {
        self.roles
            .iter()
            .position(|r| *r == role)
            .map(|i| &self.components[i])
    }

    /// Sum of all components, accumulated in order.
    pub fn reconstruct(&self) -> Matrix {
        let mut acc = self.components[0].clone();
        for c in &self.components[1..] {
            for (a, b) in acc.as_mut_slice().iter_mut().zip(c.as_slice()) {
                *a += b;
            }
        }
        acc
    }
}

/// Splits `s` into `[S_long, S_short]` with `S_long = M_t(S)` and
/// `S_short = S - S_long`.
pub fn sdbd(s: &LogMelFeature, window: usize) -> Result<DecomposedFeature> {
    sdbd_cascade(s, &[window])
}

/// Repeats the long/short split on the long component with each further
/// (larger) window. Components are ordered from longest to shortest.
pub fn sdbd_cascade(s: &LogMelFeature, windows: &[usize]) -> Result<DecomposedFeature> {
    if windows.is_empty() {
        return Err(Error::arg("windows", "need at least one window"));
    }
    if windows.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg(
            "windows",
            format!("windows must be strictly increasing, got {windows:?}"),
        ));
    }
    let mut recipe = Vec::with_capacity(windows.len());
    // shortest first while building, reversed at the end
    let mut parts = Vec::with_capacity(windows.len() + 1);
    let mut current = s.values.clone();
    for &w in windows {
        let long = median_filter_time(&current, w)?;
        parts.push(current.zip_map(&long, |a, b| a - b)?);
        current = long;
        recipe.push(MedianFilterSpec::new(w, Axis::Time)?);
    }
    parts.push(current);
    parts.reverse();

    let n = parts.len();
    let roles = (0..n)
        .map(|i| match i {
            0 => ComponentRole::Long,
            i if i == n - 1 => ComponentRole::Short,
            i => ComponentRole::Band(i),
        })
        .collect();
    Ok(DecomposedFeature {
        components: parts,
        roles,
        kind: DecompositionKind::Sdbd,
        recipe,
        frame_hop_s: s.frame_hop_s,
    })
}

/// Median-filtering harmonic/percussive separation of a power spectrogram.
///
/// `H = A·B_t/(B_t+B_f)` and `P = A·B_f/(B_t+B_f)`, where `B_t`/`B_f` are the
/// time- and frequency-axis medians of `A`. Cells whose mask denominator is
/// at most `eps` are split evenly.
pub fn hpss(
    a: &PowerSpectrogram,
    window_t: usize,
    window_f: usize,
    eps: f64,
) -> Result<DecomposedFeature> {
    let t_spec = MedianFilterSpec::new(window_t, Axis::Time)?;
    let f_spec = MedianFilterSpec::new(window_f, Axis::Frequency)?;
    if let Some(v) = a.values.as_slice().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::arg(
            "a",
            format!("power spectrogram has negative value {v}"),
        ));
    }
    let bt = t_spec.apply(&a.values)?;
    let bf = f_spec.apply(&a.values)?;
    let (rows, cols) = a.values.shape();
    let mut h = Matrix::zeros(rows, cols);
    let mut p = Matrix::zeros(rows, cols);
    for i in 0..rows * cols {
        let x = a.values.as_slice()[i];
        let (t, f) = (bt.as_slice()[i], bf.as_slice()[i]);
        let denom = t + f;
        let (hv, pv) = if denom <= eps {
            (x / 2.0, x / 2.0)
        } else {
            (x * (t / denom), x * (f / denom))
        };
        h.as_mut_slice()[i] = hv;
        p.as_mut_slice()[i] = pv;
    }
    Ok(DecomposedFeature {
        components: vec![h, p],
        roles: vec![ComponentRole::Harmonic, ComponentRole::Percussive],
        kind: DecompositionKind::Hpss,
        recipe: vec![t_spec, f_spec],
        frame_hop_s: a.frame_hop_s,
    })
}

/// Log-mel projection of one decomposed power spectrogram (`H` or `P`).
pub fn hpss_logmel(h_or_p: &PowerSpectrogram, fb: &Matrix, eps: f64) -> Result<LogMelFeature> {
    log_mel(h_or_p, fb, eps)
}

/// Duration (seconds) separating long from short sounds for a time-axis
/// median filter: half the window times the frame hop.
pub fn long_short_boundary(window: usize, hop_s: f64) -> Result<f64> {
    check_window(window)?;
    if !(hop_s > 0.0) {
        return Err(Error::arg("hop_s", "must be positive"));
    }
    Ok(window as f64 * hop_s / 2.0)
}

/// Boundary in seconds, truncated to two decimals (`1.005` → `"1.00"`).
pub fn format_boundary(seconds: f64) -> String {
    let hundredths = (seconds * 100.0 + 1e-9).floor();
    format!("{:.2}", hundredths / 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{mel_filterbank, LOG_EPS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_median(x: &[f64], window: usize) -> Vec<f64> {
        let k = (window / 2) as isize;
        let n = x.len() as isize;
        (0..n)
            .map(|t| {
                let mut w: Vec<f64> = (t - k..=t + k)
                    .map(|i| x[i.clamp(0, n - 1) as usize])
                    .collect();
                w.sort_by(f64::total_cmp);
                w[k as usize]
            })
            .collect()
    }

    fn feat(m: Matrix) -> LogMelFeature {
        LogMelFeature::new(m, 0.01).unwrap()
    }

    #[test]
    fn impulse_is_removed() {
        let out = median_filter_1d(&[0.0, 0.0, 5.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(out, vec![0.0; 5]);
        assert_eq!(out, brute_median(&[0.0, 0.0, 5.0, 0.0, 0.0], 3));
    }

    #[test]
    fn constants_and_monotone_sequences() {
        for w in [3, 5, 11, 101] {
            assert_eq!(median_filter_1d(&[2.5; 40], w).unwrap(), vec![2.5; 40]);
        }
        let ramp: Vec<f64> = (0..50).map(|i| i as f64 * 0.5).collect();
        let out = median_filter_1d(&ramp, 7).unwrap();
        assert_eq!(out, brute_median(&ramp, 7));
        assert_eq!(&out[3..47], &ramp[3..47]);
    }

    #[test]
    fn sliding_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..80);
            let w = 2 * rng.gen_range(1..30) + 1;
            // small alphabet forces duplicate values
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            assert_eq!(median_filter_1d(&x, w).unwrap(), brute_median(&x, w));
        }
    }

    #[test]
    fn bad_windows_are_rejected() {
        for w in [0, 1, 2, 4, 200] {
            assert!(median_filter_1d(&[1.0, 2.0], w).is_err());
        }
        assert!(median_filter_1d(&[], 3).is_err());
    }

    #[test]
    fn time_filter_per_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Matrix::from_fn(50, 8, |_, _| rng.gen_range(-1.0..1.0));
        let out = median_filter_time(&m, 9).unwrap();
        for c in 0..8 {
            assert_eq!(out.column(c), brute_median(&m.column(c), 9));
        }
        let identical_rows = Matrix::from_fn(20, 5, |_, c| c as f64);
        assert_eq!(median_filter_time(&identical_rows, 5).unwrap(), identical_rows);
        let single = Matrix::from_fn(30, 1, |r, _| ((r * 7) % 11) as f64);
        assert_eq!(
            median_filter_time(&single, 5).unwrap().column(0),
            median_filter_1d(&single.column(0), 5).unwrap()
        );
    }

    #[test]
    fn freq_filter_is_transpose_of_time_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Matrix::from_fn(8, 50, |_, _| rng.gen_range(-1.0..1.0));
        let out = median_filter_freq(&m, 7).unwrap();
        for r in 0..8 {
            assert_eq!(out.row(r), brute_median(m.row(r), 7).as_slice());
        }
        let via_t = median_filter_time(&m.transpose(), 7).unwrap().transpose();
        assert_eq!(out, via_t);
        let identical_cols = Matrix::from_fn(6, 20, |r, _| r as f64);
        assert_eq!(median_filter_freq(&identical_cols, 3).unwrap(), identical_cols);
    }

    #[test]
    fn sdbd_constant_and_impulse() {
        let d = sdbd(&feat(Matrix::filled(300, 4, 1.5)), 201).unwrap();
        assert!(d.components[0].as_slice().iter().all(|&v| v == 1.5));
        assert!(d.components[1].as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(d.roles, vec![ComponentRole::Long, ComponentRole::Short]);

        let mut m = Matrix::zeros(400, 3);
        m.set(150, 1, 5.0);
        let d = sdbd(&feat(m.clone()), 201).unwrap();
        assert!(d.components[0].as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(d.components[1], m);
    }

    #[test]
    fn sdbd_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Matrix::from_fn(256, 16, |_, _| rng.gen::<f32>() as f64 * 30.0 - 25.0);
        let d = sdbd(&feat(m.clone()), 31).unwrap();
        assert_eq!(d.reconstruct(), m);
    }

    #[test]
    fn cascade_reduces_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = Matrix::from_fn(300, 10, |_, _| rng.gen::<f32>() as f64 - 0.5);
        let f = feat(m.clone());
        assert_eq!(sdbd_cascade(&f, &[201]).unwrap(), sdbd(&f, 201).unwrap());

        let d = sdbd_cascade(&f, &[31, 201]).unwrap();
        assert_eq!(d.components.len(), 3);
        assert_eq!(
            d.roles,
            vec![ComponentRole::Long, ComponentRole::Band(1), ComponentRole::Short]
        );
        assert_eq!(d.reconstruct(), m);

        let c = sdbd_cascade(&feat(Matrix::filled(100, 3, -2.0)), &[5, 11, 31]).unwrap();
        assert!(c.components[0].as_slice().iter().all(|&v| v == -2.0));
        for comp in &c.components[1..] {
            assert!(comp.as_slice().iter().all(|&v| v == 0.0));
        }

        assert!(sdbd_cascade(&f, &[31, 31]).is_err());
        assert!(sdbd_cascade(&f, &[201, 31]).is_err());
    }

    fn power(m: Matrix) -> PowerSpectrogram {
        let cols = m.cols();
        PowerSpectrogram::new(m, 0.01, 44100, (cols - 1) * 2).unwrap()
    }

    #[test]
    fn hpss_constant_splits_evenly() {
        let d = hpss(&power(Matrix::filled(40, 33, 3.0)), 31, 31, 1e-12).unwrap();
        assert!(d.components[0].as_slice().iter().all(|&v| v == 1.5));
        assert!(d.components[1].as_slice().iter().all(|&v| v == 1.5));
        let zero = hpss(&power(Matrix::zeros(10, 9)), 3, 3, 1e-12).unwrap();
        assert!(zero.reconstruct().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hpss_conserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Matrix::from_fn(60, 65, |_, _| rng.gen_range(0.0..10.0f64).powi(3));
        let d = hpss(&power(a.clone()), 17, 11, 1e-12).unwrap();
        let sum = d.reconstruct();
        for i in 0..a.as_slice().len() {
            let x = a.as_slice()[i];
            assert!((sum.as_slice()[i] - x).abs() <= 1e-12 * x.max(1.0));
            assert!(d.components[0].as_slice()[i] <= x);
            assert!(d.components[1].as_slice()[i] <= x);
        }
    }

    #[test]
    fn horizontal_line_is_harmonic() {
        let mut a = Matrix::zeros(100, 65);
        for t in 0..100 {
            a.set(t, 20, 4.0);
        }
        let d = hpss(&power(a.clone()), 31, 31, 1e-12).unwrap();
        let h: f64 = d.components[0].column(20).iter().sum();
        let total: f64 = a.column(20).iter().sum();
        assert!(h / total >= 0.99);
    }

    #[test]
    fn hpss_rejects_negative_power() {
        let mut a = power(Matrix::filled(5, 9, 1.0));
        a.values.set(2, 2, -1.0);
        assert!(hpss(&a, 3, 3, 1e-12).is_err());
    }

    #[test]
    fn hpss_logmel_properties() {
        let fb = mel_filterbank(2048, 128, 44100).unwrap();
        let zero = power(Matrix::zeros(1000, 1025));
        let f = hpss_logmel(&zero, &fb, LOG_EPS).unwrap();
        assert_eq!(f.values.shape(), (1000, 128));
        assert!(f.values.as_slice().iter().all(|&v| v == LOG_EPS.ln()));

        let a = power(Matrix::filled(12, 1025, 2.0));
        let d = hpss(&a, 3, 3, 1e-12).unwrap();
        let h = PowerSpectrogram {
            values: d.components[0].clone(),
            ..a.clone()
        };
        let lh = hpss_logmel(&h, &fb, LOG_EPS).unwrap();
        let la = log_mel(&a, &fb, LOG_EPS).unwrap();
        for (x, y) in la.values.as_slice().iter().zip(lh.values.as_slice()) {
            assert!((x - y - 2f64.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn boundaries() {
        let b = long_short_boundary(201, 0.01).unwrap();
        assert!((b - 1.005).abs() < 1e-12);
        assert_eq!(format_boundary(b), "1.00");
        let b = long_short_boundary(31, 0.01).unwrap();
        assert!((b - 0.155).abs() < 1e-12);
        assert_eq!(format_boundary(b), "0.15");
        assert_eq!(format_boundary(1.5), "1.50");
        assert_eq!(long_short_boundary(3, 1.0).unwrap(), 1.5);
        assert!(long_short_boundary(4, 0.01).is_err());
        assert!(long_short_boundary(3, 0.0).is_err());
    }
}
