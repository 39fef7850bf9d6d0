use super::PowerSpectrogram;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Floor added to mel energies before the logarithm.
pub const LOG_EPS: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Centre frequencies (Hz) of `n_mels` filters spaced uniformly on the mel
/// scale between 0 Hz and Nyquist. The returned vector includes the two
/// outer edges, so it has `n_mels + 2` entries.
pub fn mel_edges_hz(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let last = n_mels + 1;
    (0..=last)
        .map(|i| match i {
            0 => 0.0,
            i if i == last => nyquist,
            i => mel_to_hz(top * i as f64 / last as f64),
        })
        .collect()
}

/// Triangular mel filterbank, `n_mels × (n_fft/2 + 1)`.
///
/// Each triangle is area-normalised (weight peak `2 / (f_hi - f_lo)`), so
/// mel energies measure power per Hz.
pub fn mel_filterbank(n_fft: usize, n_mels: usize, sample_rate: u32) -> Result<Matrix> {
    if n_mels == 0 {
        return Err(Error::arg("n_mels", "must be at least 1"));
    }
    if n_fft < 2 || sample_rate == 0 {
        return Err(Error::arg("n_fft", "need n_fft >= 2 and a positive sample rate"));
    }
    let n_bins = n_fft / 2 + 1;
    let edges = mel_edges_hz(n_mels, sample_rate);
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut fb = Matrix::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f < hi {
                if f <= centre {
                    (f - lo) / (centre - lo)
                } else {
                    (hi - f) / (hi - centre)
                }
            } else {
                0.0
            };
            fb.set(m, k, w * norm);
        }
        if fb.row(m).iter().sum::<f64>() <= 0.0 {
            return Err(Error::arg(
                "n_mels",
                format!(
                    "{n_mels} filters are too narrow for a {n_fft}-point FFT at {sample_rate} Hz \
                     (filter {m} covers no bin)"
                ),
            ));
        }
    }
    Ok(fb)
}

/// Log-mel energies, frames × mel bins.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelFeature {
    pub values: Matrix,
    pub frame_hop_s: f64,
}

impl LogMelFeature {
    pub fn new(values: Matrix, frame_hop_s: f64) -> Result<Self> {
        if let Some(v) = values.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::arg("values", format!("non-finite log-mel value {v}")));
        }
        Ok(Self {
            values,
            frame_hop_s,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.cols()
    }
}

/// `ln(fb · power + eps)` per frame.
pub fn log_mel(spec: &PowerSpectrogram, fb: &Matrix, eps: f64) -> Result<LogMelFeature> {
    if fb.cols() != spec.values.cols() {
        return Err(Error::shape(
            format!("filterbank with {} columns", spec.values.cols()),
            format!("{} columns", fb.cols()),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::arg("eps", "must be positive"));
    }
    let n_mels = fb.rows();
    let spans: Vec<(usize, usize)> = (0..n_mels)
        .map(|m| {
            let row = fb.row(m);
            let lo = row.iter().position(|&w| w != 0.0).unwrap_or(0);
            let hi = row.iter().rposition(|&w| w != 0.0).map_or(lo, |i| i + 1);
            (lo, hi)
        })
        .collect();
    let mut out = Matrix::zeros(spec.n_frames(), n_mels);
    for t in 0..spec.n_frames() {
        let frame = spec.values.row(t);
        for (m, &(lo, hi)) in spans.iter().enumerate() {
            let energy: f64 = fb.row(m)[lo..hi].iter().zip(&frame[lo..hi]).map(|(w, p)| w * p).sum();
            out.set(t, m, (energy + eps).ln());
        }
    }
    LogMelFeature::new(out, spec.frame_hop_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 100.0, 1000.0, 8000.0, 22050.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-6);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn single_filter_spans_zero_to_nyquist() {
        let fb = mel_filterbank(2048, 1, 44100).unwrap();
        let edges = mel_edges_hz(1, 44100);
        assert_eq!(edges[0], 0.0);
        assert!((edges[2] - 22050.0).abs() < 1e-6);
        assert_eq!(fb.get(0, 0), 0.0);
        assert_eq!(fb.get(0, 1024), 0.0);
        assert!(fb.row(0)[1..1024].iter().all(|&w| w > 0.0));
    }

    #[test]
    fn default_filterbank_is_well_formed() {
        let fb = mel_filterbank(2048, 128, 44100).unwrap();
        assert_eq!(fb.shape(), (128, 1025));
        for m in 0..128 {
            assert!(fb.row(m).iter().all(|&w| w >= 0.0));
            assert!(fb.row(m).iter().sum::<f64>() > 0.0);
        }
        for k in 1..1024 {
            let active = (0..128).filter(|&m| fb.get(m, k) > 0.0).count();
            assert!(active <= 2, "bin {k} has {active} active filters");
        }
        let edges = mel_edges_hz(128, 44100);
        assert!(edges.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn too_many_filters_is_an_error() {
        assert!(mel_filterbank(64, 128, 44100).is_err());
        assert!(mel_filterbank(2048, 0, 44100).is_err());
    }

    fn spec_of(values: Matrix) -> PowerSpectrogram {
        PowerSpectrogram::new(values, 0.01, 44100, 2048).unwrap()
    }

    #[test]
    fn zero_power_hits_the_floor() {
        let fb = mel_filterbank(2048, 128, 44100).unwrap();
        let feat = log_mel(&spec_of(Matrix::zeros(10, 1025)), &fb, LOG_EPS).unwrap();
        let floor = (LOG_EPS).ln();
        assert!((floor + 23.0259).abs() < 1e-3);
        assert!(feat
            .values
            .as_slice()
            .iter()
            .all(|&v| (v - floor).abs() < 1e-12));
    }

    #[test]
    fn scaling_power_shifts_by_log_factor() {
        let fb = mel_filterbank(2048, 128, 44100).unwrap();
        let p = Matrix::from_fn(20, 1025, |t, k| 1.0 + ((t * 7 + k * 13) % 17) as f64);
        let a = log_mel(&spec_of(p.clone()), &fb, LOG_EPS).unwrap();
        let b = log_mel(&spec_of(p.map(|v| v * 10.0)), &fb, LOG_EPS).unwrap();
        let ln10 = 10f64.ln();
        for (x, y) in a.values.as_slice().iter().zip(b.values.as_slice()) {
            assert!((y - x - ln10).abs() < 1e-6);
        }
    }

    #[test]
    fn mismatched_filterbank_is_rejected() {
        let fb = mel_filterbank(1024, 64, 44100).unwrap();
        assert!(log_mel(&spec_of(Matrix::zeros(4, 1025)), &fb, LOG_EPS).is_err());
    }
}
