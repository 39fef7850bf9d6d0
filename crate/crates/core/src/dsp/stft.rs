use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Short-time Fourier analysis settings. Window and hop are given in
/// milliseconds and converted per sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub n_fft: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            window_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

impl StftConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.n_fft < 2 {
            return Err(Error::InvalidConfig("n_fft must be at least 2".into()));
        }
        if !(self.hop_ms > 0.0) || self.hop_samples(sample_rate) == 0 {
            return Err(Error::InvalidConfig(format!(
                "hop of {} ms is shorter than one sample",
                self.hop_ms
            )));
        }
        let win = self.window_samples(sample_rate);
        if win == 0 || win > self.n_fft {
            return Err(Error::InvalidConfig(format!(
                "window of {win} samples must be in 1..={}",
                self.n_fft
            )));
        }
        Ok(())
    }
}

/// `|STFT|^2`, frames × (n_fft/2 + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub values: Matrix,
    pub frame_hop_s: f64,
    pub sample_rate: u32,
    pub n_fft: usize,
}

impl PowerSpectrogram {
    pub fn new(values: Matrix, frame_hop_s: f64, sample_rate: u32, n_fft: usize) -> Result<Self> {
        if values.cols() != n_fft / 2 + 1 {
            return Err(Error::shape(
                format!("{} bins", n_fft / 2 + 1),
                format!("{} bins", values.cols()),
            ));
        }
        if let Some(v) = values.as_slice().iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::arg(
                "values",
                format!("power must be non-negative, found {v}"),
            ));
        }
        Ok(Self {
            values,
            frame_hop_s,
            sample_rate,
            n_fft,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn scaled(&self, factor: f64) -> PowerSpectrogram {
        PowerSpectrogram {
            values: self.values.map(|v| v * factor),
            ..self.clone()
        }
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Power spectrogram of a mono clip.
///
/// Frame `t` starts at sample `t * hop`; there are `len / hop` frames, and
/// windows running past the end of the signal read zeros. Each windowed
/// frame is zero-padded to `n_fft` before the transform.
pub fn stft_power(clip: &AudioClip, cfg: &StftConfig) -> Result<PowerSpectrogram> {
    if clip.channel_count() != 1 {
        return Err(Error::arg("clip", "stft_power expects a mono clip"));
    }
    let sr = clip.sample_rate();
    cfg.validate(sr)?;
    let win_len = cfg.window_samples(sr);
    let hop = cfg.hop_samples(sr);
    let x = clip.samples();
    if x.len() < win_len {
        return Err(Error::arg(
            "clip",
            format!("{} samples is shorter than one {win_len}-sample window", x.len()),
        ));
    }

    let n_frames = x.len() / hop;
    let n_bins = cfg.n_bins();
    let window = hann_window(win_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Matrix::zeros(n_frames, n_bins);

    for t in 0..n_frames {
        let start = t * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = if i < win_len {
                x.get(start + i).map_or(0.0, |&s| s as f64 * window[i])
            } else {
                0.0
            };
            *slot = Complex::new(v, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (dst, c) in out.row_mut(t).iter_mut().zip(&buf[..n_bins]) {
            *dst = c.norm_sqr();
        }
    }

    PowerSpectrogram::new(out, hop as f64 / sr as f64, sr, cfg.n_fft)
}
