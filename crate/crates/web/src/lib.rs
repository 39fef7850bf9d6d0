//! Browser demo exports.
//!
//! Three operations run on a small synthetic scene (a steady hum, a sweep
//! lasting a few tenths of a second and regular clicks over noise):
//!
//! * loss and logit-gradient curves for CE, defocus and RCE,
//! * the long/short split of its log-mel feature for any odd window,
//! * a harmonic/percussive split of its power spectrogram.
//!
//! Matrices cross the boundary as row-major `Float32Array`s of
//! `frames × bins`.

use asc_rfl::decomp::{format_boundary, hpss, hpss_logmel, long_short_boundary, sdbd};
use asc_rfl::dsp::{log_mel, mel_filterbank, stft_power, AudioClip, PowerSpectrogram, StftConfig, LOG_EPS};
use asc_rfl::losses::{loss_curve, percent_grid, LossKind, LossSpec};
use asc_rfl::Matrix;
use wasm_bindgen::prelude::*;

pub const SAMPLE_RATE: u32 = 16_000;
pub const SCENE_SECONDS: f64 = 4.0;
pub const DEMO_MELS: usize = 64;

/// Deterministic uniform noise in `[-1, 1)` (xorshift).
fn noise(n: usize, mut state: u64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

/// The demo scene as mono samples.
pub fn scene_samples(seed: u64) -> Vec<f32> {
    let sr = SAMPLE_RATE as f64;
    let n = (SCENE_SECONDS * sr) as usize;
    let hiss = noise(n, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1);
    let tau = std::f64::consts::TAU;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let hum: f64 = [(220.0, 0.08), (440.0, 0.05), (660.0, 0.03)]
                .iter()
                .map(|(f, a)| a * (tau * f * t).sin())
                .sum();
            // 0.4 s upward sweep starting at 1.3 s
            let sweep = if (1.3..1.7).contains(&t) {
                let u = t - 1.3;
                let env = (std::f64::consts::PI * u / 0.4).sin();
                0.12 * env * (tau * (1200.0 * u + 2500.0 * u * u)).sin()
            } else {
                0.0
            };
            // 15 ms clicks every 0.5 s
            let phase = t % 0.5;
            let click = if phase < 0.015 {
                0.4 * (-phase / 0.003).exp() * hiss[(i * 7) % n]
            } else {
                0.0
            };
            (hum + sweep + click + 0.01 * hiss[i]) as f32
        })
        .collect()
}

fn stft_cfg() -> StftConfig {
    StftConfig {
        n_fft: 512,
        ..StftConfig::default()
    }
}

pub fn scene_power(seed: u64) -> Result<PowerSpectrogram, String> {
    let clip = AudioClip::mono(scene_samples(seed), SAMPLE_RATE).map_err(|e| e.to_string())?;
    stft_power(&clip, &stft_cfg()).map_err(|e| e.to_string())
}

fn filterbank() -> Result<Matrix, String> {
    mel_filterbank(stft_cfg().n_fft, DEMO_MELS, SAMPLE_RATE).map_err(|e| e.to_string())
}

fn to_f32(m: &Matrix) -> Vec<f32> {
    m.as_slice().iter().map(|&v| v as f32).collect()
}

/// Three same-shape maps and a caption.
#[wasm_bindgen]
pub struct Maps {
    frames: usize,
    bins: usize,
    maps: Vec<Vec<f32>>,
    caption: String,
}

#[wasm_bindgen]
impl Maps {
    #[wasm_bindgen(getter)]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[wasm_bindgen(getter)]
    pub fn bins(&self) -> usize {
        self.bins
    }

    #[wasm_bindgen(getter)]
    pub fn caption(&self) -> String {
        self.caption.clone()
    }

    /// Map `k` (0 = input, then the components).
    pub fn map(&self, k: usize) -> Vec<f32> {
        self.maps.get(k).cloned().unwrap_or_default()
    }

    #[wasm_bindgen(getter)]
    pub fn count(&self) -> usize {
        self.maps.len()
    }
}

impl Maps {
    pub fn maps(&self) -> &[Vec<f32>] {
        &self.maps
    }
}

/// Log-mel feature of the scene and its long / short components.
pub fn sdbd_maps(window: usize, seed: u64) -> Result<Maps, String> {
    let spec = scene_power(seed)?;
    let feat = log_mel(&spec, &filterbank()?, LOG_EPS).map_err(|e| e.to_string())?;
    let d = sdbd(&feat, window).map_err(|e| e.to_string())?;
    let boundary = long_short_boundary(window, feat.frame_hop_s).map_err(|e| e.to_string())?;
    Ok(Maps {
        frames: feat.n_frames(),
        bins: feat.n_mels(),
        maps: vec![to_f32(&feat.values), to_f32(&d.components[0]), to_f32(&d.components[1])],
        caption: format!("sounds longer than {} s go to the long component", format_boundary(boundary)),
    })
}

/// Log-mel views of the scene's power spectrogram and its H / P parts.
pub fn hpss_maps(window_t: usize, window_f: usize, seed: u64) -> Result<Maps, String> {
    let spec = scene_power(seed)?;
    let fb = filterbank()?;
    let d = hpss(&spec, window_t, window_f, LOG_EPS).map_err(|e| e.to_string())?;
    let mut maps = vec![to_f32(&log_mel(&spec, &fb, LOG_EPS).map_err(|e| e.to_string())?.values)];
    for c in d.components {
        let part = PowerSpectrogram::new(c, spec.frame_hop_s, spec.sample_rate, spec.n_fft).map_err(|e| e.to_string())?;
        maps.push(to_f32(&hpss_logmel(&part, &fb, LOG_EPS).map_err(|e| e.to_string())?.values));
    }
    Ok(Maps {
        frames: spec.n_frames(),
        bins: DEMO_MELS,
        maps,
        caption: format!("time window {window_t} frames, frequency window {window_f} bins"),
    })
}

/// `[p, loss, dloss/dlogit]` triples over `p = 0.01 … 0.99`.
pub fn curve(kind: &str, alpha: f64) -> Result<Vec<f64>, String> {
    let kind = match kind {
        "ce" => LossKind::Ce,
        "defocus" => LossKind::Defocus,
        "rce" => LossKind::Rce,
        other => return Err(format!("unknown loss {other:?}")),
    };
    let spec = LossSpec::new(kind, alpha).map_err(|e| e.to_string())?;
    let pts = loss_curve(&spec, &percent_grid()).map_err(|e| e.to_string())?;
    Ok(pts.iter().flat_map(|p| [p.p, p.loss, p.dloss_dlogit]).collect())
}

#[wasm_bindgen(js_name = lossCurve)]
pub fn loss_curve_js(kind: &str, alpha: f64) -> Result<Vec<f64>, JsError> {
    curve(kind, alpha).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sdbdScene)]
pub fn sdbd_scene_js(window: usize, seed: u32) -> Result<Maps, JsError> {
    sdbd_maps(window, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = hpssScene)]
pub fn hpss_scene_js(window_t: usize, window_f: usize, seed: u32) -> Result<Maps, JsError> {
    hpss_maps(window_t, window_f, seed as u64).map_err(|e| JsError::new(&e))
}
