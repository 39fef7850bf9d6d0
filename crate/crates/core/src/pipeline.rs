//! Wiring from audio to network-ready segments.

use serde::{Deserialize, Serialize};

use crate::decomp::{hpss, hpss_logmel, sdbd, sdbd_cascade, ComponentRole};
use crate::dsp::{
    log_mel, mel_filterbank, segment_matrix, stft_power, AudioClip, LogMelFeature, StftConfig,
    LOG_EPS, N_MELS, SEGMENT_FRAMES,
};
use crate::error::{Error, Result};
use crate::featnorm::{fit_bin_stats, lsmn_matrix, normalize_matrix, BinStats};
use crate::matrix::Matrix;
use crate::train::{Regime, SegmentDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Decomposition {
    None,
    Sdbd { window: usize },
    SdbdCascade { windows: Vec<usize> },
    Hpss { window_t: usize, window_f: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureRecipe {
    pub stft: StftConfig,
    pub n_mels: usize,
    pub decomposition: Decomposition,
    /// Subtract each bin's time mean from the log-mel feature (and from
    /// each HPSS component).
    pub lsmn: bool,
}

impl Default for FeatureRecipe {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            n_mels: N_MELS,
            decomposition: Decomposition::None,
            lsmn: false,
        }
    }
}

impl FeatureRecipe {
    pub fn sdbd(window: usize) -> Self {
        Self {
            decomposition: Decomposition::Sdbd { window },
            ..Self::default()
        }
    }
}

/// The undecomposed feature and its components, all frames × mel.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    pub full: Matrix,
    pub components: Vec<Matrix>,
    pub roles: Vec<ComponentRole>,
    pub frame_hop_s: f64,
}

/// STFT, mel projection and decomposition for one sample rate.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub recipe: FeatureRecipe,
    pub sample_rate: u32,
    filterbank: Matrix,
}

impl FeatureExtractor {
    pub fn new(recipe: FeatureRecipe, sample_rate: u32) -> Result<Self> {
        recipe.stft.validate(sample_rate)?;
        let filterbank = mel_filterbank(recipe.stft.n_fft, recipe.n_mels, sample_rate)?;
        Ok(Self {
            recipe,
            sample_rate,
            filterbank,
        })
    }

    pub fn filterbank(&self) -> &Matrix {
        &self.filterbank
    }

    pub fn log_mel(&self, clip: &AudioClip) -> Result<LogMelFeature> {
        self.check_rate(clip)?;
        let spec = stft_power(&clip.to_mono(), &self.recipe.stft)?;
        log_mel(&spec, &self.filterbank, LOG_EPS)
    }

    fn check_rate(&self, clip: &AudioClip) -> Result<()> {
        if clip.sample_rate() != self.sample_rate {
            return Err(Error::arg(
                "clip",
                format!(
                    "sample rate {} differs from the extractor's {}",
                    clip.sample_rate(),
                    self.sample_rate
                ),
            ));
        }
        Ok(())
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<ClipFeatures> {
        self.check_rate(clip)?;
        let spec = stft_power(&clip.to_mono(), &self.recipe.stft)?;
        let mut full = log_mel(&spec, &self.filterbank, LOG_EPS)?;
        if self.recipe.lsmn {
            full.values = lsmn_matrix(&full.values);
        }
        let hop = full.frame_hop_s;
        let (components, roles) = match &self.recipe.decomposition {
            Decomposition::None => (Vec::new(), Vec::new()),
            Decomposition::Sdbd { window } => {
                let d = sdbd(&full, *window)?;
                (d.components, d.roles)
            }
            Decomposition::SdbdCascade { windows } => {
                let d = sdbd_cascade(&full, windows)?;
                (d.components, d.roles)
            }
            Decomposition::Hpss { window_t, window_f } => {
                let d = hpss(&spec, *window_t, *window_f, LOG_EPS)?;
                let comps = d
                    .components
                    .iter()
                    .map(|m| {
                        let part = crate::dsp::PowerSpectrogram::new(
                            m.clone(),
                            spec.frame_hop_s,
                            spec.sample_rate,
                            spec.n_fft,
                        )?;
                        let f = hpss_logmel(&part, &self.filterbank, LOG_EPS)?;
                        Ok(if self.recipe.lsmn { lsmn_matrix(&f.values) } else { f.values })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (comps, d.roles)
            }
        };
        Ok(ClipFeatures {
            full: full.values,
            components,
            roles,
            frame_hop_s: hop,
        })
    }
}

/// The feature streams a regime feeds to the network: the full feature
/// for the baseline, the last (short / percussive) component for DLDS, and
/// both components of a two-way decomposition otherwise.
pub fn regime_streams(regime: Regime, f: &ClipFeatures) -> Result<Vec<&Matrix>> {
    match regime {
        Regime::Baseline => Ok(vec![&f.full]),
        Regime::Dlds => f
            .components
            .last()
            .map(|m| vec![m])
            .ok_or_else(|| Error::InvalidConfig("dlds needs a decomposition".into())),
        Regime::MultiInput | Regime::Rfl => {
            if f.components.len() != 2 {
                return Err(Error::InvalidConfig(format!(
                    "{regime} needs a two-component decomposition, got {}",
                    f.components.len()
                )));
            }
            Ok(f.components.iter().collect())
        }
    }
}

/// Per-stream bin statistics over training clips (`clips[i][s]` is stream
/// `s` of clip `i`).
pub fn fit_stream_stats(clips: &[Vec<&Matrix>]) -> Result<Vec<BinStats>> {
    let n_streams = clips
        .first()
        .map(|c| c.len())
        .ok_or_else(|| Error::InvalidConfig("no training clips to fit statistics on".into()))?;
    (0..n_streams)
        .map(|s| fit_bin_stats(clips.iter().map(|c| c[s])))
        .collect()
}

/// Normalises each stream, cuts it into segments and appends them.
pub fn push_clip(
    ds: &mut SegmentDataset,
    streams: &[&Matrix],
    stats: &[BinStats],
    label: usize,
    clip: usize,
) -> Result<()> {
    if streams.len() != stats.len() {
        return Err(Error::shape(format!("{} streams", stats.len()), format!("{}", streams.len())));
    }
    let segs = streams
        .iter()
        .zip(stats)
        .map(|(m, st)| segment_matrix(&normalize_matrix(m, st)?))
        .collect::<Result<Vec<_>>>()?;
    for k in 0..segs[0].len() {
        let parts: Vec<&Matrix> = segs.iter().map(|s| &s[k]).collect();
        ds.push(&parts, label, clip)?;
    }
    Ok(())
}

/// Cuts each stream into segments and appends them unscaled.
pub fn push_clip_raw(ds: &mut SegmentDataset, streams: &[&Matrix], label: usize, clip: usize) -> Result<()> {
    let segs = streams
        .iter()
        .map(|m| segment_matrix(m))
        .collect::<Result<Vec<_>>>()?;
    for k in 0..segs.first().map_or(0, |s| s.len()) {
        let parts: Vec<&Matrix> = segs.iter().map(|s| &s[k]).collect();
        ds.push(&parts, label, clip)?;
    }
    Ok(())
}

/// Per-stream bin statistics of an unscaled dataset. Edge padding repeats
/// frames, so these equal the statistics of the unpadded features.
pub fn fit_dataset_stats(ds: &SegmentDataset) -> Result<Vec<BinStats>> {
    if ds.is_empty() {
        return Err(Error::InvalidConfig("no training segments to fit statistics on".into()));
    }
    let (f, t) = ds.plane;
    Ok(ds
        .inputs
        .iter()
        .map(|buf| {
            let mut min = vec![f64::INFINITY; f];
            let mut max = vec![f64::NEG_INFINITY; f];
            for (i, row) in buf.chunks_exact(t).enumerate() {
                let b = i % f;
                for &v in row {
                    min[b] = min[b].min(v as f64);
                    max[b] = max[b].max(v as f64);
                }
            }
            BinStats {
                min,
                max,
                n_features_seen: ds.len(),
            }
        })
        .collect())
}

/// Applies per-stream bin scaling in place.
pub fn normalize_dataset(ds: &mut SegmentDataset, stats: &[BinStats]) -> Result<()> {
    if stats.len() != ds.n_inputs() {
        return Err(Error::shape(format!("{} streams", ds.n_inputs()), format!("{}", stats.len())));
    }
    let (f, t) = ds.plane;
    for (buf, st) in ds.inputs.iter_mut().zip(stats) {
        if st.n_bins() != f {
            return Err(Error::shape(format!("{f} bins"), format!("{}", st.n_bins())));
        }
        for (i, row) in buf.chunks_exact_mut(t).enumerate() {
            let b = i % f;
            row.iter_mut().for_each(|v| *v = st.scale(b, *v as f64) as f32);
        }
    }
    Ok(())
}

/// Empty dataset shaped for `n_streams` inputs of `n_mels` bins.
pub fn empty_dataset(n_streams: usize, n_mels: usize) -> SegmentDataset {
    SegmentDataset::new(n_streams, (n_mels, SEGMENT_FRAMES))
}
