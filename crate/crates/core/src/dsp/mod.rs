//! Audio input and log-mel feature extraction.

mod audio;
mod mel;
mod segment;
mod stft;

pub use audio::{load_wav, write_wav_pcm16, AudioClip};
pub use mel::{hz_to_mel, log_mel, mel_edges_hz, mel_filterbank, mel_to_hz, LogMelFeature, LOG_EPS};
pub use segment::{
    segment_feature, segment_matrix, FeatureSegment, PADDED_FRAMES, SEGMENTS_PER_CLIP,
    SEGMENT_FRAMES,
};
pub use stft::{hann_window, stft_power, PowerSpectrogram, StftConfig};

/// Mel bins used throughout.
pub const N_MELS: usize = 128;
