//! Acoustic scene classification with duration-based time-frequency
//! decomposition and robust feature learning.
//!
//! The pipeline runs
//!
//! ```text
//! WAV -> power STFT -> log-mel -> [LSMN] -> decomposition -> per-bin scaling
//!     -> 8 × 128-frame segments -> CNN -> segment scores -> clip score
//! ```
//!
//! Decomposition splits a log-mel feature into long- and short-duration
//! parts with a time-axis median filter ([`decomp::sdbd`]), or a power
//! spectrogram into harmonic and percussive parts ([`decomp::hpss`]).
//! Multi-input networks give each component its own convolutional branch;
//! robust feature learning ([`train::Regime::Rfl`]) adds an auxiliary
//! classifier on the long branch trained with a de-focusing loss.

pub mod data;
pub mod decomp;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod featnorm;
pub mod losses;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// Scene classes of the reference datasets.
pub const N_CLASSES: usize = 10;
