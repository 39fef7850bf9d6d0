//! Per-bin input scaling from training statistics, and log-spectral mean
//! normalisation.

use std::io::{Read, Write};
use std::path::Path;

use crate::dsp::LogMelFeature;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const STATS_MAGIC: [u8; 4] = *b"BST1";

/// Per-frequency-bin minimum and maximum over a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub n_features_seen: usize,
}

impl BinStats {
    pub fn n_bins(&self) -> usize {
        self.min.len()
    }

    /// Folds one more feature into the running min/max.
    pub fn update(&mut self, m: &Matrix) -> Result<()> {
        if self.n_features_seen == 0 && self.min.is_empty() {
            self.min = vec![f64::INFINITY; m.cols()];
            self.max = vec![f64::NEG_INFINITY; m.cols()];
        }
        if m.cols() != self.n_bins() {
            return Err(Error::shape(
                format!("{} bins", self.n_bins()),
                format!("{} bins", m.cols()),
            ));
        }
        for r in 0..m.rows() {
            for (b, &v) in m.row(r).iter().enumerate() {
                self.min[b] = self.min[b].min(v);
                self.max[b] = self.max[b].max(v);
            }
        }
        self.n_features_seen += 1;
        Ok(())
    }

    /// Scaled value of `x` in bin `b`.
    pub fn scale(&self, b: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[b], self.max[b]);
        if hi > lo {
            2.0 * (x - lo) / (hi - lo) - 1.0
        } else {
            0.0
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(8 + 8 * self.n_bins());
        buf.extend_from_slice(&STATS_MAGIC);
        buf.extend_from_slice(&(self.n_bins() as u32).to_le_bytes());
        for v in self.min.iter().chain(&self.max) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<BinStats> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        if buf.len() < 8 {
            return Err(Error::Truncated {
                needed: 8,
                found: buf.len(),
            });
        }
        let magic: [u8; 4] = buf[..4].try_into().unwrap();
        if magic != STATS_MAGIC {
            return Err(Error::BadMagic {
                expected: STATS_MAGIC,
                found: magic,
            });
        }
        let n = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let needed = 8 + 8 * n;
        if buf.len() < needed {
            return Err(Error::Truncated {
                needed,
                found: buf.len(),
            });
        }
        let vals: Vec<f64> = buf[8..needed]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(BinStats {
            min: vals[..n].to_vec(),
            max: vals[n..].to_vec(),
            n_features_seen: 1,
        })
    }
}

/// Per-bin min/max over every frame of every training feature.
pub fn fit_bin_stats<'a>(features: impl IntoIterator<Item = &'a Matrix>) -> Result<BinStats> {
    let mut stats = BinStats {
        min: Vec::new(),
        max: Vec::new(),
        n_features_seen: 0,
    };
    for m in features {
        stats.update(m)?;
    }
    if stats.n_features_seen == 0 {
        return Err(Error::arg("features", "cannot fit statistics on an empty set"));
    }
    Ok(stats)
}

/// Maps each bin affinely so the training range `[min_b, max_b]` lands on
/// `[-1, 1]`. Degenerate bins map to 0. Values outside the training range
/// are not clipped.
pub fn normalize_matrix(m: &Matrix, stats: &BinStats) -> Result<Matrix> {
    if stats.n_features_seen == 0 {
        return Err(Error::arg("stats", "statistics have not been fitted"));
    }
    if m.cols() != stats.n_bins() {
        return Err(Error::shape(
            format!("{} bins", stats.n_bins()),
            format!("{} bins", m.cols()),
        ));
    }
    Ok(Matrix::from_fn(m.rows(), m.cols(), |r, b| stats.scale(b, m.get(r, b))))
}

pub fn normalize(f: &LogMelFeature, stats: &BinStats) -> Result<LogMelFeature> {
    LogMelFeature::new(normalize_matrix(&f.values, stats)?, f.frame_hop_s)
}

/// Subtracts each bin's mean over time: `R_i[b] = f_i[b] - mean_t f_t[b]`.
pub fn lsmn_matrix(m: &Matrix) -> Matrix {
    let t = m.rows() as f64;
    let means: Vec<f64> = (0..m.cols())
        .map(|b| (0..m.rows()).map(|r| m.get(r, b)).sum::<f64>() / t)
        .collect();
    Matrix::from_fn(m.rows(), m.cols(), |r, b| m.get(r, b) - means[b])
}

pub fn lsmn(f: &LogMelFeature) -> LogMelFeature {
    LogMelFeature {
        values: lsmn_matrix(&f.values),
        frame_hop_s: f.frame_hop_s,
    }
}
