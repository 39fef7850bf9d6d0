use super::LogMelFeature;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Frames per classifier segment (1.28 s at a 10 ms hop).
pub const SEGMENT_FRAMES: usize = 128;
/// Segments cut from one clip.
pub const SEGMENTS_PER_CLIP: usize = 8;
/// Frames covered by the segments of one clip.
pub const PADDED_FRAMES: usize = SEGMENT_FRAMES * SEGMENTS_PER_CLIP;

/// A 128-frame slice of a clip's feature (time × mel).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSegment {
    pub values: Matrix,
    pub source_clip_id: String,
    pub segment_index: usize,
}

/// Edge-pads (repeating the last frame) or truncates `m` to
/// [`PADDED_FRAMES`] rows and cuts it into [`SEGMENTS_PER_CLIP`] blocks.
pub fn segment_matrix(m: &Matrix) -> Result<Vec<Matrix>> {
    if m.rows() < SEGMENT_FRAMES {
        return Err(Error::arg(
            "feature",
            format!(
                "{} frames is fewer than one {SEGMENT_FRAMES}-frame segment",
                m.rows()
            ),
        ));
    }
    let cols = m.cols();
    Ok((0..SEGMENTS_PER_CLIP)
        .map(|s| {
            Matrix::from_fn(SEGMENT_FRAMES, cols, |r, c| {
                let t = (s * SEGMENT_FRAMES + r).min(m.rows() - 1);
                m.get(t, c)
            })
        })
        .collect())
}

pub fn segment_feature(feat: &LogMelFeature, clip_id: &str) -> Result<Vec<FeatureSegment>> {
    Ok(segment_matrix(&feat.values)?
        .into_iter()
        .enumerate()
        .map(|(segment_index, values)| FeatureSegment {
            values,
            source_clip_id: clip_id.to_string(),
            segment_index,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(frames: usize) -> LogMelFeature {
        LogMelFeature::new(
            Matrix::from_fn(frames, 128, |t, m| (t * 1000 + m) as f64),
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn thousand_frames_pad_with_last_frame() {
        let feat = feature(1000);
        let segs = segment_feature(&feat, "clip").unwrap();
        assert_eq!(segs.len(), 8);
        for (i, s) in segs.iter().enumerate() {
            assert_eq!(s.segment_index, i);
            assert_eq!(s.values.shape(), (128, 128));
            assert_eq!(s.source_clip_id, "clip");
        }
        // segment 7 covers padded frames 896..1024
        let last = &segs[7].values;
        for r in 0..128 {
            let t = 896 + r;
            let src = t.min(999);
            assert_eq!(last.row(r), feat.values.row(src));
        }
        assert_eq!(last.row(1000 - 896), feat.values.row(999));
        assert_eq!(last.row(127), feat.values.row(999));
    }

    #[test]
    fn exact_partition_without_padding() {
        let feat = feature(1024);
        let segs = segment_feature(&feat, "c").unwrap();
        let mut rebuilt = Vec::new();
        for s in &segs {
            rebuilt.extend_from_slice(s.values.as_slice());
        }
        assert_eq!(rebuilt, feat.values.as_slice());
    }

    #[test]
    fn constant_feature_gives_identical_segments() {
        let feat = LogMelFeature::new(Matrix::filled(1000, 128, -3.5), 0.01).unwrap();
        let segs = segment_feature(&feat, "c").unwrap();
        assert!(segs.iter().all(|s| s.values == segs[0].values));
        assert!(segs[0].values.as_slice().iter().all(|&v| v == -3.5));
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(segment_feature(&feature(127), "c").is_err());
        assert!(segment_feature(&feature(128), "c").is_ok());
    }
}
