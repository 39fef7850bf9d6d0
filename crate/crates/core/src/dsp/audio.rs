use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Audio samples in `[-1, 1]`, interleaved when `channel_count > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
    channel_count: u16,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32, channel_count: u16) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if sample_rate == 0 {
            return Err(Error::arg("sample_rate", "must be positive"));
        }
        if channel_count == 0 {
            return Err(Error::arg("channel_count", "must be at least 1"));
        }
        if samples.len() % channel_count as usize != 0 {
            return Err(Error::arg(
                "samples",
                format!(
                    "{} samples do not divide into {channel_count} channels",
                    samples.len()
                ),
            ));
        }
        Ok(Self {
            samples,
            sample_rate,
            channel_count,
        })
    }

    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        Self::new(samples, sample_rate, 1)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel_count(&self) -> u16 {
        self.channel_count
    }

    /// Number of sample frames (samples per channel).
    pub fn len_frames(&self) -> usize {
        self.samples.len() / self.channel_count as usize
    }

    pub fn duration_s(&self) -> f64 {
        self.len_frames() as f64 / self.sample_rate as f64
    }

    /// Averages all channels into one.
    pub fn to_mono(&self) -> AudioClip {
        if self.channel_count == 1 {
            return self.clone();
        }
        let ch = self.channel_count as usize;
        let samples = self
            .samples
            .chunks_exact(ch)
            .map(|frame| (frame.iter().map(|&s| s as f64).sum::<f64>() / ch as f64) as f32)
            .collect();
        AudioClip {
            samples,
            sample_rate: self.sample_rate,
            channel_count: 1,
        }
    }
}

/// Reads a PCM16 or float32 RIFF/WAVE file and downmixes it to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = WavReader::new(std::io::BufReader::new(file))?;
    let spec = reader.spec();
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader.samples::<f32>().collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{bits}-bit {fmt:?} (expected 16-bit PCM or 32-bit float)"
            )))
        }
    };
    if samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let clip = AudioClip::new(samples, spec.sample_rate, spec.channels)?;
    Ok(clip.to_mono())
}

/// Writes a clip as 16-bit PCM, clamping to the representable range.
pub fn write_wav_pcm16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: clip.channel_count,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in &clip.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, spec: WavSpec, samples: &[i16]) {
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    fn pcm16(channels: u16) -> WavSpec {
        WavSpec {
            channels,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        }
    }

    #[test]
    fn silence_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silence.wav");
        write_raw(&path, pcm16(1), &vec![0; 44100]);
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.len_frames(), 44100);
        assert_eq!(clip.sample_rate(), 44100);
        assert!(clip.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn antiphase_stereo_averages_to_silence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let mut interleaved = Vec::new();
        for i in 0..1000i16 {
            let x = (i * 31) % 20000 - 10000;
            interleaved.push(x);
            interleaved.push(-x);
        }
        write_raw(&path, pcm16(2), &interleaved);
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.channel_count(), 1);
        assert_eq!(clip.len_frames(), 1000);
        assert!(clip.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.wav");
        write_raw(&path, pcm16(1), &[16384, -32768, 32767]);
        let clip = load_wav(&path).unwrap();
        let expected = 16384.0 / 32768.0;
        assert!((clip.samples()[0] as f64 - expected).abs() <= 1.0 / 32768.0);
        assert_eq!(clip.samples()[1], -1.0);
    }

    #[test]
    fn float32_is_read_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f32.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for v in [0.25f32, -0.75, 0.5] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.samples(), &[0.25, -0.75, 0.5]);
    }

    #[test]
    fn rejects_unsupported_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pcm8.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            load_wav(&path),
            Err(Error::UnsupportedEncoding(_))
        ));

        let empty = dir.path().join("empty.wav");
        write_raw(&empty, pcm16(1), &[]);
        assert!(matches!(load_wav(&empty), Err(Error::EmptyAudio)));

        assert!(matches!(
            load_wav(dir.path().join("missing.wav")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn pcm16_write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let samples: Vec<f32> = (0..500).map(|i| ((i as f32) * 0.01).sin() * 0.8).collect();
        let clip = AudioClip::mono(samples.clone(), 22050).unwrap();
        write_wav_pcm16(&path, &clip).unwrap();
        let back = load_wav(&path).unwrap();
        for (a, b) in samples.iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
