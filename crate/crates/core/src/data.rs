//! Manifests, the multi-city split, the feature cache and a synthetic
//! scene generator.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Scene classes of the reference corpora, in label-index order.
pub const SCENE_CLASSES: [&str; 10] = [
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
];

pub const TRAIN_CITIES: [&str; 3] = ["vienna", "stockholm", "prague"];
pub const TEST_CITIES: [&str; 3] = ["lisbon", "helsinki", "barcelona"];
pub const SHARED_CITIES: [&str; 4] = ["paris", "milan", "lyon", "london"];

pub fn class_index(label: &str) -> Option<usize> {
    SCENE_CLASSES.iter().position(|&c| c == label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub filename: String,
    pub scene_label: String,
    pub city: String,
    pub device: String,
    pub split: Option<Split>,
}

impl ManifestEntry {
    pub fn label_index(&self) -> usize {
        class_index(&self.scene_label).expect("labels are validated on construction")
    }

    /// File stem, used as the clip id.
    pub fn clip_id(&self) -> String {
        Path::new(&self.filename)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.filename.clone())
    }
}

/// City token of a `scene-city-…` file name.
pub fn city_from_filename(filename: &str) -> Option<String> {
    let base = filename.rsplit(['/', '\\']).next()?;
    base.split('-').nth(1).filter(|c| !c.is_empty()).map(str::to_lowercase)
}

const HEADER: [&str; 4] = ["filename", "scene_label", "identifier", "source_label"];

/// Parses a tab-separated manifest. An optional fifth `split` column
/// (`train`/`test`) is accepted.
pub fn parse_manifest_str(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.trim_end_matches('\r').split('\t').collect(),
        None => {
            return Err(Error::Manifest {
                line: 1,
                reason: "missing header".into(),
            })
        }
    };
    let has_split = match header.as_slice() {
        h if h == HEADER => false,
        [a, b, c, d, "split"] if [*a, *b, *c, *d] == HEADER => true,
        _ => {
            return Err(Error::Manifest {
                line: 1,
                reason: format!("expected header {:?}, found {header:?}", HEADER.join("\t")),
            })
        }
    };
    let n_fields = if has_split { 5 } else { 4 };
    let mut out = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let row = raw.trim_end_matches('\r');
        if row.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = row.split('\t').collect();
        if f.len() != n_fields {
            return Err(Error::Manifest {
                line,
                reason: format!("expected {n_fields} fields, found {}", f.len()),
            });
        }
        if class_index(f[1]).is_none() {
            return Err(Error::Manifest {
                line,
                reason: format!("unknown scene label `{}`", f[1]),
            });
        }
        let city = city_from_filename(f[0]).ok_or_else(|| Error::Manifest {
            line,
            reason: format!("cannot parse a city from `{}`", f[0]),
        })?;
        let split = if has_split {
            Some(match f[4] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(Error::Manifest {
                        line,
                        reason: format!("unknown split `{other}`"),
                    })
                }
            })
        } else {
            None
        };
        out.push(ManifestEntry {
            filename: f[0].to_string(),
            scene_label: f[1].to_string(),
            city,
            device: f[3].to_string(),
            split,
        });
    }
    Ok(out)
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest_str(&text)
}

/// Writes entries with the `split` column when every entry has one.
pub fn write_manifest(entries: &[ManifestEntry], mut w: impl Write) -> std::io::Result<()> {
    let with_split = !entries.is_empty() && entries.iter().all(|e| e.split.is_some());
    write!(w, "{}", HEADER.join("\t"))?;
    if with_split {
        write!(w, "\tsplit")?;
    }
    writeln!(w)?;
    for e in entries {
        let id = city_identifier(&e.filename).unwrap_or_else(|| e.city.clone());
        write!(w, "{}\t{}\t{}\t{}", e.filename, e.scene_label, id, e.device)?;
        if let (true, Some(s)) = (with_split, e.split) {
            write!(w, "\t{}", s.as_str())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn city_identifier(filename: &str) -> Option<String> {
    let base = filename.rsplit(['/', '\\']).next()?;
    let mut it = base.split('-').skip(1);
    Some(format!("{}-{}", it.next()?, it.next()?))
}

/// Train / test clip counts per city.
pub type SplitCounts = BTreeMap<String, (usize, usize)>;

/// Assigns the multi-city split: three cities train only, three test only,
/// and each remaining city is halved at random (seeded per city).
pub fn multicity_split(entries: &[ManifestEntry], seed: u64) -> Result<(Vec<ManifestEntry>, SplitCounts)> {
    let mut out = entries.to_vec();
    let mut shared: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let c = e.city.as_str();
        if TRAIN_CITIES.contains(&c) {
            out[i].split = Some(Split::Train);
        } else if TEST_CITIES.contains(&c) {
            out[i].split = Some(Split::Test);
        } else if SHARED_CITIES.contains(&c) {
            shared.entry(c).or_default().push(i);
        } else {
            return Err(Error::UnknownCity(e.city.clone()));
        }
    }
    for (city, mut idx) in shared {
        let city_seed = city.bytes().fold(seed, |h, b| h.rotate_left(7) ^ b as u64);
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(city_seed));
        let half = idx.len() / 2;
        for (k, &i) in idx.iter().enumerate() {
            out[i].split = Some(if k < half { Split::Train } else { Split::Test });
        }
    }
    let mut counts = SplitCounts::new();
    for e in &out {
        let c = counts.entry(e.city.clone()).or_default();
        match e.split {
            Some(Split::Train) => c.0 += 1,
            _ => c.1 += 1,
        }
    }
    Ok((out, counts))
}

const TFF_MAGIC: [u8; 4] = *b"TFF1";

/// Encodes a frames × bins feature as `TFF1` (values rounded to `f32`).
pub fn encode_feature(m: &Matrix) -> Result<Vec<u8>> {
    let (t, b) = m.shape();
    let (t32, b32) = (
        u32::try_from(t).map_err(|_| Error::DimensionOverflow(format!("{t} frames")))?,
        u32::try_from(b).map_err(|_| Error::DimensionOverflow(format!("{b} bins")))?,
    );
    let mut buf = Vec::with_capacity(12 + 4 * t * b);
    buf.extend_from_slice(&TFF_MAGIC);
    buf.extend_from_slice(&t32.to_le_bytes());
    buf.extend_from_slice(&b32.to_le_bytes());
    for &v in m.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_feature(buf: &[u8]) -> Result<Matrix> {
    if buf.len() < 12 {
        return Err(Error::Truncated {
            needed: 12,
            found: buf.len(),
        });
    }
    let magic: [u8; 4] = buf[..4].try_into().unwrap();
    if magic != TFF_MAGIC {
        return Err(Error::BadMagic {
            expected: TFF_MAGIC,
            found: magic,
        });
    }
    let t = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let b = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let needed = t
        .checked_mul(b)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| Error::DimensionOverflow(format!("{t} x {b} feature")))?;
    if buf.len() < needed {
        return Err(Error::Truncated {
            needed,
            found: buf.len(),
        });
    }
    if buf.len() > needed {
        return Err(Error::InvalidConfig(format!(
            "{} trailing bytes after feature payload",
            buf.len() - needed
        )));
    }
    let data = buf[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Matrix::from_vec(t, b, data)
}

pub fn cache_write(feature: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_feature(feature)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

pub fn cache_read(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode_feature(&buf)
}

/// Decaying-tone events and background colour of one synthetic class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub name: String,
    /// Tone frequencies (Hz); each event picks one.
    pub tone_hz: Vec<f64>,
    /// Exponential decay constant of an event (s).
    pub decay_s: f64,
    /// Poisson event rate (events / s).
    pub event_rate_hz: f64,
    /// Background log-spectral envelope as `(Hz, dB)` knots, interpolated
    /// linearly in log-frequency.
    pub envelope: Vec<(f64, f64)>,
}

impl ClassTemplate {
    /// Envelope gain (dB) at `hz`.
    pub fn envelope_db(&self, hz: f64) -> f64 {
        interp_log_hz(&self.envelope, hz)
    }
}

fn interp_log_hz(knots: &[(f64, f64)], hz: f64) -> f64 {
    match knots {
        [] => 0.0,
        [(_, g)] => *g,
        _ => {
            let x = hz.max(1.0).ln();
            if x <= knots[0].0.ln() {
                return knots[0].1;
            }
            for w in knots.windows(2) {
                let (x0, x1) = (w[0].0.ln(), w[1].0.ln());
                if x <= x1 {
                    let a = (x - x0) / (x1 - x0);
                    return w[0].1 + a * (w[1].1 - w[0].1);
                }
            }
            knots[knots.len() - 1].1
        }
    }
}

/// A recording device modelled as a short FIR filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceFilter {
    pub name: String,
    pub taps: Vec<f64>,
}

impl DeviceFilter {
    pub fn identity(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            taps: vec![1.0],
        }
    }

    /// Minimum-phase FIR (via the real cepstrum) approximating the
    /// log-magnitude response `gain_db(hz)`, truncated to `n_taps`.
    pub fn minimum_phase(
        name: impl Into<String>,
        gain_db: impl Fn(f64) -> f64,
        sample_rate: u32,
        n_taps: usize,
    ) -> Self {
        let n = 1024;
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|k| {
                let kk = if k <= n / 2 { k } else { n - k };
                let hz = kk as f64 * sample_rate as f64 / n as f64;
                Complex::new(gain_db(hz) * 10f64.ln() / 20.0, 0.0)
            })
            .collect();
        inv.process(&mut buf);
        let cep: Vec<f64> = buf.iter().map(|c| c.re / n as f64).collect();
        let mut folded: Vec<Complex<f64>> = (0..n)
            .map(|i| {
                let v = match i {
                    0 => cep[0],
                    i if i < n / 2 => 2.0 * cep[i],
                    i if i == n / 2 => cep[i],
                    _ => 0.0,
                };
                Complex::new(v, 0.0)
            })
            .collect();
        fwd.process(&mut folded);
        let mut spec: Vec<Complex<f64>> = folded.iter().map(|c| c.exp()).collect();
        inv.process(&mut spec);
        let taps = spec.iter().take(n_taps.clamp(1, n)).map(|c| c.re / n as f64).collect();
        Self {
            name: name.into(),
            taps,
        }
    }

    /// Causal convolution truncated to the input length.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.taps == [1.0] {
            return x.to_vec();
        }
        let mut y = vec![0.0; x.len()];
        for (i, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &h) in self.taps.iter().enumerate().take(i + 1) {
                acc += h * x[i - k];
            }
            *out = acc;
        }
        y
    }

    /// Magnitude response (dB) at `hz`.
    pub fn response_db(&self, hz: f64, sample_rate: u32) -> f64 {
        let w = 2.0 * PI * hz / sample_rate as f64;
        let h: Complex<f64> = self
            .taps
            .iter()
            .enumerate()
            .map(|(k, &t)| Complex::from_polar(t, -w * k as f64))
            .sum();
        20.0 * h.norm().max(1e-300).log10()
    }
}

/// Compact knobs from which a full [`SynthConfig`] is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_classes: usize,
    pub clips_per_class: usize,
    pub sample_rate: u32,
    pub clip_seconds: f64,
    pub n_seen_devices: usize,
    pub n_unseen_devices: usize,
    /// Peak deviation of a device response from flat (dB).
    pub device_max_db: f64,
    pub device_taps: usize,
    /// Fraction of each class held out for testing.
    pub test_fraction: f64,
    /// Scales every class event rate; 0 gives background-only clips.
    pub transient_rate_scale: f64,
    /// Replace every device by an identity filter.
    pub flat_devices: bool,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_classes: 10,
            clips_per_class: 60,
            sample_rate: 16_000,
            clip_seconds: 10.0,
            n_seen_devices: 3,
            n_unseen_devices: 2,
            device_max_db: 12.0,
            device_taps: 64,
            test_fraction: 0.4,
            transient_rate_scale: 1.0,
            flat_devices: false,
            seed: 0,
        }
    }
}

/// Fully explicit synthetic-dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: Vec<ClassTemplate>,
    pub clips_per_class: usize,
    pub sample_rate: u32,
    pub clip_seconds: f64,
    pub devices: Vec<DeviceFilter>,
    pub seen_devices: Vec<String>,
    pub unseen_devices: Vec<String>,
    pub test_fraction: f64,
    /// RMS of the background before device filtering.
    pub background_rms: f64,
    /// Peak amplitude of a transient event.
    pub transient_peak: f64,
    pub seed: u64,
}

fn smooth_random_db(rng: &mut impl Rng, max_db: f64, sample_rate: u32) -> Vec<(f64, f64)> {
    let nyq = sample_rate as f64 / 2.0;
    let knots = 7;
    (0..knots)
        .map(|i| {
            let hz = 50.0 * (nyq / 50.0).powf(i as f64 / (knots - 1) as f64);
            (hz, rng.gen_range(-max_db..=max_db))
        })
        .collect()
}

impl SynthConfig {
    pub fn from_params(p: &SynthParams) -> Result<Self> {
        if p.n_classes == 0 || p.n_classes > SCENE_CLASSES.len() {
            return Err(Error::InvalidConfig(format!(
                "n_classes must lie in 1..={}",
                SCENE_CLASSES.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5EED_0F_5CE9E5);
        let nyq = p.sample_rate as f64 / 2.0;
        let lo = 200f64.min(nyq / 4.0);
        let hi = (0.8 * nyq).min(6000.0);
        let n_slots = 3 * p.n_classes;
        let slots: Vec<f64> = (0..n_slots)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n_slots - 1).max(1) as f64))
            .collect();
        let mut slot_order: Vec<usize> = (0..n_slots).collect();
        slot_order.shuffle(&mut rng);
        let classes = (0..p.n_classes)
            .map(|c| {
                let tones = slot_order[3 * c..3 * c + 3]
                    .iter()
                    .map(|&s| slots[s] * rng.gen_range(0.98..1.02))
                    .collect();
                ClassTemplate {
                    name: SCENE_CLASSES[c].to_string(),
                    tone_hz: tones,
                    decay_s: rng.gen_range(0.03..0.12),
                    event_rate_hz: p.transient_rate_scale * rng.gen_range(1.5..4.0),
                    envelope: smooth_random_db(&mut rng, 8.0, p.sample_rate),
                }
            })
            .collect();
        let n_dev = p.n_seen_devices + p.n_unseen_devices;
        let names: Vec<String> = (0..n_dev)
            .map(|i| {
                if i < p.n_seen_devices {
                    ((b'a' + i as u8) as char).to_string()
                } else {
                    format!("s{}", i - p.n_seen_devices + 1)
                }
            })
            .collect();
        let devices = names
            .iter()
            .map(|name| {
                if p.flat_devices {
                    DeviceFilter::identity(name.clone())
                } else {
                    let knots = smooth_random_db(&mut rng, p.device_max_db, p.sample_rate);
                    DeviceFilter::minimum_phase(
                        name.clone(),
                        |hz| interp_log_hz(&knots, hz),
                        p.sample_rate,
                        p.device_taps,
                    )
                }
            })
            .collect();
        let cfg = Self {
            classes,
            clips_per_class: p.clips_per_class,
            sample_rate: p.sample_rate,
            clip_seconds: p.clip_seconds,
            devices,
            seen_devices: names[..p.n_seen_devices].to_vec(),
            unseen_devices: names[p.n_seen_devices..].to_vec(),
            test_fraction: p.test_fraction,
            background_rms: 0.05,
            transient_peak: 0.25,
            seed: p.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() || self.clips_per_class == 0 {
            return Err(Error::InvalidConfig("need at least one class and clip".into()));
        }
        if !(self.clip_seconds > 0.0) || self.sample_rate == 0 {
            return Err(Error::InvalidConfig("clip length and sample rate must be positive".into()));
        }
        if self.devices.len() < 2 || self.unseen_devices.is_empty() || self.seen_devices.is_empty() {
            return Err(Error::InvalidConfig(
                "need at least two devices with one seen and one unseen".into(),
            ));
        }
        for name in self.seen_devices.iter().chain(&self.unseen_devices) {
            if !self.devices.iter().any(|d| &d.name == name) {
                return Err(Error::InvalidConfig(format!("device `{name}` has no filter")));
            }
        }
        if self.seen_devices.iter().any(|d| self.unseen_devices.contains(d)) {
            return Err(Error::InvalidConfig("a device cannot be both seen and unseen".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::InvalidConfig("test_fraction must lie in [0, 1)".into()));
        }
        for c in &self.classes {
            if c.envelope.iter().all(|&(_, db)| db == f64::NEG_INFINITY) || c.envelope.is_empty() {
                return Err(Error::InvalidConfig(format!("class {} has a degenerate envelope", c.name)));
            }
            if c.tone_hz.is_empty() && c.event_rate_hz > 0.0 {
                return Err(Error::InvalidConfig(format!("class {} has events but no tones", c.name)));
            }
        }
        Ok(())
    }

    fn device(&self, name: &str) -> &DeviceFilter {
        self.devices.iter().find(|d| d.name == name).expect("validated device")
    }

    pub fn n_samples(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }
}

/// One planned clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub entry: ManifestEntry,
    pub class: usize,
    /// Position within the class, which seeds the clip's randomness.
    pub index: usize,
}

/// The manifest of the synthetic dataset. Each class is split into a test
/// part (alternating seen and unseen devices) and a training part (seen
/// devices only).
pub fn synth_plan(cfg: &SynthConfig) -> Result<Vec<SynthClip>> {
    cfg.validate()?;
    let all_cities: Vec<&str> = TRAIN_CITIES
        .iter()
        .chain(&TEST_CITIES)
        .chain(&SHARED_CITIES)
        .copied()
        .collect();
    let n_test = (cfg.clips_per_class as f64 * cfg.test_fraction).round() as usize;
    let mut out = Vec::with_capacity(cfg.classes.len() * cfg.clips_per_class);
    for (c, class) in cfg.classes.iter().enumerate() {
        for i in 0..cfg.clips_per_class {
            let (split, device) = if i < n_test {
                let pool = if i % 2 == 0 { &cfg.seen_devices } else { &cfg.unseen_devices };
                (Split::Test, pool[(i / 2) % pool.len()].clone())
            } else {
                (Split::Train, cfg.seen_devices[(i - n_test) % cfg.seen_devices.len()].clone())
            };
            let city = all_cities[(c + i) % all_cities.len()];
            out.push(SynthClip {
                entry: ManifestEntry {
                    filename: format!("audio/{}-{city}-{i}-0-{device}.wav", class.name),
                    scene_label: class.name.clone(),
                    city: city.to_string(),
                    device,
                    split: Some(split),
                },
                class: c,
                index: i,
            });
        }
    }
    Ok(out)
}

/// Renders the unfiltered background and transient parts of a clip.
pub fn render_sources(cfg: &SynthConfig, clip: &SynthClip) -> (Vec<f64>, Vec<f64>) {
    let class = &cfg.classes[clip.class];
    let seed = cfg.seed ^ ((clip.class as u64) << 40) ^ (clip.index as u64).wrapping_mul(0x9E37_79B9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_samples();
    let sr = cfg.sample_rate as f64;

    let mut spec: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut spec);
    for (k, v) in spec.iter_mut().enumerate() {
        let kk = if k <= n / 2 { k } else { n - k };
        let hz = kk as f64 * sr / n as f64;
        let gain = if hz < 20.0 {
            0.0
        } else {
            10f64.powf(class.envelope_db(hz) / 20.0)
        };
        *v *= gain;
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    let mut background: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let rms = (background.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        let s = cfg.background_rms / rms;
        background.iter_mut().for_each(|v| *v *= s);
    }

    let mut transients = vec![0.0; n];
    if class.event_rate_hz > 0.0 {
        let gap = Exp::new(class.event_rate_hz).expect("positive rate");
        let mut t = gap.sample(&mut rng);
        let len = (6.0 * class.decay_s * sr) as usize;
        while t < cfg.clip_seconds {
            let f = class.tone_hz[rng.gen_range(0..class.tone_hz.len())];
            let amp = cfg.transient_peak * rng.gen_range(0.5..1.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let start = (t * sr) as usize;
            for k in 0..len.min(n.saturating_sub(start)) {
                let tau = k as f64 / sr;
                transients[start + k] += amp * (-tau / class.decay_s).exp() * (2.0 * PI * f * tau + phase).sin();
            }
            t += gap.sample(&mut rng);
        }
    }
    (background, transients)
}

/// Renders a clip through its device filter.
pub fn render_clip(cfg: &SynthConfig, clip: &SynthClip) -> Result<AudioClip> {
    let (bg, tr) = render_sources(cfg, clip);
    let mix: Vec<f64> = bg.iter().zip(&tr).map(|(a, b)| a + b).collect();
    let out = cfg.device(&clip.entry.device).apply(&mix);
    AudioClip::mono(out.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect(), cfg.sample_rate)
}

/// Every clip of the dataset rendered in manifest order.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<(ManifestEntry, AudioClip)>> {
    synth_plan(cfg)?
        .into_iter()
        .map(|c| Ok((c.entry.clone(), render_clip(cfg, &c)?)))
        .collect()
}

/// Dataset description written next to the generated audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescription {
    pub class_names: Vec<String>,
    pub seen_devices: Vec<String>,
    pub unseen_devices: Vec<String>,
    pub seed: u64,
    pub sample_rate: u32,
    pub clips_per_class: usize,
    pub config: SynthConfig,
}

impl DatasetDescription {
    pub fn of(cfg: &SynthConfig) -> Self {
        Self {
            class_names: cfg.classes.iter().map(|c| c.name.clone()).collect(),
            seen_devices: cfg.seen_devices.clone(),
            unseen_devices: cfg.unseen_devices.clone(),
            seed: cfg.seed,
            sample_rate: cfg.sample_rate,
            clips_per_class: cfg.clips_per_class,
            config: cfg.clone(),
        }
    }
}
