use std::path::PathBuf;

use asc_rfl::data::{cache_write, Split};
use asc_rfl::decomp::{format_boundary, hpss, hpss_logmel, long_short_boundary, sdbd, sdbd_cascade};
use asc_rfl::dsp::{mel_filterbank, LogMelFeature, PowerSpectrogram, LOG_EPS};
use asc_rfl::featnorm::{lsmn_matrix, BinStats};

use crate::cache::{self, Cache, CacheInfo, CacheKind, FEATURE_DIR};
use crate::features::{absolute, merge_stats, stored_stats};
use crate::{create_dir, parallel_map, usage, write_outputs, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sdbd,
    Hpss,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sdbd" => Ok(Method::Sdbd),
            "hpss" => Ok(Method::Hpss),
            other => Err(format!("unknown method {other:?} (expected sdbd or hpss)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecomposeArgs {
    pub input: PathBuf,
    pub method: Method,
    /// Time-axis windows; several give an SDBD cascade.
    pub windows: Vec<usize>,
    /// Frequency-axis window for HPSS (defaults to the time window).
    pub window_f: Option<usize>,
    pub out: PathBuf,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeSummary {
    pub suffixes: Vec<String>,
    /// Human-readable note such as the long/short boundary.
    pub note: String,
    pub outputs: Vec<PathBuf>,
}

pub fn decompose(args: &DecomposeArgs) -> Result<DecomposeSummary> {
    let src = Cache::open(&args.input)?;
    let info = &src.info;
    if args.windows.is_empty() {
        return Err(usage("decompose needs at least one --window"));
    }
    if let Some(w) = args.windows.iter().chain(&args.window_f).find(|w| **w % 2 == 0 || **w == 0) {
        return Err(usage(format!("median filter windows must be odd and positive, got {w}")));
    }
    let (suffixes, note, filterbank): (Vec<String>, String, _) = match args.method {
        Method::Sdbd => {
            if info.kind != CacheKind::LogMel {
                return Err(usage(format!("sdbd needs a log-mel cache, {} holds {:?}", src.dir.display(), info.kind)));
            }
            let hop = info.stft.hop_ms / 1000.0;
            let n = args.windows.len() + 1;
            let suffixes = (0..n)
                .map(|i| match i {
                    0 => "long".to_string(),
                    i if i == n - 1 => "short".to_string(),
                    i => format!("band{i}"),
                })
                .collect();
            let bounds = args
                .windows
                .iter()
                .map(|w| Ok(format!("{} s", format_boundary(long_short_boundary(*w, hop)?))))
                .collect::<Result<Vec<_>>>()?;
            (suffixes, format!("long/short boundary: {}", bounds.join(", ")), None)
        }
        Method::Hpss => {
            if info.kind != CacheKind::Power {
                return Err(usage(format!(
                    "hpss needs a power-spectrogram cache (features --kind power), {} holds {:?}",
                    src.dir.display(),
                    info.kind
                )));
            }
            if args.windows.len() != 1 {
                return Err(usage("hpss takes a single time window"));
            }
            let fb = mel_filterbank(info.stft.n_fft, info.n_mels, info.sample_rate)?;
            (vec!["h".into(), "p".into()], String::from("harmonic/percussive split"), Some(fb))
        }
    };

    let entries = src.manifest()?;
    create_dir(&args.out.join(FEATURE_DIR))?;
    let hop_s = info.stft.hop_ms / 1000.0;
    let window_f = args.window_f.unwrap_or(args.windows[0]);
    let results = parallel_map(entries.len(), args.jobs, |i| {
        let e = &entries[i];
        let input = src.read(&e.clip_id(), "")?;
        let components = match &filterbank {
            None => {
                let feat = LogMelFeature::new(input, hop_s)?;
                let d = if args.windows.len() == 1 {
                    sdbd(&feat, args.windows[0])?
                } else {
                    sdbd_cascade(&feat, &args.windows)?
                };
                d.components
            }
            Some(fb) => {
                let spec = PowerSpectrogram::new(input, hop_s, info.sample_rate, info.stft.n_fft)?;
                let d = hpss(&spec, args.windows[0], window_f, LOG_EPS)?;
                d.components
                    .into_iter()
                    .map(|m| {
                        let part = PowerSpectrogram::new(m, hop_s, info.sample_rate, info.stft.n_fft)?;
                        let f = hpss_logmel(&part, fb, LOG_EPS)?.values;
                        Ok(if info.lsmn { lsmn_matrix(&f) } else { f })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let train = e.split == Some(Split::Train);
        let mut paths = Vec::new();
        let mut stats = Vec::new();
        for (m, suffix) in components.iter().zip(&suffixes) {
            let path = cache::stream_path(&args.out, &e.clip_id(), suffix);
            cache_write(m, &path)?;
            paths.push(path);
            if train {
                stats.push(stored_stats(m)?);
            }
        }
        Ok::<_, CliError>((paths, stats))
    });

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    let mut stats: Vec<Option<BinStats>> = vec![None; suffixes.len()];
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok((paths, s)) => {
                outputs.extend(paths);
                for (acc, s) in stats.iter_mut().zip(s) {
                    merge_stats(acc, s);
                }
            }
            Err(err) => failures.push((e.filename.clone(), err.to_string())),
        }
    }
    let out_info = CacheInfo {
        kind: CacheKind::Components,
        sample_rate: info.sample_rate,
        stft: info.stft,
        n_mels: info.n_mels,
        lsmn: info.lsmn,
        components: suffixes.clone(),
        method: Some(match args.method {
            Method::Sdbd => "sdbd".into(),
            Method::Hpss => "hpss".into(),
        }),
        windows: Some(match args.method {
            Method::Sdbd => args.windows.clone(),
            Method::Hpss => vec![args.windows[0], window_f],
        }),
        source: Some(absolute(&src.dir)),
    };
    outputs.push(cache::write_info(&args.out, &out_info)?);
    outputs.push(cache::write_manifest_file(&args.out, &entries)?);
    for (s, suffix) in stats.iter().zip(&suffixes) {
        if let Some(s) = s {
            let path = cache::stats_path(&args.out, suffix);
            s.write(&path)?;
            outputs.push(path);
        }
    }
    write_outputs(&args.out, &outputs)?;
    cache::report_failures(&args.out, &failures, entries.len())?;
    Ok(DecomposeSummary {
        suffixes,
        note,
        outputs,
    })
}
