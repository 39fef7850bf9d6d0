use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use asc_rfl::data::{cache_write, multicity_split, parse_manifest, Split};
use asc_rfl::dsp::{load_wav, stft_power};
use asc_rfl::featnorm::{lsmn_matrix, BinStats};
use asc_rfl::pipeline::{FeatureExtractor, FeatureRecipe};
use asc_rfl::Matrix;

use crate::cache::{self, CacheInfo, CacheKind, FEATURE_DIR};
use crate::{create_dir, parallel_map, usage, write_outputs, Result, RunConfig};

#[derive(Debug, Clone)]
pub struct FeaturesArgs {
    pub manifest: PathBuf,
    pub audio_dir: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub jobs: usize,
    /// `LogMel` or `Power`.
    pub kind: CacheKind,
}

/// Outcome of a `features` run.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturesSummary {
    pub n_clips: usize,
    pub n_written: usize,
    pub outputs: Vec<PathBuf>,
}

/// Element-wise union of two min/max tables.
pub(crate) fn merge_stats(acc: &mut Option<BinStats>, s: BinStats) {
    match acc {
        None => *acc = Some(s),
        Some(a) => {
            for (m, v) in a.min.iter_mut().zip(&s.min) {
                *m = m.min(*v);
            }
            for (m, v) in a.max.iter_mut().zip(&s.max) {
                *m = m.max(*v);
            }
            a.n_features_seen += s.n_features_seen;
        }
    }
}

/// Statistics of `m` as stored (values rounded to `f32`).
pub(crate) fn stored_stats(m: &Matrix) -> Result<BinStats> {
    let stored = m.map(|v| v as f32 as f64);
    Ok(asc_rfl::featnorm::fit_bin_stats([&stored])?)
}

struct Extractors {
    recipe: FeatureRecipe,
    by_rate: Mutex<BTreeMap<u32, Arc<FeatureExtractor>>>,
}

impl Extractors {
    fn get(&self, sr: u32) -> Result<Arc<FeatureExtractor>> {
        let mut map = self.by_rate.lock().expect("extractor lock");
        if let Some(e) = map.get(&sr) {
            return Ok(e.clone());
        }
        let e = Arc::new(FeatureExtractor::new(self.recipe.clone(), sr)?);
        map.insert(sr, e.clone());
        Ok(e)
    }
}

pub fn features(args: &FeaturesArgs) -> Result<FeaturesSummary> {
    if args.kind == CacheKind::Components {
        return Err(usage("features writes log-mel or power caches; use decompose for components"));
    }
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let mut entries = parse_manifest(&args.manifest)?;
    if entries.iter().any(|e| e.split.is_none()) {
        entries = multicity_split(&entries, cfg.split_seed)?.0;
    }
    create_dir(&args.out.join(FEATURE_DIR))?;

    let extractors = Extractors {
        recipe: cfg.recipe.clone(),
        by_rate: Mutex::new(BTreeMap::new()),
    };
    let results = parallel_map(entries.len(), args.jobs, |i| {
        let e = &entries[i];
        let clip = load_wav(args.audio_dir.join(&e.filename))?;
        let ex = extractors.get(clip.sample_rate())?;
        let values = match args.kind {
            CacheKind::Power => stft_power(&clip.to_mono(), &cfg.recipe.stft)?.values,
            _ => {
                let f = ex.log_mel(&clip)?.values;
                if cfg.recipe.lsmn {
                    lsmn_matrix(&f)
                } else {
                    f
                }
            }
        };
        let path = cache::stream_path(&args.out, &e.clip_id(), "");
        cache_write(&values, &path)?;
        let stats = match (args.kind, e.split) {
            (CacheKind::LogMel, Some(Split::Train)) => Some(stored_stats(&values)?),
            _ => None,
        };
        Ok::<_, crate::CliError>((clip.sample_rate(), path, stats))
    });

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    let mut stats = None;
    let mut rates = BTreeMap::<u32, usize>::new();
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok((sr, path, s)) => {
                *rates.entry(sr).or_default() += 1;
                outputs.push(path);
                if let Some(s) = s {
                    merge_stats(&mut stats, s);
                }
            }
            Err(err) => failures.push((e.filename.clone(), err.to_string())),
        }
    }
    if args.kind == CacheKind::Power && rates.len() > 1 {
        return Err(usage(format!(
            "a power cache needs one sample rate, found {:?}",
            rates.keys().collect::<Vec<_>>()
        )));
    }
    let n_written = outputs.len();
    let info = CacheInfo {
        kind: args.kind,
        sample_rate: rates.iter().max_by_key(|(_, n)| **n).map_or(0, |(sr, _)| *sr),
        stft: cfg.recipe.stft,
        n_mels: cfg.recipe.n_mels,
        lsmn: cfg.recipe.lsmn && args.kind == CacheKind::LogMel,
        components: Vec::new(),
        method: None,
        windows: None,
        source: Some(absolute(&args.manifest)),
    };
    outputs.push(cache::write_info(&args.out, &info)?);
    outputs.push(cache::write_manifest_file(&args.out, &entries)?);
    if let Some(s) = stats {
        let path = cache::stats_path(&args.out, "");
        s.write(&path)?;
        outputs.push(path);
    }
    write_outputs(&args.out, &outputs)?;
    cache::report_failures(&args.out, &failures, entries.len())?;
    Ok(FeaturesSummary {
        n_clips: entries.len(),
        n_written,
        outputs,
    })
}

pub(crate) fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}
