use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use asc_rfl::data::{ManifestEntry, Split, SCENE_CLASSES};
use asc_rfl::eval::{
    confusion_matrix, format_table, grouped_accuracy, write_accuracy_csv, write_confusion_csv,
    GroupKey, GroupedAccuracy,
};
use asc_rfl::experiment::clip_predictions;
use asc_rfl::featnorm::BinStats;
use asc_rfl::losses::{LossKind, LossSpec};
use asc_rfl::nn::{load_checkpoint, save_checkpoint};
use asc_rfl::pipeline::{empty_dataset, fit_dataset_stats, normalize_dataset, push_clip_raw};
use asc_rfl::train::{train_model, write_log_csv, Regime, SegmentDataset};
use serde::{Deserialize, Serialize};

use crate::cache::{Cache, CacheKind};
use crate::features::absolute;
use crate::{create_dir, io_err, read_json, usage, write_file, write_json, write_outputs, Result, RunConfig};

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub regime: Option<Regime>,
    pub aux_loss: Option<LossKind>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    /// Cache to train on; defaults to the configured features or
    /// components directory for the regime.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// What a run directory was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub regime: Regime,
    pub data_dir: PathBuf,
    /// Cache suffix per network input, in branch order.
    pub streams: Vec<String>,
    pub seed: u64,
    pub n_train_clips: usize,
    pub n_train_segments: usize,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub info: RunInfo,
    pub final_loss: f64,
    pub outputs: Vec<PathBuf>,
}

/// Resolves flags against the config file. `--aux-loss` and `--alpha`
/// only apply to rfl.
pub(crate) fn effective_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(r) = args.regime {
        cfg.train.regime = r;
        if r != Regime::Rfl {
            cfg.train.aux_spec = None;
        }
    }
    let rfl = cfg.train.regime == Regime::Rfl;
    if !rfl && (args.aux_loss.is_some() || args.alpha.is_some()) {
        return Err(usage(format!(
            "--aux-loss and --alpha only apply to --regime rfl, not {}",
            cfg.train.regime
        )));
    }
    if rfl {
        let kind = args
            .aux_loss
            .or(cfg.train.aux_spec.map(|s| s.kind))
            .ok_or_else(|| usage("rfl needs an auxiliary loss (--aux-loss ce|defocus|rce)"))?;
        let alpha = args.alpha.or(cfg.train.aux_spec.map(|s| s.alpha)).unwrap_or(1.0);
        if args.alpha.is_some() && kind == LossKind::Ce {
            return Err(usage("--alpha has no effect with --aux-loss ce"));
        }
        cfg.train.aux_spec = Some(LossSpec::new(kind, alpha)?);
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
        cfg.network.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn regime_streams(regime: Regime, cache: &Cache) -> Result<Vec<String>> {
    let info = &cache.info;
    let dir = cache.dir.display();
    match regime {
        Regime::Baseline => {
            if info.kind != CacheKind::LogMel {
                return Err(usage(format!("baseline trains on a log-mel cache, {dir} holds {:?}", info.kind)));
            }
            Ok(vec![String::new()])
        }
        _ if info.kind != CacheKind::Components => Err(usage(format!(
            "{regime} trains on a component cache (see decompose), {dir} holds {:?}",
            info.kind
        ))),
        Regime::Dlds => Ok(info.components.last().cloned().into_iter().collect()),
        Regime::MultiInput | Regime::Rfl => {
            if info.components.len() != 2 {
                return Err(usage(format!(
                    "{regime} needs two components, {dir} has {:?}",
                    info.components
                )));
            }
            Ok(info.components.clone())
        }
    }
}

/// Unscaled segments of `entries`, with `clip_index` counting positions
/// in `entries`.
fn load_segments(cache: &Cache, streams: &[String], entries: &[&ManifestEntry]) -> Result<SegmentDataset> {
    let mut ds = empty_dataset(streams.len(), cache.info.n_mels);
    for (i, e) in entries.iter().enumerate() {
        let mats = streams
            .iter()
            .map(|s| cache.read(&e.clip_id(), s))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<_> = mats.iter().collect();
        push_clip_raw(&mut ds, &refs, e.label_index(), i)?;
    }
    Ok(ds)
}

fn stats_file(run_dir: &Path, k: usize) -> PathBuf {
    run_dir.join(format!("stream{k}.bst"))
}

pub fn train(args: &TrainArgs) -> Result<TrainSummary> {
    let cfg = effective_config(args)?;
    let regime = cfg.train.regime;
    let data_dir = args
        .data
        .clone()
        .or_else(|| match regime {
            Regime::Baseline => cfg.paths.features_dir.clone(),
            _ => cfg.paths.components_dir.clone(),
        })
        .ok_or_else(|| usage("no training cache: pass --data or set paths.features_dir / paths.components_dir"))?;
    let run_dir = args
        .out
        .clone()
        .or_else(|| cfg.paths.out_dir.clone())
        .ok_or_else(|| usage("no run directory: pass --out or set paths.out_dir"))?;

    let cache = Cache::open(&data_dir)?;
    let streams = regime_streams(regime, &cache)?;
    let entries = cache.manifest()?;
    let train_entries: Vec<&ManifestEntry> = entries.iter().filter(|e| e.split == Some(Split::Train)).collect();
    if train_entries.is_empty() {
        return Err(usage(format!("{} has no training clips", data_dir.display())));
    }
    let mut ds = load_segments(&cache, &streams, &train_entries)?;
    let stats = fit_dataset_stats(&ds)?;
    normalize_dataset(&mut ds, &stats)?;

    let outcome = train_model(&ds, &cfg.network, &cfg.train)?;

    create_dir(&run_dir)?;
    let mut outputs = Vec::new();
    let model = run_dir.join("model.net");
    save_checkpoint(&outcome.network, &model)?;
    outputs.push(model);
    let log_path = run_dir.join("train_log.csv");
    let mut buf = Vec::new();
    write_log_csv(&outcome.log, &mut buf).map_err(io_err(&log_path))?;
    write_file(&log_path, buf)?;
    outputs.push(log_path);
    for (k, s) in stats.iter().enumerate() {
        let p = stats_file(&run_dir, k);
        s.write(&p)?;
        outputs.push(p);
    }
    let snapshot = run_dir.join("config.toml");
    write_file(&snapshot, cfg.to_toml()?)?;
    outputs.push(snapshot);
    let info = RunInfo {
        regime,
        data_dir: absolute(&data_dir),
        streams,
        seed: cfg.train.seed,
        n_train_clips: train_entries.len(),
        n_train_segments: ds.len(),
    };
    let run_file = run_dir.join(RUN_FILE);
    write_json(&run_file, &info)?;
    outputs.push(run_file);
    write_outputs(&run_dir, &outputs)?;
    Ok(TrainSummary {
        run_dir,
        info,
        final_loss: outcome.log.last().map_or(f64::NAN, |r| r.total_loss),
        outputs,
    })
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub manifest: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub group: GroupKey,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: GroupedAccuracy,
    pub table: String,
    pub outputs: Vec<PathBuf>,
}

pub fn eval(args: &EvalArgs) -> Result<EvalReport> {
    let run_dir = args
        .checkpoint
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let info: RunInfo = read_json(&run_dir.join(RUN_FILE))?;
    let data_dir = args.data.clone().unwrap_or_else(|| info.data_dir.clone());
    let cache = Cache::open(&data_dir)?;
    let entries = match &args.manifest {
        Some(p) => asc_rfl::data::parse_manifest(p)?,
        None => cache.manifest()?,
    };
    if entries.iter().any(|e| e.split.is_none()) {
        return Err(usage("the evaluation manifest needs a split column"));
    }
    let test: Vec<&ManifestEntry> = entries.iter().filter(|e| e.split == Some(Split::Test)).collect();
    if test.is_empty() {
        return Err(usage("the manifest has no test clips"));
    }
    let key = |e: &ManifestEntry| match args.group {
        GroupKey::Device => e.device.clone(),
        GroupKey::City => e.city.clone(),
    };
    let seen: BTreeSet<String> = entries
        .iter()
        .filter(|e| e.split == Some(Split::Train))
        .map(key)
        .collect();

    let stats = (0..info.streams.len())
        .map(|k| Ok(BinStats::read(stats_file(&run_dir, k))?))
        .collect::<Result<Vec<_>>>()?;
    let mut ds = load_segments(&cache, &info.streams, &test)?;
    normalize_dataset(&mut ds, &stats)?;
    let mut net = load_checkpoint::<f32>(&args.checkpoint)?;
    let owned: Vec<ManifestEntry> = test.iter().map(|e| (*e).clone()).collect();
    let preds = clip_predictions(&mut net, &ds, &owned)?;
    let accuracy = grouped_accuracy(&preds, args.group, &seen)?;

    let out = args.out.clone().unwrap_or(run_dir);
    create_dir(&out)?;
    let acc_path = out.join("accuracy.csv");
    let mut buf = Vec::new();
    write_accuracy_csv(&accuracy, &mut buf).map_err(io_err(&acc_path))?;
    write_file(&acc_path, buf)?;
    let conf_path = out.join("confusion.csv");
    let n_classes = net.config.n_classes;
    let m = confusion_matrix(&preds, n_classes)?;
    let mut buf = Vec::new();
    write_confusion_csv(&m, &SCENE_CLASSES[..n_classes.min(SCENE_CLASSES.len())], &mut buf)
        .map_err(io_err(&conf_path))?;
    write_file(&conf_path, buf)?;
    let name = info.regime.to_string();
    let table = format_table(&[(name.as_str(), &accuracy)]);
    Ok(EvalReport {
        accuracy,
        table,
        outputs: vec![acc_path, conf_path],
    })
}
