//! Synthetic-corpus experiments: generate, extract, train and score.

use std::collections::BTreeSet;

use crate::data::{render_clip, synth_plan, ManifestEntry, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{grouped_accuracy, ClipPrediction, GroupKey, GroupedAccuracy};
use crate::featnorm::BinStats;
use crate::nn::{Network, NetworkConfig};
use crate::pipeline::{
    empty_dataset, fit_dataset_stats, normalize_dataset, push_clip_raw, regime_streams,
    FeatureExtractor, FeatureRecipe,
};
use crate::train::{predict_segments, train_model, LogRow, Regime, SegmentDataset, TrainConfig};

/// Scaled train and test segments for one regime.
#[derive(Debug, Clone)]
pub struct RegimeData {
    pub regime: Regime,
    pub train: SegmentDataset,
    pub test: SegmentDataset,
    pub stats: Vec<BinStats>,
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub regimes: Vec<RegimeData>,
    /// Test manifest rows, indexed by each test segment's `clip_index`.
    pub test_entries: Vec<ManifestEntry>,
    pub seen_devices: BTreeSet<String>,
}

impl PreparedData {
    pub fn regime(&self, r: Regime) -> Result<&RegimeData> {
        self.regimes
            .iter()
            .find(|d| d.regime == r)
            .ok_or_else(|| Error::InvalidConfig(format!("{r} data was not prepared")))
    }
}

/// Renders every clip, extracts features with `recipe` and builds one
/// dataset pair per regime, scaled with training-split statistics.
pub fn prepare_synthetic(cfg: &SynthConfig, recipe: &FeatureRecipe, regimes: &[Regime]) -> Result<PreparedData> {
    let extractor = FeatureExtractor::new(recipe.clone(), cfg.sample_rate)?;
    let n_mels = recipe.n_mels;
    let mut sets: Vec<(SegmentDataset, SegmentDataset)> = regimes
        .iter()
        .map(|r| {
            let n = r.branch_count();
            (empty_dataset(n, n_mels), empty_dataset(n, n_mels))
        })
        .collect();
    let mut test_entries = Vec::new();
    for clip in synth_plan(cfg)? {
        let audio = render_clip(cfg, &clip)?;
        let feats = extractor.extract(&audio)?;
        let is_test = clip.entry.split == Some(Split::Test);
        for (r, (train, test)) in regimes.iter().zip(&mut sets) {
            let streams = regime_streams(*r, &feats)?;
            if is_test {
                push_clip_raw(test, &streams, clip.class, test_entries.len())?;
            } else {
                push_clip_raw(train, &streams, clip.class, 0)?;
            }
        }
        if is_test {
            test_entries.push(clip.entry);
        }
    }
    let mut out = Vec::with_capacity(regimes.len());
    for (r, (mut train, mut test)) in regimes.iter().zip(sets) {
        let stats = fit_dataset_stats(&train)?;
        normalize_dataset(&mut train, &stats)?;
        normalize_dataset(&mut test, &stats)?;
        out.push(RegimeData {
            regime: *r,
            train,
            test,
            stats,
        });
    }
    Ok(PreparedData {
        regimes: out,
        test_entries,
        seen_devices: cfg.seen_devices.iter().cloned().collect(),
    })
}

/// Clip predictions from segment scores of consecutive 8-segment groups.
pub fn clip_predictions(
    net: &mut Network<f32>,
    test: &SegmentDataset,
    entries: &[ManifestEntry],
) -> Result<Vec<ClipPrediction>> {
    let scores = predict_segments(net, test, 64)?;
    let mut out = Vec::with_capacity(entries.len());
    let mut start = 0;
    while start < test.len() {
        let clip = test.clip_index[start];
        let end = (start..test.len())
            .find(|&i| test.clip_index[i] != clip)
            .unwrap_or(test.len());
        let e = entries
            .get(clip)
            .ok_or_else(|| Error::arg("entries", format!("no manifest row for clip {clip}")))?;
        out.push(ClipPrediction::from_segments(
            e.clip_id(),
            &scores[start..end],
            test.labels[start],
            e.device.clone(),
            e.city.clone(),
        )?);
        start = end;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub regime: Regime,
    pub seed: u64,
    pub accuracy: GroupedAccuracy,
    pub log: Vec<LogRow>,
    pub network: Network<f32>,
}

/// Trains `regime` with `train_cfg` (its `regime` field is overridden) and
/// scores the test split by device.
pub fn run_regime(
    data: &PreparedData,
    regime: Regime,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<RunResult> {
    let d = data.regime(regime)?;
    let cfg = TrainConfig {
        regime,
        ..train_cfg.clone()
    };
    let mut outcome = train_model(&d.train, net_cfg, &cfg)?;
    let preds = clip_predictions(&mut outcome.network, &d.test, &data.test_entries)?;
    let accuracy = grouped_accuracy(&preds, GroupKey::Device, &data.seen_devices)?;
    Ok(RunResult {
        regime,
        seed: cfg.seed,
        accuracy,
        log: outcome.log,
        network: outcome.network,
    })
}
