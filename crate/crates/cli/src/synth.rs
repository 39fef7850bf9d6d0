use std::path::{Path, PathBuf};

use asc_rfl::data::{render_clip, synth_plan, DatasetDescription, SynthConfig, SynthParams};
use asc_rfl::dsp::write_wav_pcm16;
use asc_rfl::losses::{loss_curve, percent_grid, write_loss_curve_csv, LossSpec};

use crate::cache::write_manifest_file;
use crate::{create_dir, io_err, parallel_map, read_text, write_file, write_json, write_outputs, CliError, Result};

/// File name and loss of each curve written by [`losscurves`].
pub const LOSS_CURVES: [(&str, LossSpec); 4] = [
    ("ce.csv", LossSpec::CE),
    (
        "defocus_alpha1.csv",
        LossSpec {
            kind: asc_rfl::losses::LossKind::Defocus,
            alpha: 1.0,
        },
    ),
    (
        "rce_alpha0.5.csv",
        LossSpec {
            kind: asc_rfl::losses::LossKind::Rce,
            alpha: 0.5,
        },
    ),
    (
        "rce_alpha1.csv",
        LossSpec {
            kind: asc_rfl::losses::LossKind::Rce,
            alpha: 1.0,
        },
    ),
];

pub fn losscurves(out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let grid = percent_grid();
    let mut outputs = Vec::new();
    for (name, spec) in LOSS_CURVES {
        let path = out.join(name);
        let mut buf = Vec::new();
        write_loss_curve_csv(&loss_curve(&spec, &grid)?, &mut buf).map_err(io_err(&path))?;
        write_file(&path, buf)?;
        outputs.push(path);
    }
    write_outputs(out, &outputs)?;
    Ok(outputs)
}

#[derive(Debug, Clone, Default)]
pub struct SynthArgs {
    /// TOML file of [`SynthParams`].
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub jobs: usize,
}

pub fn load_params(path: Option<&Path>) -> Result<SynthParams> {
    match path {
        None => Ok(SynthParams::default()),
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError::Parse {
            path: p.to_path_buf(),
            reason: e.to_string(),
        }),
    }
}

/// Renders the synthetic corpus: `audio/*.wav`, `manifest.tsv` (with the
/// split column) and `dataset.json`.
pub fn synth(args: &SynthArgs) -> Result<SynthConfig> {
    let mut params = load_params(args.config.as_deref())?;
    if let Some(s) = args.seed {
        params.seed = s;
    }
    let cfg = SynthConfig::from_params(&params)?;
    let plan = synth_plan(&cfg)?;
    create_dir(&args.out.join("audio"))?;
    let results = parallel_map(plan.len(), args.jobs, |i| {
        let path = args.out.join(&plan[i].entry.filename);
        write_wav_pcm16(&path, &render_clip(&cfg, &plan[i])?)?;
        Ok::<_, CliError>(path)
    });
    let mut outputs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let entries: Vec<_> = plan.iter().map(|c| c.entry.clone()).collect();
    outputs.push(write_manifest_file(&args.out, &entries)?);
    let desc = args.out.join("dataset.json");
    write_json(&desc, &DatasetDescription::of(&cfg))?;
    outputs.push(desc);
    write_outputs(&args.out, &outputs)?;
    Ok(cfg)
}
