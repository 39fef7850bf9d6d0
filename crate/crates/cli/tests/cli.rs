use std::path::{Path, PathBuf};
use std::process::Command;

use asc_rfl::data::parse_manifest;
use asc_rfl::eval::GroupKey;
use asc_rfl::losses::LossKind;
use asc_rfl::train::Regime;
use asc_rfl_cli::*;
use tempfile::TempDir;

const SYNTH: &str = "n_classes = 2\nclips_per_class = 4\nclip_seconds = 2.0\ntest_fraction = 0.5\nseed = 3\n";
const RUN: &str = "[network]\nwidth_factor = 0.125\nfc_widths = [16]\n\n[train]\nepochs = 2\nbatch_size = 8\nlr0 = 0.001\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asc-rfl"))
}

struct Corpus {
    dir: TempDir,
}

impl Corpus {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        std::fs::write(dir.path().join("synth.toml"), SYNTH).unwrap();
        std::fs::write(dir.path().join("run.toml"), RUN).unwrap();
        synth(&SynthArgs {
            config: Some(dir.path().join("synth.toml")),
            out: dir.path().join("corpus"),
            seed: None,
            jobs: 2,
        })
        .unwrap();
        Self { dir }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn features(&self, out: &str, kind: CacheKind) -> Result<()> {
        features(&FeaturesArgs {
            manifest: self.p("corpus/manifest.tsv"),
            audio_dir: self.p("corpus"),
            out: self.p(out),
            config: Some(self.p("run.toml")),
            jobs: 2,
            kind,
        })
        .map(|_| ())
    }

    fn train(&self, data: &str, out: &str, regime: Regime, aux: Option<LossKind>) -> Result<()> {
        train(&TrainArgs {
            config: Some(self.p("run.toml")),
            regime: Some(regime),
            aux_loss: aux,
            data: Some(self.p(data)),
            out: Some(self.p(out)),
            ..TrainArgs::default()
        })
        .map(|_| ())
    }
}

fn read_lines(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn synth_features_decompose_train_eval() {
    let c = Corpus::new();
    assert!(c.p("corpus/dataset.json").exists());
    assert_eq!(parse_manifest(c.p("corpus/manifest.tsv")).unwrap().len(), 8);

    c.features("full", CacheKind::LogMel).unwrap();
    let outputs = read_lines(&c.p("full/outputs.txt"));
    assert_eq!(outputs.iter().filter(|l| l.ends_with(".tff")).count(), 8);
    assert!(c.p("full/bin_stats.bst").exists());

    let out = bin()
        .args(["decompose", "--method", "sdbd", "--window", "201", "--in"])
        .arg(c.p("full"))
        .arg("--out")
        .arg(c.p("sdbd"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1.00 s"));
    let id = parse_manifest(c.p("corpus/manifest.tsv")).unwrap()[0].clip_id();
    for suffix in ["long", "short"] {
        assert!(c.p(&format!("sdbd/features/{id}_{suffix}.tff")).exists());
        assert!(c.p(&format!("sdbd/bin_stats_{suffix}.bst")).exists());
    }

    c.train("sdbd", "run_rfl", Regime::Rfl, Some(LossKind::Rce)).unwrap();
    for f in ["model.net", "train_log.csv", "config.toml", "run.json", "stream0.bst", "stream1.bst"] {
        assert!(c.p("run_rfl").join(f).exists(), "missing {f}");
    }
    let log = read_lines(&c.p("run_rfl/train_log.csv"));
    assert_eq!(log[0], "epoch,step,lr,main_loss,aux_loss,total_loss");
    assert_eq!(log.len(), 1 + 2 * 4);
    let snapshot = RunConfig::load(&c.p("run_rfl/config.toml")).unwrap();
    assert_eq!(snapshot.train.regime, Regime::Rfl);
    assert_eq!(snapshot.train.aux_spec.unwrap().kind, LossKind::Rce);

    let report = eval(&EvalArgs {
        checkpoint: c.p("run_rfl/model.net"),
        manifest: None,
        data: None,
        group: GroupKey::Device,
        out: None,
    })
    .unwrap();
    assert_eq!(report.accuracy.overall.n, 4);
    assert!(report.table.contains("Unseen Device"));
    let acc = read_lines(&c.p("run_rfl/accuracy.csv"));
    assert_eq!(acc[0], "group,partition,n,correct,accuracy");
    assert!(acc.iter().any(|l| l.starts_with("all,overall,4,")));
    assert_eq!(read_lines(&c.p("run_rfl/confusion.csv")).len(), 11);

    c.train("full", "run_base", Regime::Baseline, None).unwrap();
    let status = bin()
        .args(["eval", "--group", "city", "--checkpoint"])
        .arg(c.p("run_base/model.net"))
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn training_is_deterministic() {
    let c = Corpus::new();
    c.features("full", CacheKind::LogMel).unwrap();
    c.train("full", "a", Regime::Baseline, None).unwrap();
    c.train("full", "b", Regime::Baseline, None).unwrap();
    let a = std::fs::read(c.p("a/model.net")).unwrap();
    let b = std::fs::read(c.p("b/model.net")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rerunning_features_is_idempotent() {
    let c = Corpus::new();
    c.features("full", CacheKind::LogMel).unwrap();
    let id = parse_manifest(c.p("corpus/manifest.tsv")).unwrap()[3].clip_id();
    let file = c.p(&format!("full/features/{id}.tff"));
    let first = std::fs::read(&file).unwrap();
    let manifest = std::fs::read(c.p("full/manifest.tsv")).unwrap();
    c.features("full", CacheKind::LogMel).unwrap();
    assert_eq!(std::fs::read(&file).unwrap(), first);
    assert_eq!(std::fs::read(c.p("full/manifest.tsv")).unwrap(), manifest);
}

#[test]
fn missing_audio_is_listed_and_fails() {
    let c = Corpus::new();
    let entries = parse_manifest(c.p("corpus/manifest.tsv")).unwrap();
    std::fs::remove_file(c.p("corpus").join(&entries[1].filename)).unwrap();
    let out = bin()
        .arg("features")
        .arg("--manifest")
        .arg(c.p("corpus/manifest.tsv"))
        .arg("--audio-dir")
        .arg(c.p("corpus"))
        .arg("--out")
        .arg(c.p("full"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let failures = std::fs::read_to_string(c.p("full/failures.txt")).unwrap();
    assert!(failures.contains(&entries[1].filename));
    assert_eq!(failures.lines().count(), 1);
    assert!(c.p(&format!("full/features/{}.tff", entries[0].clip_id())).exists());
}

#[test]
fn empty_manifest_succeeds() {
    let dir = TempDir::new().unwrap();
    let m = dir.path().join("m.tsv");
    std::fs::write(&m, "filename\tscene_label\tidentifier\tsource_label\n").unwrap();
    let status = bin()
        .arg("features")
        .arg("--manifest")
        .arg(&m)
        .arg("--audio-dir")
        .arg(dir.path())
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("out/cache.json").exists());
}

#[test]
fn manifest_without_split_gets_the_multicity_split() {
    let c = Corpus::new();
    let mut entries = parse_manifest(c.p("corpus/manifest.tsv")).unwrap();
    entries.iter_mut().for_each(|e| e.split = None);
    let mut buf = Vec::new();
    asc_rfl::data::write_manifest(&entries, &mut buf).unwrap();
    std::fs::write(c.p("nosplit.tsv"), buf).unwrap();
    features(&FeaturesArgs {
        manifest: c.p("nosplit.tsv"),
        audio_dir: c.p("corpus"),
        out: c.p("full"),
        config: None,
        jobs: 1,
        kind: CacheKind::LogMel,
    })
    .unwrap();
    let cached = parse_manifest(c.p("full/manifest.tsv")).unwrap();
    assert!(cached.iter().all(|e| e.split.is_some()));
}

#[test]
fn hpss_needs_a_power_cache() {
    let c = Corpus::new();
    c.features("full", CacheKind::LogMel).unwrap();
    let args = |input: &str, window: usize| DecomposeArgs {
        input: c.p(input),
        method: Method::Hpss,
        windows: vec![window],
        window_f: None,
        out: c.p("hp"),
        jobs: 1,
    };
    assert!(matches!(decompose(&args("full", 17)), Err(CliError::Usage(_))));

    c.features("power", CacheKind::Power).unwrap();
    assert!(matches!(decompose(&args("power", 16)), Err(CliError::Usage(_))));
    let s = decompose(&args("power", 17)).unwrap();
    assert_eq!(s.suffixes, ["h", "p"]);
    let id = parse_manifest(c.p("corpus/manifest.tsv")).unwrap()[0].clip_id();
    let h = asc_rfl::data::cache_read(c.p(&format!("hp/features/{id}_h.tff"))).unwrap();
    assert_eq!(h.shape(), (200, 128));
    c.train("hp", "run_dlds", Regime::Dlds, None).unwrap();
    let info: RunInfo = serde_json::from_str(&std::fs::read_to_string(c.p("run_dlds/run.json")).unwrap()).unwrap();
    assert_eq!(info.streams, ["p"]);
}

#[test]
fn flag_mismatches_are_rejected() {
    let c = Corpus::new();
    c.features("full", CacheKind::LogMel).unwrap();
    assert!(matches!(
        c.train("full", "x", Regime::Baseline, Some(LossKind::Rce)),
        Err(CliError::Usage(_))
    ));
    let bad_alpha = train(&TrainArgs {
        regime: Some(Regime::Rfl),
        aux_loss: Some(LossKind::Defocus),
        alpha: Some(1.5),
        data: Some(c.p("full")),
        out: Some(c.p("x")),
        ..TrainArgs::default()
    });
    assert!(bad_alpha.is_err());
    assert!(matches!(
        c.train("full", "x", Regime::Rfl, None),
        Err(CliError::Usage(_))
    ));
    // multi-input regimes cannot train on an undecomposed cache
    assert!(c.train("full", "x", Regime::MultiInput, None).is_err());
    let status = bin()
        .args(["train", "--regime", "baseline", "--aux-loss", "ce", "--data"])
        .arg(c.p("full"))
        .arg("--out")
        .arg(c.p("x"))
        .status()
        .unwrap();
    assert!(!status.success());
}

#[test]
fn eval_without_test_clips_fails() {
    let c = Corpus::new();
    c.features("full", CacheKind::LogMel).unwrap();
    c.train("full", "run", Regime::Baseline, None).unwrap();
    let mut entries = parse_manifest(c.p("full/manifest.tsv")).unwrap();
    entries.retain(|e| e.split == Some(asc_rfl::data::Split::Train));
    let mut buf = Vec::new();
    asc_rfl::data::write_manifest(&entries, &mut buf).unwrap();
    std::fs::write(c.p("train_only.tsv"), buf).unwrap();
    let r = eval(&EvalArgs {
        checkpoint: c.p("run/model.net"),
        manifest: Some(c.p("train_only.tsv")),
        data: None,
        group: GroupKey::Device,
        out: None,
    });
    assert!(matches!(r, Err(CliError::Usage(_))));
}

#[test]
fn losscurves_writes_four_grids() {
    let dir = TempDir::new().unwrap();
    let files = losscurves(dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    for f in &files {
        let lines = read_lines(f);
        assert_eq!(lines[0], "p,loss,dloss_dlogit");
        assert_eq!(lines.len(), 100);
        assert!(lines[1].starts_with("0.01,"));
    }
    let ce = read_lines(&dir.path().join("ce.csv"));
    let v: f64 = ce[50].split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - (-(0.5f64).ln())).abs() < 1e-8);
}
