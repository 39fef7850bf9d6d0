use std::path::PathBuf;
use std::process::ExitCode;

use asc_rfl::eval::GroupKey;
use asc_rfl::losses::LossKind;
use asc_rfl::train::Regime;
use asc_rfl_cli::{
    decompose, eval, features, losscurves, synth, train, CacheKind, DecomposeArgs, EvalArgs,
    FeaturesArgs, Method, SynthArgs, TrainArgs,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "asc-rfl", version, about = "Device-robust acoustic scene classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    LogMel,
    Power,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Baseline,
    MultiInput,
    Dlds,
    Rfl,
}

#[derive(Clone, Copy, ValueEnum)]
enum AuxArg {
    Ce,
    Defocus,
    Rce,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    Device,
    City,
}

#[derive(Subcommand)]
enum Command {
    /// Cache log-mel features (or power spectrograms) for every manifest clip.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        audio_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value = "log-mel")]
        kind: Kind,
    },
    /// Split a cache into SDBD or HPSS components.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        method: Method,
        /// Time-axis window (frames); repeat for an SDBD cascade.
        #[arg(long, required = true)]
        window: Vec<usize>,
        /// Frequency-axis window for HPSS.
        #[arg(long)]
        window_f: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train one regime and write a run directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
        #[arg(long, value_enum)]
        aux_loss: Option<AuxArg>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "device")]
        group: GroupArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write loss and gradient curves over p in 0.01..0.99.
    Losscurves {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the synthetic device-mismatch corpus.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn run(cli: Cli) -> asc_rfl_cli::Result<()> {
    match cli.command {
        Command::Features {
            manifest,
            audio_dir,
            out,
            config,
            jobs,
            kind,
        } => {
            let s = features(&FeaturesArgs {
                manifest,
                audio_dir,
                out,
                config,
                jobs,
                kind: match kind {
                    Kind::LogMel => CacheKind::LogMel,
                    Kind::Power => CacheKind::Power,
                },
            })?;
            println!("cached {} of {} clips", s.n_written, s.n_clips);
        }
        Command::Decompose {
            input,
            method,
            window,
            window_f,
            out,
            jobs,
        } => {
            let s = decompose(&DecomposeArgs {
                input,
                method,
                windows: window,
                window_f,
                out,
                jobs,
            })?;
            println!("{}", s.note);
            println!("components: {}", s.suffixes.join(", "));
        }
        Command::Train {
            config,
            regime,
            aux_loss,
            alpha,
            seed,
            epochs,
            data,
            out,
        } => {
            let s = train(&TrainArgs {
                config,
                regime: regime.map(|r| match r {
                    RegimeArg::Baseline => Regime::Baseline,
                    RegimeArg::MultiInput => Regime::MultiInput,
                    RegimeArg::Dlds => Regime::Dlds,
                    RegimeArg::Rfl => Regime::Rfl,
                }),
                aux_loss: aux_loss.map(|a| match a {
                    AuxArg::Ce => LossKind::Ce,
                    AuxArg::Defocus => LossKind::Defocus,
                    AuxArg::Rce => LossKind::Rce,
                }),
                alpha,
                seed,
                epochs,
                data,
                out,
            })?;
            println!(
                "trained {} on {} clips; final loss {:.4}; run in {}",
                s.info.regime,
                s.info.n_train_clips,
                s.final_loss,
                s.run_dir.display()
            );
        }
        Command::Eval {
            checkpoint,
            manifest,
            data,
            group,
            out,
        } => {
            let r = eval(&EvalArgs {
                checkpoint,
                manifest,
                data,
                group: match group {
                    GroupArg::Device => GroupKey::Device,
                    GroupArg::City => GroupKey::City,
                },
                out,
            })?;
            print!("{}", r.table);
        }
        Command::Losscurves { out } => {
            for p in losscurves(&out)? {
                println!("{}", p.display());
            }
        }
        Command::Synth {
            config,
            out,
            seed,
            jobs,
        } => {
            let cfg = synth(&SynthArgs {
                config,
                out: out.clone(),
                seed,
                jobs,
            })?;
            println!(
                "wrote {} clips to {}",
                cfg.classes.len() * cfg.clips_per_class,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
