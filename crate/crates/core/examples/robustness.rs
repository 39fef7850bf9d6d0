//! Baseline versus SDBD + RFL on the synthetic device-shift corpus.

use std::time::Instant;

use asc_rfl::data::{SynthConfig, SynthParams};
use asc_rfl::experiment::{prepare_synthetic, run_regime};
use asc_rfl::losses::LossSpec;
use asc_rfl::nn::NetworkConfig;
use asc_rfl::pipeline::FeatureRecipe;
use asc_rfl::train::{epoch_means, Regime, TrainConfig};

fn main() -> asc_rfl::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(6);
    let lr0: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let net = NetworkConfig {
        width_factor: 0.125,
        fc_widths: vec![128, 64],
        ..NetworkConfig::default()
    };
    for seed in 0..seeds {
        let t0 = Instant::now();
        let cfg = SynthConfig::from_params(&SynthParams {
            seed,
            ..SynthParams::default()
        })?;
        let data = prepare_synthetic(&cfg, &FeatureRecipe::sdbd(201), &[Regime::Baseline, Regime::Rfl])?;
        println!("seed {seed}: data in {:.1}s", t0.elapsed().as_secs_f64());
        for (regime, aux) in [(Regime::Baseline, None), (Regime::Rfl, Some(LossSpec::rce(1.0)?))] {
            let t = Instant::now();
            let tc = TrainConfig {
                lr0,
                batch_size: 32,
                epochs,
                seed,
                aux_spec: aux,
                ..TrainConfig::default()
            };
            let r = run_regime(&data, regime, &net, &tc)?;
            let a = &r.accuracy;
            println!(
                "  {regime:<9} seen {:.3} unseen {:.3} overall {:.3}  losses {:?}  {:.1}s",
                a.seen.accuracy().unwrap_or(f64::NAN),
                a.unseen.accuracy().unwrap_or(f64::NAN),
                a.overall.accuracy().unwrap_or(f64::NAN),
                epoch_means(&r.log).iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
                t.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
