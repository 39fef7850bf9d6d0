#![allow(dead_code)]

use asc_rfl::losses::LossSpec;
use asc_rfl::nn::{build_network, AuxHead, Mode, Network, NetworkConfig, Tensor};
use asc_rfl::train::batch_objective;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-branch toy network: width factor 1/8, 32×32 inputs.
pub fn toy_multi_input(seed: u64) -> NetworkConfig {
    NetworkConfig {
        branch_count: 2,
        width_factor: 0.125,
        fc_widths: vec![16, 12],
        input_hw: (32, 32),
        seed,
        ..NetworkConfig::default()
    }
}

pub fn random_inputs(cfg: &NetworkConfig, n: usize, rng: &mut impl Rng) -> Vec<Tensor<f64>> {
    let (h, w) = cfg.input_hw;
    (0..cfg.branch_count)
        .map(|_| {
            let data = (0..n * cfg.n_input_channels * h * w)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            Tensor::from_vec(&[n, cfg.n_input_channels, h, w], data).unwrap()
        })
        .collect()
}

pub fn soft_labels(n: usize, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let a = rng.gen_range(0..k);
            let b = rng.gen_range(0..k);
            let lam: f64 = rng.gen_range(0.1..0.9);
            let mut y = vec![0.0; k];
            y[a] += lam;
            y[b] += 1.0 - lam;
            y
        })
        .collect()
}

/// Worst relative error per parameter tensor.
pub struct GradReport {
    pub name: String,
    pub checked: usize,
    /// Entries where every step changed a ReLU state or pool choice.
    pub skipped_at_kinks: usize,
    pub max_rel: f64,
}

/// Finite-difference steps, tried in order until no ReLU state or pool
/// choice changes.
const STEPS: [f64; 2] = [1e-5, 1e-6];

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central finite differences against back-propagated
/// gradients of the batch objective, on up to `per_tensor` entries of every
/// parameter tensor of the network and the auxiliary head.
pub fn gradient_check(
    cfg: &NetworkConfig,
    aux_spec: Option<LossSpec>,
    batch: usize,
    per_tensor: usize,
    seed: u64,
) -> Vec<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net: Network<f64> = build_network(cfg).unwrap();
    net.set_mode(Mode::Train);
    let mut aux = aux_spec.map(|s| (AuxHead::<f64>::for_network(cfg).unwrap(), s));
    let inputs = random_inputs(cfg, batch, &mut rng);
    let labels = soft_labels(batch, cfg.n_classes, &mut rng);

    net.zero_grad();
    if let Some((h, _)) = aux.as_mut() {
        h.parameters_mut().into_iter().for_each(|p| p.zero_grad());
    }
    batch_objective(&mut net, aux.as_mut().map(|(h, s)| (h, &*s)), &inputs, &labels, true).unwrap();

    let mut names = net.parameter_names();
    let mut analytic: Vec<Vec<f64>> = net.parameters().iter().map(|p| p.grad().to_vec()).collect();
    if let Some((h, _)) = aux.as_ref() {
        names.extend(["aux.weight".to_string(), "aux.bias".to_string()]);
        analytic.extend(h.parameters().iter().map(|p| p.grad().to_vec()));
    }
    let n_net = net.parameters().len();

    let eval = |net: &mut Network<f64>, aux: &mut Option<(AuxHead<f64>, LossSpec)>| {
        let loss = batch_objective(net, aux.as_mut().map(|(h, s)| (h, &*s)), &inputs, &labels, false)
            .unwrap()
            .total;
        (loss, net.activation_pattern().unwrap())
    };
    let (_, base_pattern) = eval(&mut net, &mut aux);

    let mut reports = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let len = analytic[ti].len();
        let picks: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|_| rng.gen_range(0..len)).collect()
        };
        let mut max_rel: f64 = 0.0;
        let mut skipped = 0;
        for &j in &picks {
            let nudge = |net: &mut Network<f64>, aux: &mut Option<(AuxHead<f64>, LossSpec)>, d: f64| {
                if ti < n_net {
                    net.parameters_mut()[ti].data[j] += d;
                } else {
                    aux.as_mut().unwrap().0.parameters_mut()[ti - n_net].data[j] += d;
                }
            };
            let mut numeric = None;
            for step in STEPS {
                nudge(&mut net, &mut aux, step);
                let (plus, pat_plus) = eval(&mut net, &mut aux);
                nudge(&mut net, &mut aux, -2.0 * step);
                let (minus, pat_minus) = eval(&mut net, &mut aux);
                nudge(&mut net, &mut aux, step);
                if pat_plus == base_pattern && pat_minus == base_pattern {
                    numeric = Some((plus - minus) / (2.0 * step));
                    break;
                }
            }
            let Some(numeric) = numeric else {
                skipped += 1;
                continue;
            };
            max_rel = max_rel.max(rel_err(analytic[ti][j], numeric));
        }
        reports.push(GradReport {
            name: name.clone(),
            checked: picks.len() - skipped,
            skipped_at_kinks: skipped,
            max_rel,
        });
    }
    reports
}
