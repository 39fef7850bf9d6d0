//! Mixup, learning-rate schedule, Adam and the training loop.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{multiclass_loss, multiclass_loss_grad, LossSpec};
use crate::matrix::Matrix;
use crate::nn::{build_network, AuxHead, Mode, Network, NetworkConfig, Scalar, Tensor};

/// What the network sees and how it is supervised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Single-input network on the undecomposed feature.
    Baseline,
    /// One branch per decomposed component, CE only.
    MultiInput,
    /// Single-input network on the short-duration (or percussive) component.
    Dlds,
    /// Multi-input network plus an auxiliary classifier on the long branch.
    Rfl,
}

impl Regime {
    pub fn branch_count(self) -> usize {
        match self {
            Regime::Baseline | Regime::Dlds => 1,
            Regime::MultiInput | Regime::Rfl => 2,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Baseline => "baseline",
            Regime::MultiInput => "multi_input",
            Regime::Dlds => "dlds",
            Regime::Rfl => "rfl",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Regime::Baseline),
            "multi_input" | "multi-input" => Ok(Regime::MultiInput),
            "dlds" => Ok(Regime::Dlds),
            "rfl" => Ok(Regime::Rfl),
            other => Err(Error::arg("regime", format!("unknown regime {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Multiplier applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub mixup: bool,
    pub seed: u64,
    pub regime: Regime,
    /// Auxiliary loss; required by (and only allowed with) [`Regime::Rfl`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aux_spec: Option<LossSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            batch_size: 100,
            epochs: 40,
            lr_decay: 0.5,
            decay_every: 4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            mixup: true,
            seed: 0,
            regime: Regime::Baseline,
            aux_spec: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("lr_decay", self.lr_decay),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 || self.epochs == 0 || self.decay_every == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, epochs and decay_every must be positive".into(),
            ));
        }
        match (self.regime, &self.aux_spec) {
            (Regime::Rfl, None) => Err(Error::InvalidConfig("rfl needs an auxiliary loss".into())),
            (Regime::Rfl, Some(spec)) => spec.validate(),
            (r, Some(_)) => Err(Error::InvalidConfig(format!(
                "an auxiliary loss is only used by rfl, not {r}"
            ))),
            _ => Ok(()),
        }
    }
}

/// `lr0 · decay^floor(epoch / decay_every)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::arg(
            "epoch",
            format!("{epoch} is outside 0..{}", cfg.epochs),
        ));
    }
    Ok(cfg.lr0 * cfg.lr_decay.powi((epoch / cfg.decay_every) as i32))
}

/// Mixing partner and proportion for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupDraw {
    pub partner: usize,
    pub lambda: f64,
}

/// Draws a partner `j != i` uniformly and `λ ~ U(0, 1)` (open) per sample.
pub fn draw_mixup(n: usize, rng: &mut impl Rng) -> Result<Vec<MixupDraw>> {
    if n < 2 {
        return Err(Error::arg("batch", "mixup needs at least two samples"));
    }
    Ok((0..n)
        .map(|i| {
            let mut partner = rng.gen_range(0..n - 1);
            if partner >= i {
                partner += 1;
            }
            let mut lambda: f64 = rng.gen();
            while lambda == 0.0 {
                lambda = rng.gen();
            }
            MixupDraw { partner, lambda }
        })
        .collect())
}

/// Applies `draws` to every input tensor (all `[N, …]`) and to the labels;
/// every component of a sample uses the same draw.
pub fn apply_mixup<T: Scalar>(
    inputs: &[Tensor<T>],
    labels: &[Vec<f64>],
    draws: &[MixupDraw],
) -> Result<(Vec<Tensor<T>>, Vec<Vec<f64>>)> {
    let n = labels.len();
    if draws.len() != n {
        return Err(Error::shape(format!("{n} draws"), format!("{}", draws.len())));
    }
    if let Some(d) = draws.iter().find(|d| d.partner >= n || !(0.0..=1.0).contains(&d.lambda)) {
        return Err(Error::arg("draws", format!("invalid draw {d:?}")));
    }
    let mut mixed_inputs = Vec::with_capacity(inputs.len());
    for t in inputs {
        if t.shape().first() != Some(&n) {
            return Err(Error::shape(format!("batch of {n}"), format!("{:?}", t.shape())));
        }
        let per = t.numel() / n;
        let mut data = Vec::with_capacity(t.numel());
        for (i, d) in draws.iter().enumerate() {
            let (l, r) = (T::of(d.lambda), T::of(1.0 - d.lambda));
            let a = &t.data[i * per..(i + 1) * per];
            let b = &t.data[d.partner * per..(d.partner + 1) * per];
            data.extend(a.iter().zip(b).map(|(&x, &y)| l * x + r * y));
        }
        mixed_inputs.push(Tensor::from_vec(t.shape(), data)?);
    }
    let mixed_labels = draws
        .iter()
        .enumerate()
        .map(|(i, d)| {
            labels[i]
                .iter()
                .zip(&labels[d.partner])
                .map(|(a, b)| d.lambda * a + (1.0 - d.lambda) * b)
                .collect()
        })
        .collect();
    Ok((mixed_inputs, mixed_labels))
}

/// Random mixup of a batch.
pub fn mixup_batch<T: Scalar>(
    inputs: &[Tensor<T>],
    labels: &[Vec<f64>],
    rng: &mut impl Rng,
) -> Result<(Vec<Tensor<T>>, Vec<Vec<f64>>)> {
    let draws = draw_mixup(labels.len(), rng)?;
    apply_mixup(inputs, labels, &draws)
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl From<&TrainConfig> for AdamParams {
    fn from(c: &TrainConfig) -> Self {
        Self {
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.adam_eps,
            weight_decay: c.weight_decay,
        }
    }
}

/// Moment buffers for a fixed list of parameter tensors.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One Adam update with bias correction and decoupled weight decay
/// (`θ ← θ - lr·m̂/(√v̂ + eps) - lr·wd·θ`), using each tensor's gradient.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    state: &mut AdamState,
    lr: f64,
    hp: &AdamParams,
) -> Result<()> {
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::shape(
            format!("{} parameter tensors", state.m.len()),
            format!("{}", params.len()),
        ));
    }
    for (p, m) in params.iter().zip(&state.m) {
        if p.numel() != m.len() || p.grad().len() != m.len() {
            return Err(Error::shape(format!("{} values", m.len()), format!("{:?}", p.shape())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let grad: Vec<f64> = p.grad().iter().map(|g| g.f64()).collect();
        for (((w, g), mi), vi) in p.data.iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = hp.beta1 * *mi + (1.0 - hp.beta1) * g;
            *vi = hp.beta2 * *vi + (1.0 - hp.beta2) * g * g;
            let update = (*mi / c1) / ((*vi / c2).sqrt() + hp.eps);
            let wf = w.f64();
            *w = T::of(wf - lr * update - lr * hp.weight_decay * wf);
        }
    }
    Ok(())
}

/// `multiclass_loss(main_p, y, CE) + multiclass_loss(aux_p, y, aux_spec)`.
pub fn rfl_total_loss(main_p: &[f64], aux_p: &[f64], y: &[f64], aux_spec: &LossSpec) -> Result<f64> {
    Ok(multiclass_loss(main_p, y, &LossSpec::CE)? + multiclass_loss(aux_p, y, aux_spec)?)
}

/// Batch-mean losses of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub main: f64,
    pub aux: f64,
    pub total: f64,
}

fn batch_loss_and_grad<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[Vec<f64>],
    spec: &LossSpec,
) -> Result<(f64, Tensor<T>)> {
    let n = labels.len();
    let k = probs.numel() / n.max(1);
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(probs.numel());
    for (i, y) in labels.iter().enumerate() {
        let p: Vec<f64> = probs.data[i * k..(i + 1) * k].iter().map(|v| v.f64()).collect();
        let (l, g) = multiclass_loss_grad(&p, y, spec)?;
        total += l;
        grad.extend(g.into_iter().map(|v| T::of(v / n as f64)));
    }
    Ok((total / n as f64, Tensor::from_vec(probs.shape(), grad)?))
}

/// Forward pass plus the regime's objective: batch-mean CE on the main
/// classifier, plus the batch-mean auxiliary loss on the first (long)
/// branch when `aux` is given. With `backprop`, gradients are accumulated
/// into every parameter of `net` and `aux`.
pub fn batch_objective<T: Scalar>(
    net: &mut Network<T>,
    aux: Option<(&mut AuxHead<T>, &LossSpec)>,
    inputs: &[Tensor<T>],
    labels: &[Vec<f64>],
    backprop: bool,
) -> Result<BatchLoss> {
    let out = net.forward(inputs)?;
    let (main, d_main) = batch_loss_and_grad(&out.probs, labels, &LossSpec::CE)?;
    let (aux_loss, emb_grad) = match aux {
        Some((head, spec)) => {
            let (_, aux_probs) = head.forward(&out.embeddings[0])?;
            let (l, d_aux) = batch_loss_and_grad(&aux_probs, labels, spec)?;
            let g = if backprop { Some(head.backward(&d_aux)?) } else { None };
            (l, g)
        }
        None => (0.0, None),
    };
    if backprop {
        net.backward(&d_main, &[emb_grad.as_ref()])?;
    }
    Ok(BatchLoss {
        main,
        aux: aux_loss,
        total: main + aux_loss,
    })
}

/// Training segments: one `[F, T]` plane per network input per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentDataset {
    /// `(frequency, time)` plane size.
    pub plane: (usize, usize),
    /// Per input, `len · F · T` values.
    pub inputs: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
    /// Index of the clip each segment was cut from.
    pub clip_index: Vec<usize>,
}

impl SegmentDataset {
    pub fn new(n_inputs: usize, plane: (usize, usize)) -> Self {
        Self {
            plane,
            inputs: vec![Vec::new(); n_inputs],
            labels: Vec::new(),
            clip_index: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    /// Adds one sample from time × mel component segments (transposed to
    /// `[F, T]` here).
    pub fn push(&mut self, components: &[&Matrix], label: usize, clip: usize) -> Result<()> {
        if components.len() != self.inputs.len() {
            return Err(Error::shape(
                format!("{} components", self.inputs.len()),
                format!("{}", components.len()),
            ));
        }
        let (f, t) = self.plane;
        for (buf, m) in self.inputs.iter_mut().zip(components) {
            if m.shape() != (t, f) {
                return Err(Error::shape(format!("{t}x{f} segment"), format!("{:?}", m.shape())));
            }
            for c in 0..f {
                buf.extend((0..t).map(|r| m.get(r, c) as f32));
            }
        }
        self.labels.push(label);
        self.clip_index.push(clip);
        Ok(())
    }

    /// Keeps only input `k` (e.g. the short component for DLDS).
    pub fn select_input(&self, k: usize) -> Result<SegmentDataset> {
        let buf = self
            .inputs
            .get(k)
            .ok_or_else(|| Error::arg("input", format!("{k} out of range")))?;
        Ok(SegmentDataset {
            plane: self.plane,
            inputs: vec![buf.clone()],
            labels: self.labels.clone(),
            clip_index: self.clip_index.clone(),
        })
    }

    /// `[B, 1, F, T]` tensors for the given sample indices.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> Vec<Tensor<T>> {
        let (f, t) = self.plane;
        let per = f * t;
        self.inputs
            .iter()
            .map(|buf| {
                let mut data = Vec::with_capacity(indices.len() * per);
                for &i in indices {
                    data.extend(buf[i * per..(i + 1) * per].iter().map(|&v| T::of(v as f64)));
                }
                Tensor::from_vec(&[indices.len(), 1, f, t], data).expect("batch shape")
            })
            .collect()
    }

    pub fn one_hot(&self, indices: &[usize], n_classes: usize) -> Vec<Vec<f64>> {
        indices
            .iter()
            .map(|&i| {
                let mut y = vec![0.0; n_classes];
                y[self.labels[i]] = 1.0;
                y
            })
            .collect()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub main_loss: f64,
    pub aux_loss: f64,
    pub total_loss: f64,
}

pub fn write_log_csv(rows: &[LogRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,step,lr,main_loss,aux_loss,total_loss")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{},{},{}",
            r.epoch, r.step, r.lr, r.main_loss, r.aux_loss, r.total_loss
        )?;
    }
    Ok(())
}

/// Mean main loss per epoch.
pub fn epoch_means(rows: &[LogRow]) -> Vec<f64> {
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for r in rows {
        if sums.len() <= r.epoch {
            sums.resize(r.epoch + 1, (0.0, 0));
        }
        sums[r.epoch].0 += r.main_loss;
        sums[r.epoch].1 += 1;
    }
    sums.into_iter().map(|(s, n)| s / n.max(1) as f64).collect()
}

/// Trained inference network (the auxiliary head is discarded) and log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network<f32>,
    pub log: Vec<LogRow>,
}

/// Trains a network for `cfg.regime` on `data`.
///
/// `net_cfg.branch_count` and `n_input_channels` are overridden from the
/// regime; `data` must provide one input per branch (for DLDS, select the
/// short component beforehand).
pub fn train_model(
    data: &SegmentDataset,
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    let branches = cfg.regime.branch_count();
    if data.n_inputs() != branches {
        return Err(Error::InvalidConfig(format!(
            "{} needs {branches} input(s) per sample, dataset has {}",
            cfg.regime,
            data.n_inputs()
        )));
    }
    let net_cfg = NetworkConfig {
        branch_count: branches,
        n_input_channels: 1,
        input_hw: data.plane,
        ..net_cfg.clone()
    };
    let mut net = build_network::<f32>(&net_cfg)?;
    net.set_mode(Mode::Train);
    let mut aux = match (cfg.regime, cfg.aux_spec) {
        (Regime::Rfl, Some(spec)) => Some((AuxHead::<f32>::for_network(&net_cfg)?, spec)),
        _ => None,
    };
    let hp = AdamParams::from(cfg);
    let mut state = AdamState::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7EA1_u64.rotate_left(32));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::new();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg)?;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut inputs = data.batch::<f32>(chunk);
            let mut labels = data.one_hot(chunk, net_cfg.n_classes);
            if cfg.mixup && chunk.len() >= 2 {
                (inputs, labels) = mixup_batch(&inputs, &labels, &mut rng)?;
            }
            net.zero_grad();
            if let Some((head, _)) = aux.as_mut() {
                head.parameters_mut().into_iter().for_each(|p| p.zero_grad());
            }
            let loss = batch_objective(
                &mut net,
                aux.as_mut().map(|(h, s)| (h, &*s)),
                &inputs,
                &labels,
                true,
            )?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: loss.total,
                });
            }
            let mut params = net.parameters_mut();
            if let Some((head, _)) = aux.as_mut() {
                params.extend(head.parameters_mut());
            }
            adam_step(&mut params, &mut state, lr, &hp)?;
            log.push(LogRow {
                epoch,
                step,
                lr,
                main_loss: loss.main,
                aux_loss: loss.aux,
                total_loss: loss.total,
            });
            step += 1;
        }
    }
    net.set_mode(Mode::Eval);
    Ok(TrainOutcome { network: net, log })
}

/// Eval-mode sigmoid scores for every sample, `len × n_classes`.
pub fn predict_segments(net: &mut Network<f32>, data: &SegmentDataset, batch: usize) -> Result<Vec<Vec<f64>>> {
    let prev = net.mode();
    net.set_mode(Mode::Eval);
    let k = net.config.n_classes;
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(batch.max(1)) {
        let res = net.forward(&data.batch::<f32>(chunk))?;
        out.extend(res.probs.data.chunks_exact(k).map(|r| r.iter().map(|&v| v as f64).collect()));
    }
    net.set_mode(prev);
    Ok(out)
}
