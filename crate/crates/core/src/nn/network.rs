use std::hash::Hasher;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    maxpool_backward, maxpool_forward, ConvBlock, ConvBlockCache, FcBlock, FcBlockCache, Linear,
    PoolCache,
};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Convolution widths of the reference single-input classifier.
pub const FULL_CONV_WIDTHS: [usize; 5] = [48, 96, 192, 192, 192];
pub const FULL_FC_WIDTHS: [usize; 2] = [1024, 256];
/// A 2×2 max pool follows conv blocks 0, 1, 2 and 4.
const POOL_AFTER: [bool; 5] = [true, true, true, false, true];

/// Declarative architecture.
///
/// `conv_widths` are the single-input reference widths; each branch uses
/// `width · width_factor / branch_count` filters, so a two-branch network
/// splits the reference kernels into two halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Input channels per branch.
    pub n_input_channels: usize,
    pub branch_count: usize,
    pub conv_widths: [usize; 5],
    pub width_factor: f64,
    pub fc_widths: Vec<usize>,
    pub n_classes: usize,
    /// `(frequency, time)` size of each input plane.
    pub input_hw: (usize, usize),
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_input_channels: 1,
            branch_count: 1,
            conv_widths: FULL_CONV_WIDTHS,
            width_factor: 1.0,
            fc_widths: FULL_FC_WIDTHS.to_vec(),
            n_classes: 10,
            input_hw: (128, 128),
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn full_width() -> Self {
        Self::default()
    }

    /// Two-branch network for a two-component decomposition.
    pub fn multi_input() -> Self {
        Self {
            branch_count: 2,
            ..Self::default()
        }
    }

    pub fn with_width_factor(mut self, f: f64) -> Self {
        self.width_factor = f;
        self
    }

    pub fn with_fc_widths(mut self, widths: &[usize]) -> Self {
        self.fc_widths = widths.to_vec();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Filters per conv block within one branch.
    pub fn branch_widths(&self) -> Result<Vec<usize>> {
        if !(self.width_factor > 0.0) {
            return Err(Error::InvalidConfig("width factor must be positive".into()));
        }
        if !(1..=2).contains(&self.branch_count) {
            return Err(Error::InvalidConfig(format!(
                "branch_count must be 1 or 2, got {}",
                self.branch_count
            )));
        }
        self.conv_widths
            .iter()
            .map(|&w| {
                let exact = w as f64 * self.width_factor / self.branch_count as f64;
                let rounded = exact.round();
                if rounded < 1.0 || (exact - rounded).abs() > 1e-9 {
                    Err(Error::InvalidConfig(format!(
                        "width {w} × {} / {} branches is not a positive integer",
                        self.width_factor, self.branch_count
                    )))
                } else {
                    Ok(rounded as usize)
                }
            })
            .collect()
    }

    /// Spatial size after the four pooling stages.
    pub fn embedding_hw(&self) -> (usize, usize) {
        (self.input_hw.0 / 16, self.input_hw.1 / 16)
    }

    /// Length of one branch's flattened embedding.
    pub fn branch_embedding_len(&self) -> Result<usize> {
        let widths = self.branch_widths()?;
        let (eh, ew) = self.embedding_hw();
        Ok(widths[4] * eh * ew)
    }

    pub fn validate(&self) -> Result<()> {
        self.branch_widths()?;
        if self.n_input_channels == 0 || self.n_classes == 0 {
            return Err(Error::InvalidConfig("channel and class counts must be positive".into()));
        }
        let (h, w) = self.input_hw;
        if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return Err(Error::InvalidConfig(format!(
                "input size {h}x{w} must be a positive multiple of 16"
            )));
        }
        if self.fc_widths.is_empty() || self.fc_widths.contains(&0) {
            return Err(Error::InvalidConfig("fully connected widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One convolutional feature extractor.
#[derive(Debug, Clone)]
pub struct ConvStack<T> {
    pub blocks: Vec<ConvBlock<T>>,
}

enum StackCache<T> {
    Conv(ConvBlockCache<T>),
    Pool(PoolCache, usize, usize, usize),
}

impl<T: Scalar> ConvStack<T> {
    fn new(in_ch: usize, widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut blocks = Vec::with_capacity(widths.len());
        let mut c = in_ch;
        for &w in widths {
            blocks.push(ConvBlock::new(c, w, rng));
            c = w;
        }
        Self { blocks }
    }

    fn out_channels(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.conv.out_ch)
    }

    fn forward(
        &mut self,
        mut x: Vec<T>,
        n: usize,
        mut h: usize,
        mut w: usize,
        train: bool,
        caches: &mut Vec<StackCache<T>>,
    ) -> Vec<T> {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let (y, cache) = block.forward(x, n, h, w, train);
            x = y;
            if let Some(c) = cache {
                caches.push(StackCache::Conv(c));
            }
            if POOL_AFTER[i] {
                let planes = n * block.conv.out_ch;
                let (y, cache) = maxpool_forward(&x, planes, h, w, train);
                if let Some(c) = cache {
                    caches.push(StackCache::Pool(c, planes, h, w));
                }
                x = y;
                h /= 2;
                w /= 2;
            }
        }
        x
    }

    fn backward(&mut self, mut dy: Vec<T>, caches: &mut Vec<StackCache<T>>) {
        for i in (0..self.blocks.len()).rev() {
            if POOL_AFTER[i] {
                match caches.pop() {
                    Some(StackCache::Pool(c, planes, h, w)) => {
                        dy = maxpool_backward(&dy, &c, planes, h, w);
                    }
                    _ => unreachable!("cache order"),
                }
            }
            match caches.pop() {
                Some(StackCache::Conv(c)) => {
                    let need_dx = i > 0;
                    if let Some(dx) = self.blocks[i].backward(dy, &c, need_dx) {
                        dy = dx;
                    } else {
                        dy = Vec::new();
                    }
                }
                _ => unreachable!("cache order"),
            }
        }
    }
}

struct ForwardCache<T> {
    n: usize,
    stacks: Vec<Vec<StackCache<T>>>,
    fc: Vec<FcBlockCache<T>>,
    head_x: Vec<T>,
}

/// Result of one forward pass over a batch.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// `[N, n_classes]`
    pub logits: Tensor<T>,
    /// `sigmoid(logits)`
    pub probs: Tensor<T>,
    /// Per branch `[N, C, F', T']` after the last pooling stage.
    pub embeddings: Vec<Tensor<T>>,
}

/// Convolutional extractor(s), a shared fully connected classifier and a
/// sigmoid head.
pub struct Network<T: Scalar> {
    pub config: NetworkConfig,
    pub branches: Vec<ConvStack<T>>,
    pub fc: Vec<FcBlock<T>>,
    pub head: Linear<T>,
    mode: Mode,
    cache: Option<ForwardCache<T>>,
}

impl<T: Scalar> std::fmt::Debug for Network<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("config", &self.config)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> Clone for Network<T> {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            branches: self.branches.clone(),
            fc: self.fc.clone(),
            head: self.head.clone(),
            mode: self.mode,
            cache: None,
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Builds a freshly initialised network.
pub fn build_network<T: Scalar>(cfg: &NetworkConfig) -> Result<Network<T>> {
    cfg.validate()?;
    let widths = cfg.branch_widths()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let branches: Vec<ConvStack<T>> = (0..cfg.branch_count)
        .map(|_| ConvStack::new(cfg.n_input_channels, &widths, &mut rng))
        .collect();
    let mut in_dim = cfg.branch_embedding_len()? * cfg.branch_count;
    let mut fc = Vec::with_capacity(cfg.fc_widths.len());
    for &w in &cfg.fc_widths {
        fc.push(FcBlock::new(in_dim, w, &mut rng));
        in_dim = w;
    }
    let head = Linear::new(in_dim, cfg.n_classes, 3.0, &mut rng);
    Ok(Network {
        config: cfg.clone(),
        branches,
        fc,
        head,
        mode: Mode::Train,
        cache: None,
    })
}

impl<T: Scalar> Network<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        self.cache = None;
    }

    pub fn branch_conv_widths(&self) -> Vec<Vec<usize>> {
        self.branches
            .iter()
            .map(|b| b.blocks.iter().map(|blk| blk.conv.out_ch).collect())
            .collect()
    }

    /// Trainable tensors in declaration order.
    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for stack in &self.branches {
            for b in &stack.blocks {
                out.extend([&b.conv.weight, &b.conv.bias, &b.bn.gamma, &b.bn.beta]);
            }
        }
        for b in &self.fc {
            out.extend([&b.linear.weight, &b.linear.bias, &b.bn.gamma, &b.bn.beta]);
        }
        out.extend([&self.head.weight, &self.head.bias]);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for stack in &mut self.branches {
            for b in &mut stack.blocks {
                out.extend([
                    &mut b.conv.weight,
                    &mut b.conv.bias,
                    &mut b.bn.gamma,
                    &mut b.bn.beta,
                ]);
            }
        }
        for b in &mut self.fc {
            out.extend([
                &mut b.linear.weight,
                &mut b.linear.bias,
                &mut b.bn.gamma,
                &mut b.bn.beta,
            ]);
        }
        out.extend([&mut self.head.weight, &mut self.head.bias]);
        out
    }

    /// Human-readable names matching [`Self::parameters`].
    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (bi, stack) in self.branches.iter().enumerate() {
            for li in 0..stack.blocks.len() {
                for p in ["conv.weight", "conv.bias", "bn.gamma", "bn.beta"] {
                    out.push(format!("branch{bi}.block{li}.{p}"));
                }
            }
        }
        for li in 0..self.fc.len() {
            for p in ["linear.weight", "linear.bias", "bn.gamma", "bn.beta"] {
                out.push(format!("fc{li}.{p}"));
            }
        }
        out.push("head.weight".into());
        out.push("head.bias".into());
        out
    }

    /// Fingerprint of the ReLU on/off states and max-pool selections of the
    /// last train-mode forward pass. Two passes with the same fingerprint
    /// lie in the same piecewise-smooth region of the network.
    pub fn activation_pattern(&self) -> Option<u64> {
        let cache = self.cache.as_ref()?;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (stack, caches) in self.branches.iter().zip(&cache.stacks) {
            let mut blocks = stack.blocks.iter();
            for c in caches {
                match c {
                    StackCache::Conv(cc) => cc.hash_pattern(blocks.next().expect("cache order"), &mut h),
                    StackCache::Pool(pc, ..) => pc.hash_pattern(&mut h),
                }
            }
        }
        for (b, c) in self.fc.iter().zip(&cache.fc) {
            c.hash_pattern(b, &mut h);
        }
        Some(h.finish())
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Runs the network on one input tensor per branch, each
    /// `[N, n_input_channels, F, T]`.
    pub fn forward(&mut self, inputs: &[Tensor<T>]) -> Result<ForwardOutput<T>> {
        let cfg = &self.config;
        if inputs.len() != cfg.branch_count {
            return Err(Error::shape(
                format!("{} branch inputs", cfg.branch_count),
                format!("{}", inputs.len()),
            ));
        }
        let (h, w) = cfg.input_hw;
        let n = inputs[0].shape().first().copied().unwrap_or(0);
        let want = [n, cfg.n_input_channels, h, w];
        for t in inputs {
            if t.shape() != want || n == 0 {
                return Err(Error::shape(format!("{want:?}"), format!("{:?}", t.shape())));
            }
        }
        let train = self.mode == Mode::Train;
        let (eh, ew) = cfg.embedding_hw();

        let mut stack_caches = Vec::with_capacity(self.branches.len());
        let mut embeddings = Vec::with_capacity(self.branches.len());
        for (stack, input) in self.branches.iter_mut().zip(inputs) {
            let mut caches = Vec::new();
            let emb = stack.forward(input.data.clone(), n, h, w, train, &mut caches);
            embeddings.push(Tensor::from_vec(&[n, stack.out_channels(), eh, ew], emb)?);
            stack_caches.push(caches);
        }

        let mut x = concat_per_sample(&embeddings, n);
        let mut fc_caches = Vec::with_capacity(self.fc.len());
        for block in &mut self.fc {
            let (y, cache) = block.forward(x, n, train);
            x = y;
            fc_caches.extend(cache);
        }
        let logits = self.head.forward(&x, n);
        let probs = logits.iter().map(|&v| sigmoid(v)).collect();
        let k = self.config.n_classes;

        self.cache = train.then(|| ForwardCache {
            n,
            stacks: stack_caches,
            fc: fc_caches,
            head_x: x,
        });
        Ok(ForwardOutput {
            logits: Tensor::from_vec(&[n, k], logits)?,
            probs: Tensor::from_vec(&[n, k], probs)?,
            embeddings,
        })
    }

    /// Back-propagates `d_logits` (`[N, n_classes]`) from the last train-mode
    /// forward pass, accumulating into every parameter gradient.
    /// `extra_embedding_grads` adds gradient arriving at a branch embedding
    /// from outside the network (an auxiliary classifier).
    pub fn backward(
        &mut self,
        d_logits: &Tensor<T>,
        extra_embedding_grads: &[Option<&Tensor<T>>],
    ) -> Result<()> {
        let mut cache = self.cache.take().ok_or_else(|| {
            Error::InvalidConfig("backward requires a preceding train-mode forward".into())
        })?;
        let n = cache.n;
        let k = self.config.n_classes;
        if d_logits.shape() != [n, k] {
            return Err(Error::shape(format!("[{n}, {k}]"), format!("{:?}", d_logits.shape())));
        }
        let mut dx = self
            .head
            .backward(&cache.head_x, &d_logits.data, n, true)
            .expect("dx");
        for (block, c) in self.fc.iter_mut().zip(&cache.fc).rev() {
            dx = block.backward(dx, c);
        }

        let (eh, ew) = self.config.embedding_hw();
        let per: Vec<usize> = self
            .branches
            .iter()
            .map(|s| s.out_channels() * eh * ew)
            .collect();
        let mut splits = split_per_sample(&dx, n, &per);
        for (b, extra) in extra_embedding_grads.iter().enumerate() {
            if let Some(g) = extra {
                if b >= splits.len() || g.numel() != splits[b].len() {
                    return Err(Error::shape("embedding-shaped gradient", format!("{:?}", g.shape())));
                }
                for (d, e) in splits[b].iter_mut().zip(&g.data) {
                    *d += *e;
                }
            }
        }
        for ((stack, caches), dy) in self
            .branches
            .iter_mut()
            .zip(cache.stacks.iter_mut())
            .zip(splits)
        {
            stack.backward(dy, caches);
        }
        Ok(())
    }
}

fn concat_per_sample<T: Scalar>(parts: &[Tensor<T>], n: usize) -> Vec<T> {
    let per: Vec<usize> = parts.iter().map(|t| t.numel() / n).collect();
    let mut out = Vec::with_capacity(parts.iter().map(|t| t.numel()).sum());
    for s in 0..n {
        for (t, &len) in parts.iter().zip(&per) {
            out.extend_from_slice(&t.data[s * len..(s + 1) * len]);
        }
    }
    out
}

fn split_per_sample<T: Scalar>(x: &[T], n: usize, per: &[usize]) -> Vec<Vec<T>> {
    let total: usize = per.iter().sum();
    let mut out: Vec<Vec<T>> = per.iter().map(|&l| Vec::with_capacity(l * n)).collect();
    for s in 0..n {
        let mut off = s * total;
        for (o, &len) in out.iter_mut().zip(per) {
            o.extend_from_slice(&x[off..off + len]);
            off += len;
        }
    }
    out
}

/// Total number of trainable values.
pub fn count_parameters<T: Scalar>(net: &Network<T>) -> usize {
    net.parameters().iter().map(|p| p.numel()).sum()
}

/// Mean over the last (time) axis of a `[C, F', T']` map, flattened to
/// `C·F'` values.
pub fn time_average_embedding<T: Scalar>(map: &[T], c: usize, f: usize, t: usize) -> Result<Vec<T>> {
    if t == 0 {
        return Err(Error::arg("map", "empty time axis"));
    }
    if map.len() != c * f * t {
        return Err(Error::shape(format!("{} values", c * f * t), format!("{}", map.len())));
    }
    let inv = T::one() / T::of(t as f64);
    Ok(map.chunks_exact(t).map(|row| row.iter().copied().sum::<T>() * inv).collect())
}

/// Training-only classifier on the time-averaged embedding of one branch.
#[derive(Debug, Clone)]
pub struct AuxHead<T> {
    pub linear: Linear<T>,
    shape: (usize, usize, usize),
    input: Option<(Vec<T>, usize)>,
}

impl<T: Scalar> AuxHead<T> {
    /// `embedding` is `(C, F', T')` of the tapped branch.
    pub fn new(embedding: (usize, usize, usize), n_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA0C5_11EA_D000_0001);
        let (c, f, _) = embedding;
        Self {
            linear: Linear::new(c * f, n_classes, 3.0, &mut rng),
            shape: embedding,
            input: None,
        }
    }

    pub fn for_network(cfg: &NetworkConfig) -> Result<Self> {
        let widths = cfg.branch_widths()?;
        let (eh, ew) = cfg.embedding_hw();
        Ok(Self::new((widths[4], eh, ew), cfg.n_classes, cfg.seed))
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.linear.weight, &mut self.linear.bias]
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        vec![&self.linear.weight, &self.linear.bias]
    }

    /// Returns `(logits, probs)`, each `[N, n_classes]`.
    pub fn forward(&mut self, embedding: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let (c, f, t) = self.shape;
        let n = embedding.shape().first().copied().unwrap_or(0);
        if embedding.shape() != [n, c, f, t] {
            return Err(Error::shape(format!("[N, {c}, {f}, {t}]"), format!("{:?}", embedding.shape())));
        }
        let mut pooled = Vec::with_capacity(n * c * f);
        for s in 0..n {
            pooled.extend(time_average_embedding(&embedding.data[s * c * f * t..(s + 1) * c * f * t], c, f, t)?);
        }
        let logits = self.linear.forward(&pooled, n);
        let probs = logits.iter().map(|&v| sigmoid(v)).collect();
        self.input = Some((pooled, n));
        let k = self.linear.out_dim;
        Ok((Tensor::from_vec(&[n, k], logits)?, Tensor::from_vec(&[n, k], probs)?))
    }

    /// Gradient w.r.t. the `[N, C, F', T']` embedding.
    pub fn backward(&mut self, d_logits: &Tensor<T>) -> Result<Tensor<T>> {
        let (pooled, n) = self
            .input
            .take()
            .ok_or_else(|| Error::InvalidConfig("aux backward without forward".into()))?;
        let (c, f, t) = self.shape;
        let dp = self.linear.backward(&pooled, &d_logits.data, n, true).expect("dx");
        let inv = T::one() / T::of(t as f64);
        let mut out = Vec::with_capacity(n * c * f * t);
        for g in dp {
            out.extend(std::iter::repeat(g * inv).take(t));
        }
        Tensor::from_vec(&[n, c, f, t], out)
    }
}
