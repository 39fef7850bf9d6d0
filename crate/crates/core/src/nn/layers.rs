//! Layer kernels with hand-written backward passes. Activations are
//! batch-major `[N, C, H, W]` buffers.

use std::hash::Hasher;

use rand::Rng;

use super::{gemm, Scalar, Tensor};

fn uniform<T: Scalar>(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<T> {
    (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect()
}

/// Unfolds a `C×H×W` plane into `(C·9)×(H·W)` patches of a 3×3 kernel
/// with zero padding 1.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ch * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the plane.
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut dx[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ch * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1]
                            .iter_mut()
                            .zip(&src[1..])
                            .for_each(|(d, s)| *d += *s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s),
                        _ => dst[1..]
                            .iter_mut()
                            .zip(&src[..w - 1])
                            .for_each(|(d, s)| *d += *s),
                    }
                }
            }
        }
    }
}

/// 3×3 convolution, stride 1, padding 1.
#[derive(Debug, Clone)]
pub struct Conv3x3<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl<T: Scalar> Conv3x3<T> {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_ch * 9;
        let bound = (6.0 / fan_in as f64).sqrt();
        Self {
            weight: Tensor::param(&[out_ch, in_ch, 3, 3], uniform(rng, out_ch * fan_in, bound)),
            bias: Tensor::param(&[out_ch], vec![T::zero(); out_ch]),
            in_ch,
            out_ch,
        }
    }

    pub fn forward(&self, x: &[T], n: usize, h: usize, w: usize) -> Vec<T> {
        let (c, o, hw) = (self.in_ch, self.out_ch, h * w);
        let mut cols = vec![T::zero(); c * 9 * hw];
        let mut out = vec![T::zero(); n * o * hw];
        for s in 0..n {
            im2col(&x[s * c * hw..(s + 1) * c * hw], c, h, w, &mut cols);
            let y = &mut out[s * o * hw..(s + 1) * o * hw];
            gemm(false, false, o, hw, c * 9, &self.weight.data, &cols, T::zero(), y);
            for (oc, b) in self.bias.data.iter().enumerate() {
                y[oc * hw..(oc + 1) * hw].iter_mut().for_each(|v| *v += *b);
            }
        }
        out
    }

    /// Accumulates weight/bias gradients; returns the input gradient when
    /// `need_dx` is set.
    pub fn backward(
        &mut self,
        x: &[T],
        dz: &[T],
        n: usize,
        h: usize,
        w: usize,
        need_dx: bool,
    ) -> Option<Vec<T>> {
        let (c, o, hw) = (self.in_ch, self.out_ch, h * w);
        let mut cols = vec![T::zero(); c * 9 * hw];
        let mut dcols = if need_dx { vec![T::zero(); c * 9 * hw] } else { Vec::new() };
        let mut dx = if need_dx { vec![T::zero(); n * c * hw] } else { Vec::new() };
        for s in 0..n {
            im2col(&x[s * c * hw..(s + 1) * c * hw], c, h, w, &mut cols);
            let g = &dz[s * o * hw..(s + 1) * o * hw];
            gemm(false, true, o, c * 9, hw, g, &cols, T::one(), self.weight.grad_mut());
            let db = self.bias.grad_mut();
            for oc in 0..o {
                db[oc] += g[oc * hw..(oc + 1) * hw].iter().copied().sum::<T>();
            }
            if need_dx {
                gemm(true, false, c * 9, hw, o, &self.weight.data, g, T::zero(), &mut dcols);
                col2im(&dcols, c, h, w, &mut dx[s * c * hw..(s + 1) * c * hw]);
            }
        }
        need_dx.then_some(dx)
    }
}

/// Batch normalisation over `[N, C, S]` (S = spatial size, 1 for dense
/// layers), with running statistics for inference.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    pub momentum: f64,
}

pub(crate) struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<f64>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::param(&[channels], vec![T::one(); channels]),
            beta: Tensor::param(&[channels], vec![T::zero(); channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    /// Normalises `z` in place with batch statistics and updates the running
    /// estimates.
    pub(crate) fn forward_train(&mut self, z: &mut [T], n: usize, s: usize) -> BnCache<T> {
        let c = self.channels();
        let m = (n * s) as f64;
        let mut inv_std = vec![0.0; c];
        let mut xhat = vec![T::zero(); z.len()];
        for ch in 0..c {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for i in 0..n {
                for v in &z[(i * c + ch) * s..][..s] {
                    let v = v.f64();
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / m;
            let var = (sq / m - mean * mean).max(0.0);
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = istd;
            let (g, b) = (self.gamma.data[ch], self.beta.data[ch]);
            let (mean_t, istd_t) = (T::of(mean), T::of(istd));
            for i in 0..n {
                let off = (i * c + ch) * s;
                for (zv, xh) in z[off..off + s].iter_mut().zip(&mut xhat[off..off + s]) {
                    *xh = (*zv - mean_t) * istd_t;
                    *zv = g * *xh + b;
                }
            }
            let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
            let mom = self.momentum;
            self.running_mean[ch] = T::of((1.0 - mom) * self.running_mean[ch].f64() + mom * mean);
            self.running_var[ch] = T::of((1.0 - mom) * self.running_var[ch].f64() + mom * unbiased);
        }
        BnCache { xhat, inv_std }
    }

    pub(crate) fn forward_eval(&self, z: &mut [T], n: usize, s: usize) {
        let c = self.channels();
        for ch in 0..c {
            let istd = T::of(1.0 / (self.running_var[ch].f64() + self.eps).sqrt());
            let scale = self.gamma.data[ch] * istd;
            let shift = self.beta.data[ch] - self.running_mean[ch] * scale;
            for i in 0..n {
                z[(i * c + ch) * s..][..s]
                    .iter_mut()
                    .for_each(|v| *v = *v * scale + shift);
            }
        }
    }

    /// Turns `dy` (gradient w.r.t. the BN output) into the gradient w.r.t.
    /// the BN input, in place.
    pub(crate) fn backward(&mut self, dy: &mut [T], cache: &BnCache<T>, n: usize, s: usize) {
        let c = self.channels();
        let m = (n * s) as f64;
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for i in 0..n {
                let off = (i * c + ch) * s;
                for (d, xh) in dy[off..off + s].iter().zip(&cache.xhat[off..off + s]) {
                    sum_dy += d.f64();
                    sum_dy_xhat += (*d * *xh).f64();
                }
            }
            self.gamma.grad_mut()[ch] += T::of(sum_dy_xhat);
            self.beta.grad_mut()[ch] += T::of(sum_dy);
            let g = self.gamma.data[ch].f64();
            let k = T::of(g * cache.inv_std[ch] / m);
            let (a, b) = (T::of(sum_dy), T::of(sum_dy_xhat));
            let mt = T::of(m);
            for i in 0..n {
                let off = (i * c + ch) * s;
                for (d, xh) in dy[off..off + s].iter_mut().zip(&cache.xhat[off..off + s]) {
                    *d = k * (mt * *d - a - *xh * b);
                }
            }
        }
    }

    /// ReLU mask of the BN output, recomputed from the cached `xhat`.
    pub(crate) fn relu_backward(&self, dy: &mut [T], cache: &BnCache<T>, n: usize, s: usize) {
        let c = self.channels();
        for ch in 0..c {
            let (g, b) = (self.gamma.data[ch], self.beta.data[ch]);
            for i in 0..n {
                let off = (i * c + ch) * s;
                for (d, xh) in dy[off..off + s].iter_mut().zip(&cache.xhat[off..off + s]) {
                    if g * *xh + b <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
        }
    }
}

impl<T: Scalar> BatchNorm<T> {
    /// Feeds the ReLU on/off pattern of a cached forward pass to `h`.
    pub(crate) fn hash_relu_mask(&self, cache: &BnCache<T>, n: usize, s: usize, h: &mut impl Hasher) {
        let c = self.channels();
        for ch in 0..c {
            let (g, b) = (self.gamma.data[ch], self.beta.data[ch]);
            for i in 0..n {
                let off = (i * c + ch) * s;
                for chunk in cache.xhat[off..off + s].chunks(64) {
                    let bits = chunk
                        .iter()
                        .enumerate()
                        .fold(0u64, |acc, (k, xh)| acc | (((g * *xh + b > T::zero()) as u64) << k));
                    h.write_u64(bits);
                }
            }
        }
    }
}

pub(crate) fn relu_inplace<T: Scalar>(v: &mut [T]) {
    v.iter_mut().for_each(|x| {
        if *x < T::zero() {
            *x = T::zero()
        }
    });
}

/// Conv → BN → ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock<T> {
    pub conv: Conv3x3<T>,
    pub bn: BatchNorm<T>,
}

pub(crate) struct ConvBlockCache<T> {
    x: Vec<T>,
    bn: BnCache<T>,
    n: usize,
    h: usize,
    w: usize,
}

impl<T: Scalar> ConvBlock<T> {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv: Conv3x3::new(in_ch, out_ch, rng),
            bn: BatchNorm::new(out_ch),
        }
    }

    pub(crate) fn forward(
        &mut self,
        x: Vec<T>,
        n: usize,
        h: usize,
        w: usize,
        train: bool,
    ) -> (Vec<T>, Option<ConvBlockCache<T>>) {
        let mut z = self.conv.forward(&x, n, h, w);
        let cache = if train {
            let bn = self.bn.forward_train(&mut z, n, h * w);
            Some(ConvBlockCache { x, bn, n, h, w })
        } else {
            self.bn.forward_eval(&mut z, n, h * w);
            None
        };
        relu_inplace(&mut z);
        (z, cache)
    }

    pub(crate) fn backward(
        &mut self,
        mut dy: Vec<T>,
        cache: &ConvBlockCache<T>,
        need_dx: bool,
    ) -> Option<Vec<T>> {
        let (n, h, w) = (cache.n, cache.h, cache.w);
        self.bn.relu_backward(&mut dy, &cache.bn, n, h * w);
        self.bn.backward(&mut dy, &cache.bn, n, h * w);
        self.conv.backward(&cache.x, &dy, n, h, w, need_dx)
    }
}

pub(crate) struct PoolCache {
    argmax: Vec<u8>,
    in_len: usize,
}

impl PoolCache {
    pub(crate) fn hash_pattern(&self, h: &mut impl Hasher) {
        h.write(&self.argmax);
    }
}

/// 2×2 max pooling, stride 2. Ties resolve to the first maximum in
/// row-major window order.
pub(crate) fn maxpool_forward<T: Scalar>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    train: bool,
) -> (Vec<T>, Option<PoolCache>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); planes * oh * ow];
    let mut argmax = if train { vec![0u8; out.len()] } else { Vec::new() };
    for p in 0..planes {
        let plane = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = 2 * oy * w + 2 * ox;
                let cand = [plane[base], plane[base + 1], plane[base + w], plane[base + w + 1]];
                let mut best = 0;
                for (i, v) in cand.iter().enumerate().skip(1) {
                    if *v > cand[best] {
                        best = i;
                    }
                }
                let o = (p * oh + oy) * ow + ox;
                out[o] = cand[best];
                if train {
                    argmax[o] = best as u8;
                }
            }
        }
    }
    let cache = train.then(|| PoolCache {
        argmax,
        in_len: x.len(),
    });
    (out, cache)
}

pub(crate) fn maxpool_backward<T: Scalar>(
    dy: &[T],
    cache: &PoolCache,
    planes: usize,
    h: usize,
    w: usize,
) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = vec![T::zero(); cache.in_len];
    for p in 0..planes {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (p * oh + oy) * ow + ox;
                let a = cache.argmax[o] as usize;
                let idx = p * h * w + (2 * oy + a / 2) * w + 2 * ox + a % 2;
                dx[idx] += dy[o];
            }
        }
    }
    dx
}

/// Fully connected layer, `y = x Wᵀ + b` with `W: [out, in]`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let bound = (gain / in_dim as f64).sqrt();
        Self {
            weight: Tensor::param(&[out_dim, in_dim], uniform(rng, out_dim * in_dim, bound)),
            bias: Tensor::param(&[out_dim], vec![T::zero(); out_dim]),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, x: &[T], n: usize) -> Vec<T> {
        let mut y = Vec::with_capacity(n * self.out_dim);
        for _ in 0..n {
            y.extend_from_slice(&self.bias.data);
        }
        gemm(false, true, n, self.out_dim, self.in_dim, x, &self.weight.data, T::one(), &mut y);
        y
    }

    pub fn backward(&mut self, x: &[T], dy: &[T], n: usize, need_dx: bool) -> Option<Vec<T>> {
        let (i, o) = (self.in_dim, self.out_dim);
        gemm(true, false, o, i, n, dy, x, T::one(), self.weight.grad_mut());
        let db = self.bias.grad_mut();
        for s in 0..n {
            for (b, d) in db.iter_mut().zip(&dy[s * o..(s + 1) * o]) {
                *b += *d;
            }
        }
        need_dx.then(|| {
            let mut dx = vec![T::zero(); n * i];
            gemm(false, false, n, i, o, dy, &self.weight.data, T::zero(), &mut dx);
            dx
        })
    }
}

/// Linear → BN → ReLU.
#[derive(Debug, Clone)]
pub struct FcBlock<T> {
    pub linear: Linear<T>,
    pub bn: BatchNorm<T>,
}

pub(crate) struct FcBlockCache<T> {
    x: Vec<T>,
    bn: BnCache<T>,
    n: usize,
}

impl<T: Scalar> FcBlockCache<T> {
    pub(crate) fn hash_pattern(&self, block: &FcBlock<T>, h: &mut impl Hasher) {
        block.bn.hash_relu_mask(&self.bn, self.n, 1, h);
    }
}

impl<T: Scalar> ConvBlockCache<T> {
    pub(crate) fn hash_pattern(&self, block: &ConvBlock<T>, h: &mut impl Hasher) {
        block.bn.hash_relu_mask(&self.bn, self.n, self.h * self.w, h);
    }
}

impl<T: Scalar> FcBlock<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            linear: Linear::new(in_dim, out_dim, 6.0, rng),
            bn: BatchNorm::new(out_dim),
        }
    }

    pub(crate) fn forward(
        &mut self,
        x: Vec<T>,
        n: usize,
        train: bool,
    ) -> (Vec<T>, Option<FcBlockCache<T>>) {
        let mut z = self.linear.forward(&x, n);
        let cache = if train {
            let bn = self.bn.forward_train(&mut z, n, 1);
            Some(FcBlockCache { x, bn, n })
        } else {
            self.bn.forward_eval(&mut z, n, 1);
            None
        };
        relu_inplace(&mut z);
        (z, cache)
    }

    pub(crate) fn backward(&mut self, mut dy: Vec<T>, cache: &FcBlockCache<T>) -> Vec<T> {
        self.bn.relu_backward(&mut dy, &cache.bn, cache.n, 1);
        self.bn.backward(&mut dy, &cache.bn, cache.n, 1);
        self.linear
            .backward(&cache.x, &dy, cache.n, true)
            .expect("dx requested")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(x: &[f64], wt: &[f64], c: usize, o: usize, h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; o * h * w];
        for oc in 0..o {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    acc += x[(ic * h + sy as usize) * w + sx as usize]
                                        * wt[((oc * c + ic) * 3 + ky) * 3 + kx];
                                }
                            }
                        }
                    }
                    out[(oc * h + y) * w + xx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv3x3::<f64>::new(3, 4, &mut rng);
        let (h, w) = (6, 5);
        let x: Vec<f64> = (0..2 * 3 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = conv.forward(&x, 2, h, w);
        for s in 0..2 {
            let want = naive_conv(&x[s * 3 * h * w..(s + 1) * 3 * h * w], &conv.weight.data, 3, 4, h, w);
            for (a, b) in y[s * 4 * h * w..(s + 1) * 4 * h * w].iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (c, h, w) = (2, 4, 7);
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..c * 9 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut cols = vec![0.0; c * 9 * h * w];
        im2col(&x, c, h, w, &mut cols);
        let mut back = vec![0.0; c * h * w];
        col2im(&g, c, h, w, &mut back);
        let lhs: f64 = cols.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn maxpool_picks_window_maximum() {
        let x: Vec<f64> = vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 7.0, 1.0];
        let (y, cache) = maxpool_forward(&x, 1, 2, 4, true);
        assert_eq!(y, vec![5.0, 7.0]);
        let dx = maxpool_backward(&[1.0, 2.0], &cache.unwrap(), 1, 2, 4);
        assert_eq!(dx, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn batchnorm_train_output_is_standardised() {
        let mut bn = BatchNorm::<f64>::new(2);
        let mut z: Vec<f64> = (0..3 * 2 * 4).map(|i| (i as f64 * 0.7).sin() * 3.0 + 1.0).collect();
        bn.forward_train(&mut z, 3, 4);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|i| z[(i * 2 + ch) * 4..][..4].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / 12.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
        assert!(bn.running_mean.iter().any(|&m| m != 0.0));
    }

    #[test]
    fn linear_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lin = Linear::<f64>::new(3, 2, 6.0, &mut rng);
        lin.bias.data = vec![0.5, -0.5];
        let x = vec![1.0, 2.0, 3.0];
        let y = lin.forward(&x, 1);
        for o in 0..2 {
            let want: f64 = (0..3).map(|i| lin.weight.data[o * 3 + i] * x[i]).sum::<f64>() + lin.bias.data[o];
            assert!((y[o] - want).abs() < 1e-12);
        }
    }
}
