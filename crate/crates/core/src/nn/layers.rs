//! Layers with hand-written reverse-mode gradients.
//!
//! `forward` caches what `backward` needs; `backward` consumes the cache,
//! accumulates parameter gradients and returns the gradient w.r.t. the
//! layer input. `infer` is the cache-free forward used for prediction.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::tensor::{gemm, Param, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub trait Layer<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    /// Non-trainable state saved with the model (batch-norm running stats).
    fn buffers(&self) -> Vec<&Tensor<T>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Vec::new()
    }
}

fn he_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize, gain: f64) -> Tensor<T> {
    let std = gain * (2.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(std * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::from_vec(shape, data).expect("size matches")
}

// ---------------------------------------------------------------------------

/// Fully connected layer, `y = x W^T + b` over the flattened trailing dims.
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, n_in: usize, n_out: usize, gain: f64) -> Self {
        Dense {
            weight: Param::new(he_normal(rng, &[n_out, n_in], n_in, gain)),
            bias: Param::new(Tensor::zeros(&[n_out])),
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.weight.value.shape()[1], self.weight.value.shape()[0])
    }

    fn compute(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n_in, n_out) = self.dims();
        let b = x.batch();
        if b == 0 || x.len() != b * n_in {
            return Err(Error::shape(format!("dense expects [B, {n_in}], got {:?}", x.shape())));
        }
        let mut y = vec![T::zero(); b * n_out];
        gemm(false, true, b, n_out, n_in, T::one(), x.data(), self.weight.value.data(), T::zero(), &mut y);
        let bias = self.bias.value.data();
        for row in y.chunks_exact_mut(n_out) {
            for (v, &bb) in row.iter_mut().zip(bias) {
                *v += bb;
            }
        }
        Tensor::from_vec(&[b, n_out], y)
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = self.compute(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.compute(x)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or(Error::BackwardBeforeForward("dense"))?;
        let (n_in, n_out) = self.dims();
        let b = x.batch();
        if grad.len() != b * n_out {
            return Err(Error::shape("dense: gradient does not match the last forward output"));
        }
        let g = grad.data();
        gemm(true, false, n_out, n_in, b, T::one(), g, x.data(), T::one(), self.weight.grad.data_mut());
        let db = self.bias.grad.data_mut();
        for row in g.chunks_exact(n_out) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        let mut dx = vec![T::zero(); b * n_in];
        gemm(false, false, b, n_in, n_out, T::one(), g, self.weight.value.data(), T::zero(), &mut dx);
        Tensor::from_vec(x.shape(), dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------

#[derive(Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: None }
    }
}

impl<T: Scalar> Layer<T> for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let data = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        Tensor::from_vec(x.shape(), data)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.take().ok_or(Error::BackwardBeforeForward("relu"))?;
        if mask.len() != grad.len() {
            return Err(Error::shape("relu: gradient does not match the last forward output"));
        }
        let data = grad.data().iter().zip(&mask).map(|(&g, &m)| if m { g } else { T::zero() }).collect();
        Tensor::from_vec(grad.shape(), data)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvGeom {
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

/// 2-D convolution over `[B, C, H, W]`, lowered to one GEMM per batch via im2col.
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    stride: usize,
    padding: usize,
    cache: Option<(ConvGeom, Vec<T>)>,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        gain: f64,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        Conv2d {
            weight: Param::new(he_normal(rng, &[c_out, c_in, kernel, kernel], fan_in, gain)),
            bias: bias.then(|| Param::new(Tensor::zeros(&[c_out]))),
            stride,
            padding,
            cache: None,
        }
    }

    fn kernel(&self) -> (usize, usize, usize) {
        let s = self.weight.value.shape();
        (s[0], s[1], s[2])
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<ConvGeom> {
        let (_, c_in, k) = self.kernel();
        let s = x.shape();
        if s.len() != 4 || s[1] != c_in || s[0] == 0 {
            return Err(Error::shape(format!("conv expects [B, {c_in}, H, W], got {s:?}")));
        }
        let (h, w) = (s[2], s[3]);
        if h + 2 * self.padding < k || w + 2 * self.padding < k {
            return Err(Error::shape(format!("conv input {h}x{w} smaller than kernel {k}")));
        }
        Ok(ConvGeom {
            batch: s[0],
            c: c_in,
            h,
            w,
            ho: (h + 2 * self.padding - k) / self.stride + 1,
            wo: (w + 2 * self.padding - k) / self.stride + 1,
        })
    }

    fn im2col(&self, x: &[T], g: &ConvGeom) -> Vec<T> {
        let (_, _, k) = self.kernel();
        let (s, p) = (self.stride as isize, self.padding as isize);
        let hw_out = g.ho * g.wo;
        let ncol = g.batch * hw_out;
        let mut cols = vec![T::zero(); g.c * k * k * ncol];
        for c in 0..g.c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((c * k + ki) * k + kj) * ncol;
                    for b in 0..g.batch {
                        let src = &x[(b * g.c + c) * g.h * g.w..][..g.h * g.w];
                        let dst = &mut cols[row + b * hw_out..][..hw_out];
                        for oh in 0..g.ho {
                            let ih = oh as isize * s - p + ki as isize;
                            if ih < 0 || ih >= g.h as isize {
                                continue;
                            }
                            let src_row = &src[ih as usize * g.w..][..g.w];
                            let dst_row = &mut dst[oh * g.wo..][..g.wo];
                            for (ow, d) in dst_row.iter_mut().enumerate() {
                                let iw = ow as isize * s - p + kj as isize;
                                if iw >= 0 && iw < g.w as isize {
                                    *d = src_row[iw as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[T], g: &ConvGeom) -> Vec<T> {
        let (_, _, k) = self.kernel();
        let (s, p) = (self.stride as isize, self.padding as isize);
        let hw_out = g.ho * g.wo;
        let ncol = g.batch * hw_out;
        let mut dx = vec![T::zero(); g.batch * g.c * g.h * g.w];
        for c in 0..g.c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((c * k + ki) * k + kj) * ncol;
                    for b in 0..g.batch {
                        let dst = &mut dx[(b * g.c + c) * g.h * g.w..][..g.h * g.w];
                        let src = &cols[row + b * hw_out..][..hw_out];
                        for oh in 0..g.ho {
                            let ih = oh as isize * s - p + ki as isize;
                            if ih < 0 || ih >= g.h as isize {
                                continue;
                            }
                            let dst_row = &mut dst[ih as usize * g.w..][..g.w];
                            for (ow, &v) in src[oh * g.wo..][..g.wo].iter().enumerate() {
                                let iw = ow as isize * s - p + kj as isize;
                                if iw >= 0 && iw < g.w as isize {
                                    dst_row[iw as usize] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn compute(&self, x: &Tensor<T>) -> Result<(ConvGeom, Vec<T>, Tensor<T>)> {
        let g = self.geometry(x)?;
        let (c_out, _, k) = self.kernel();
        let cols = self.im2col(x.data(), &g);
        let hw_out = g.ho * g.wo;
        let ncol = g.batch * hw_out;
        let mut tmp = vec![T::zero(); c_out * ncol];
        gemm(false, false, c_out, ncol, g.c * k * k, T::one(), self.weight.value.data(), &cols, T::zero(), &mut tmp);
        let mut y = vec![T::zero(); g.batch * c_out * hw_out];
        for o in 0..c_out {
            let bias = self.bias.as_ref().map_or(T::zero(), |b| b.value.data()[o]);
            for b in 0..g.batch {
                let src = &tmp[o * ncol + b * hw_out..][..hw_out];
                let dst = &mut y[(b * c_out + o) * hw_out..][..hw_out];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = v + bias;
                }
            }
        }
        Ok((g, cols, Tensor::from_vec(&[g.batch, c_out, g.ho, g.wo], y)?))
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (g, cols, y) = self.compute(x)?;
        self.cache = Some((g, cols));
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.compute(x)?.2)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let (g, cols) = self.cache.take().ok_or(Error::BackwardBeforeForward("conv2d"))?;
        let (c_out, _, k) = self.kernel();
        let hw_out = g.ho * g.wo;
        let ncol = g.batch * hw_out;
        if grad.len() != c_out * ncol {
            return Err(Error::shape("conv2d: gradient does not match the last forward output"));
        }
        let mut gm = vec![T::zero(); c_out * ncol];
        for o in 0..c_out {
            for b in 0..g.batch {
                gm[o * ncol + b * hw_out..][..hw_out].copy_from_slice(&grad.data()[(b * c_out + o) * hw_out..][..hw_out]);
            }
        }
        let ckk = g.c * k * k;
        gemm(false, true, c_out, ckk, ncol, T::one(), &gm, &cols, T::one(), self.weight.grad.data_mut());
        if let Some(bias) = self.bias.as_mut() {
            for (o, d) in bias.grad.data_mut().iter_mut().enumerate() {
                *d += gm[o * ncol..(o + 1) * ncol].iter().copied().sum::<T>();
            }
        }
        let mut dcols = vec![T::zero(); ckk * ncol];
        gemm(true, false, ckk, ncol, c_out, T::one(), self.weight.value.data(), &gm, T::zero(), &mut dcols);
        Tensor::from_vec(&[g.batch, g.c, g.h, g.w], self.col2im(&dcols, &g))
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.weight];
        v.extend(self.bias.as_ref());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.weight];
        v.extend(self.bias.as_mut());
        v
    }
}

// ---------------------------------------------------------------------------

/// Per-channel batch normalization over `[B, C, H, W]`.
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    running_mean: Tensor<T>,
    running_var: Tensor<T>,
    momentum: f64,
    eps: f64,
    cache: Option<BnCache<T>>,
}

struct BnCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
    batch_stats: bool,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        let mut gamma = Tensor::zeros(&[channels]);
        gamma.fill(T::one());
        let mut running_var = Tensor::zeros(&[channels]);
        running_var.fill(T::one());
        BatchNorm2d {
            gamma: Param::new(gamma),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var,
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    /// Starts the residual branch ending in this layer as an identity.
    pub fn zero_gamma(mut self) -> Self {
        self.gamma.value.fill(T::zero());
        self
    }

    fn dims(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let s = x.shape();
        let c = self.gamma.value.len();
        if s.len() != 4 || s[1] != c {
            return Err(Error::shape(format!("batchnorm expects [B, {c}, H, W], got {s:?}")));
        }
        Ok((s[0], c, s[2] * s[3]))
    }

    fn normalize(&self, x: &Tensor<T>, mean: &[f64], inv_std: &[f64]) -> Result<(Vec<T>, Tensor<T>)> {
        let (b, c, hw) = self.dims(x)?;
        let mut x_hat = vec![T::zero(); x.len()];
        let mut y = vec![T::zero(); x.len()];
        let (gamma, beta) = (self.gamma.value.data(), self.beta.value.data());
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * hw;
                let (m, s) = (T::from_f64_lossy(mean[ci]), T::from_f64_lossy(inv_std[ci]));
                for i in off..off + hw {
                    let xh = (x.data()[i] - m) * s;
                    x_hat[i] = xh;
                    y[i] = gamma[ci] * xh + beta[ci];
                }
            }
        }
        Ok((x_hat, Tensor::from_vec(x.shape(), y)?))
    }

    fn running_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let mean = self.running_mean.data().iter().map(|v| v.as_f64()).collect();
        let inv_std = self.running_var.data().iter().map(|v| 1.0 / (v.as_f64() + self.eps).sqrt()).collect();
        (mean, inv_std)
    }
}

impl<T: Scalar> Layer<T> for BatchNorm2d<T> {
    fn name(&self) -> &'static str {
        "batchnorm2d"
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (b, c, hw) = self.dims(x)?;
        let (mean, inv_std, batch_stats) = match mode {
            Mode::Eval => {
                let (m, s) = self.running_stats();
                (m, s, false)
            }
            Mode::Train => {
                let n = (b * hw) as f64;
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for bi in 0..b {
                    for ci in 0..c {
                        let off = (bi * c + ci) * hw;
                        mean[ci] += x.data()[off..off + hw].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                for bi in 0..b {
                    for ci in 0..c {
                        let off = (bi * c + ci) * hw;
                        var[ci] += x.data()[off..off + hw].iter().map(|v| (v.as_f64() - mean[ci]).powi(2)).sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                let mom = self.momentum;
                let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                for ci in 0..c {
                    let rm = &mut self.running_mean.data_mut()[ci];
                    *rm = T::from_f64_lossy((1.0 - mom) * rm.as_f64() + mom * mean[ci]);
                    let rv = &mut self.running_var.data_mut()[ci];
                    *rv = T::from_f64_lossy((1.0 - mom) * rv.as_f64() + mom * var[ci] * unbias);
                }
                let inv_std = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
                (mean, inv_std, true)
            }
        };
        let (x_hat, y) = self.normalize(x, &mean, &inv_std)?;
        self.cache = Some(BnCache {
            x_hat,
            inv_std: inv_std.into_iter().map(T::from_f64_lossy).collect(),
            shape: x.shape().to_vec(),
            batch_stats,
        });
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (mean, inv_std) = self.running_stats();
        Ok(self.normalize(x, &mean, &inv_std)?.1)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or(Error::BackwardBeforeForward("batchnorm2d"))?;
        if grad.shape() != cache.shape.as_slice() {
            return Err(Error::shape("batchnorm2d: gradient does not match the last forward output"));
        }
        let (b, c, hw) = (cache.shape[0], cache.shape[1], cache.shape[2] * cache.shape[3]);
        let g = grad.data();
        let mut sum_g = vec![T::zero(); c];
        let mut sum_gx = vec![T::zero(); c];
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * hw;
                for i in off..off + hw {
                    sum_g[ci] += g[i];
                    sum_gx[ci] += g[i] * cache.x_hat[i];
                }
            }
        }
        for ci in 0..c {
            self.gamma.grad.data_mut()[ci] += sum_gx[ci];
            self.beta.grad.data_mut()[ci] += sum_g[ci];
        }
        let n = T::from_usize(b * hw).expect("count");
        let gamma = self.gamma.value.data();
        let mut dx = vec![T::zero(); g.len()];
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * hw;
                let scale = gamma[ci] * cache.inv_std[ci];
                for i in off..off + hw {
                    dx[i] = if cache.batch_stats {
                        scale * (g[i] - sum_g[ci] / n - cache.x_hat[i] * sum_gx[ci] / n)
                    } else {
                        scale * g[i]
                    };
                }
            }
        }
        Tensor::from_vec(&cache.shape, dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Tensor<T>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

// ---------------------------------------------------------------------------

/// Max pooling with implicit `-inf` padding.
pub struct MaxPool2d {
    kernel: usize,
    stride: usize,
    padding: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        MaxPool2d { kernel, stride, padding, cache: None }
    }

    fn compute<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Vec<usize>, Tensor<T>)> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(Error::shape(format!("maxpool expects [B, C, H, W], got {s:?}")));
        }
        let (bc, h, w) = (s[0] * s[1], s[2], s[3]);
        if h + 2 * self.padding < self.kernel || w + 2 * self.padding < self.kernel {
            return Err(Error::shape("maxpool input smaller than its window"));
        }
        let ho = (h + 2 * self.padding - self.kernel) / self.stride + 1;
        let wo = (w + 2 * self.padding - self.kernel) / self.stride + 1;
        let mut y = Vec::with_capacity(bc * ho * wo);
        let mut arg = Vec::with_capacity(bc * ho * wo);
        for plane in 0..bc {
            let base = plane * h * w;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = None::<(usize, T)>;
                    for ki in 0..self.kernel {
                        let ih = (oh * self.stride + ki) as isize - self.padding as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for kj in 0..self.kernel {
                            let iw = (ow * self.stride + kj) as isize - self.padding as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            let idx = base + ih as usize * w + iw as usize;
                            let v = x.data()[idx];
                            if best.map_or(true, |(_, b)| v > b) {
                                best = Some((idx, v));
                            }
                        }
                    }
                    let (idx, v) = best.expect("window overlaps the input");
                    y.push(v);
                    arg.push(idx);
                }
            }
        }
        Ok((arg, Tensor::from_vec(&[s[0], s[1], ho, wo], y)?))
    }
}

impl<T: Scalar> Layer<T> for MaxPool2d {
    fn name(&self) -> &'static str {
        "maxpool2d"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (arg, y) = self.compute(x)?;
        self.cache = Some((arg, x.shape().to_vec()));
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.compute(x)?.1)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let (arg, shape) = self.cache.take().ok_or(Error::BackwardBeforeForward("maxpool2d"))?;
        if arg.len() != grad.len() {
            return Err(Error::shape("maxpool2d: gradient does not match the last forward output"));
        }
        let mut dx = Tensor::zeros(&shape);
        let d = dx.data_mut();
        for (&i, &g) in arg.iter().zip(grad.data()) {
            d[i] += g;
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------

/// `[B, C, H, W] -> [B, C]` spatial mean.
#[derive(Default)]
pub struct GlobalAvgPool {
    shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool { shape: None }
    }
}

impl<T: Scalar> Layer<T> for GlobalAvgPool {
    fn name(&self) -> &'static str {
        "global_avg_pool"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(Error::shape(format!("global pool expects [B, C, H, W], got {s:?}")));
        }
        let hw = s[2] * s[3];
        let n = T::from_usize(hw).expect("count");
        let y = x.data().chunks_exact(hw).map(|c| c.iter().copied().sum::<T>() / n).collect();
        Tensor::from_vec(&[s[0], s[1]], y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.shape.take().ok_or(Error::BackwardBeforeForward("global_avg_pool"))?;
        let hw = shape[2] * shape[3];
        if grad.len() * hw != shape.iter().product::<usize>() {
            return Err(Error::shape("global pool: gradient does not match the last forward output"));
        }
        let n = T::from_usize(hw).expect("count");
        let dx = grad.data().iter().flat_map(|&g| std::iter::repeat(g / n).take(hw)).collect();
        Tensor::from_vec(&shape, dx)
    }
}

// ---------------------------------------------------------------------------

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential<T> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Sequential { layers: Vec::new() }
    }

    pub fn push(&mut self, layer: impl Layer<T> + 'static) -> &mut Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn with(mut self, layer: impl Layer<T> + 'static) -> Self {
        self.push(layer);
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> &[Box<dyn Layer<T>>] {
        &self.layers
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn name(&self) -> &'static str {
        "sequential"
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode)?;
        }
        Ok(h)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn buffers(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }
}

/// `body(x) + shortcut(x)`, with an identity shortcut when none is given.
pub struct Residual<T> {
    body: Sequential<T>,
    shortcut: Option<Sequential<T>>,
}

impl<T: Scalar> Residual<T> {
    pub fn new(body: Sequential<T>, shortcut: Option<Sequential<T>>) -> Self {
        Residual { body, shortcut }
    }

    fn add(a: Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        if a.shape() != b.shape() {
            return Err(Error::shape(format!("skip-add of {:?} and {:?}", a.shape(), b.shape())));
        }
        let mut a = a;
        for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
            *x += y;
        }
        Ok(a)
    }
}

impl<T: Scalar> Layer<T> for Residual<T> {
    fn name(&self) -> &'static str {
        "residual"
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let main = self.body.forward(x, mode)?;
        match self.shortcut.as_mut() {
            Some(s) => Self::add(main, &s.forward(x, mode)?),
            None => Self::add(main, x),
        }
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let main = self.body.infer(x)?;
        match self.shortcut.as_ref() {
            Some(s) => Self::add(main, &s.infer(x)?),
            None => Self::add(main, x),
        }
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let dx = self.body.backward(grad)?;
        match self.shortcut.as_mut() {
            Some(s) => Self::add(dx, &s.backward(grad)?),
            None => Self::add(dx, grad),
        }
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.body.params();
        if let Some(s) = &self.shortcut {
            v.extend(s.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.body.params_mut();
        if let Some(s) = &mut self.shortcut {
            v.extend(s.params_mut());
        }
        v
    }

    fn buffers(&self) -> Vec<&Tensor<T>> {
        let mut v = self.body.buffers();
        if let Some(s) = &self.shortcut {
            v.extend(s.buffers());
        }
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = self.body.buffers_mut();
        if let Some(s) = &mut self.shortcut {
            v.extend(s.buffers_mut());
        }
        v
    }
}
