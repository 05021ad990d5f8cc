//! The two regressors: a residual MLP over PG vectors and a ResNet18-style
//! CNN over CIR images.

use rand::Rng;

use crate::error::{Error, Result};

use super::layers::{BatchNorm2d, Conv2d, Dense, GlobalAvgPool, MaxPool2d, Relu, Residual, Sequential};
use super::tensor::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PgNetConfig {
    pub input_dim: usize,
    pub width: usize,
    pub n_residual_layers: usize,
}

impl Default for PgNetConfig {
    fn default() -> Self {
        PgNetConfig { input_dim: 18, width: 120, n_residual_layers: 7 }
    }
}

impl PgNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 {
            return Err(Error::config("PG net needs input_dim > 0 and width > 0"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (i, w) = (self.input_dim, self.width);
        (i * w + w) + self.n_residual_layers * (w * w + w) + (w * 2 + 2)
    }
}

/// Input dense + ReLU, `n_residual_layers` units of `x + relu(dense(x))`,
/// output dense to `(x, y)`.
pub fn build_pg_net<T: Scalar, R: Rng + ?Sized>(cfg: &PgNetConfig, rng: &mut R) -> Result<Sequential<T>> {
    cfg.validate()?;
    let w = cfg.width;
    // Shrink the residual branches so the activation scale does not grow
    // geometrically with depth at initialization.
    let branch_gain = 1.0 / (cfg.n_residual_layers.max(1) as f64).sqrt();
    let mut net = Sequential::new().with(Dense::new(rng, cfg.input_dim, w, 1.0)).with(Relu::new());
    for _ in 0..cfg.n_residual_layers {
        let body = Sequential::new().with(Dense::new(rng, w, w, branch_gain)).with(Relu::new());
        net.push(Residual::new(body, None));
    }
    net.push(Dense::new(rng, w, 2, 0.1));
    debug_assert_eq!(net.n_params(), cfg.param_count());
    Ok(net)
}

/// ResNet18 layout with a 2-channel (re/im) stem over an `n_bs x n_taps`
/// image and a 2-output head.
#[derive(Debug, Clone, PartialEq)]
pub struct CirNetConfig {
    pub n_bs: usize,
    pub n_taps: usize,
    /// Channels of the first stage; later stages double it.
    pub base_width: usize,
    /// Basic blocks per stage.
    pub blocks: [usize; 4],
}

impl Default for CirNetConfig {
    fn default() -> Self {
        CirNetConfig { n_bs: 18, n_taps: 256, base_width: 64, blocks: [2, 2, 2, 2] }
    }
}

const STRIDES: [usize; 4] = [1, 2, 2, 2];

impl CirNetConfig {
    /// Full layout with every channel count multiplied by `scale`.
    pub fn scaled(n_bs: usize, n_taps: usize, scale: f64) -> Self {
        let base_width = ((64.0 * scale).round() as usize).max(1);
        CirNetConfig { n_bs, n_taps, base_width, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bs == 0 || self.base_width == 0 || self.blocks.iter().any(|&b| b == 0) {
            return Err(Error::config("CIR net needs n_bs, base_width and every stage depth > 0"));
        }
        // The stem, pool and three strided stages each need at least one
        // output column.
        if self.n_taps < 8 {
            return Err(Error::config(format!("CIR net needs n_taps >= 8, got {}", self.n_taps)));
        }
        Ok(())
    }

    pub fn stage_widths(&self) -> [usize; 4] {
        let b = self.base_width;
        [b, 2 * b, 4 * b, 8 * b]
    }

    pub fn param_count(&self) -> usize {
        let conv = |ci: usize, co: usize, k: usize| ci * co * k * k;
        let bn = |c: usize| 2 * c;
        let widths = self.stage_widths();
        let mut n = conv(2, widths[0], 7) + bn(widths[0]);
        let mut c_in = widths[0];
        for (s, &w) in widths.iter().enumerate() {
            for blk in 0..self.blocks[s] {
                let stride = if blk == 0 { STRIDES[s] } else { 1 };
                n += conv(c_in, w, 3) + bn(w) + conv(w, w, 3) + bn(w);
                if stride != 1 || c_in != w {
                    n += conv(c_in, w, 1) + bn(w);
                }
                c_in = w;
            }
        }
        n + c_in * 2 + 2
    }
}

fn basic_block<T: Scalar, R: Rng + ?Sized>(rng: &mut R, c_in: usize, c_out: usize, stride: usize) -> Residual<T> {
    let body = Sequential::new()
        .with(Conv2d::new(rng, c_in, c_out, 3, stride, 1, false, 1.0))
        .with(BatchNorm2d::new(c_out))
        .with(Relu::new())
        .with(Conv2d::new(rng, c_out, c_out, 3, 1, 1, false, 1.0))
        .with(BatchNorm2d::new(c_out).zero_gamma());
    let shortcut = (stride != 1 || c_in != c_out).then(|| {
        Sequential::new()
            .with(Conv2d::new(rng, c_in, c_out, 1, stride, 0, false, 1.0))
            .with(BatchNorm2d::new(c_out))
    });
    Residual::new(body, shortcut)
}

/// Expects input `[B, 2, n_bs, n_taps]`.
pub fn build_cir_net<T: Scalar, R: Rng + ?Sized>(cfg: &CirNetConfig, rng: &mut R) -> Result<Sequential<T>> {
    cfg.validate()?;
    let widths = cfg.stage_widths();
    let mut net = Sequential::new()
        .with(Conv2d::new(rng, 2, widths[0], 7, 2, 3, false, 1.0))
        .with(BatchNorm2d::new(widths[0]))
        .with(Relu::new())
        .with(MaxPool2d::new(3, 2, 1));
    let mut c_in = widths[0];
    for (s, &w) in widths.iter().enumerate() {
        for blk in 0..cfg.blocks[s] {
            let stride = if blk == 0 { STRIDES[s] } else { 1 };
            net.push(basic_block(rng, c_in, w, stride));
            net.push(Relu::new());
            c_in = w;
        }
    }
    net.push(GlobalAvgPool::new());
    net.push(Dense::new(rng, c_in, 2, 0.1));
    debug_assert_eq!(net.n_params(), cfg.param_count());
    Ok(net)
}
