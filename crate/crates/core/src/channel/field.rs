//! Spatially correlated Gaussian random fields.
//!
//! Fields are synthesized on a regular grid by circulant embedding: white
//! Gaussian noise on a zero-padded torus is filtered in the 2-D Fourier
//! domain by the square root of the spectrum of `exp(-r / d_cor)`. The
//! padding keeps wrap-around lags beyond six correlation distances, where
//! the target covariance is negligible. Queries between grid nodes use
//! bilinear interpolation.
//!
//! One complex draw yields two independent real fields (real and imaginary
//! parts), which halves the FFT work when a factory needs hundreds of them.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng;

use super::TopologyConfig;

/// Zero-padding around the footprint, in correlation distances.
const PAD_CORRELATION_LENGTHS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    origin: [f64; 2],
    spacing: f64,
    nx: usize,
    ny: usize,
    corr_distance: f64,
    /// Row-major, `values[iy * nx + ix]`.
    values: Vec<f32>,
}

impl SpatialField {
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn corr_distance(&self) -> f64 {
        self.corr_distance
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn grid_value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix] as f64
    }

    /// Bilinear interpolation; positions outside the grid are clamped to its edge.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let (ix, tx) = cell(x - self.origin[0], self.spacing, self.nx);
        let (iy, ty) = cell(y - self.origin[1], self.spacing, self.ny);
        let v00 = self.grid_value(ix, iy);
        let v10 = self.grid_value(ix + 1, iy);
        let v01 = self.grid_value(ix, iy + 1);
        let v11 = self.grid_value(ix + 1, iy + 1);
        let bottom = v00 + (v10 - v00) * tx;
        let top = v01 + (v11 - v01) * tx;
        bottom + (top - bottom) * ty
    }
}

fn cell(offset: f64, spacing: f64, n: usize) -> (usize, f64) {
    let f = (offset / spacing).clamp(0.0, (n - 1) as f64);
    let i = (f.floor() as usize).min(n - 2);
    (i, f - i as f64)
}

/// Reusable synthesis plan for one grid geometry and correlation distance.
pub struct FieldSynthesizer {
    nx: usize,
    ny: usize,
    px: usize,
    py: usize,
    spacing: f64,
    corr_distance: f64,
    /// Filter gain per frequency bin, stored in transposed (column-major) layout.
    gain: Vec<f64>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FieldSynthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSynthesizer")
            .field("grid", &(self.nx, self.ny))
            .field("torus", &(self.px, self.py))
            .field("spacing", &self.spacing)
            .field("corr_distance", &self.corr_distance)
            .finish()
    }
}

impl FieldSynthesizer {
    /// Plan for a field covering `[0, extent_x] x [0, extent_y]`.
    pub fn new(extent_x: f64, extent_y: f64, spacing: f64, corr_distance: f64) -> Result<Self> {
        if !(corr_distance > 0.0) || !(spacing > 0.0) {
            return Err(Error::config("field spacing and correlation distance must be positive"));
        }
        if spacing > corr_distance / 2.0 {
            return Err(Error::config(format!(
                "field spacing {spacing} m exceeds half the correlation distance {corr_distance} m"
            )));
        }
        let nx = (extent_x / spacing - 1e-9).ceil() as usize + 1;
        let ny = (extent_y / spacing - 1e-9).ceil() as usize + 1;
        let pad = (PAD_CORRELATION_LENGTHS * corr_distance / spacing).ceil() as usize;
        let px = (nx + pad).next_power_of_two();
        let py = (ny + pad).next_power_of_two();

        let mut planner = FftPlanner::<f64>::new();
        let fft_x = planner.plan_fft_forward(px);
        let ifft_x = planner.plan_fft_inverse(px);
        let fft_y = planner.plan_fft_forward(py);
        let ifft_y = planner.plan_fft_inverse(py);

        let mut synth = FieldSynthesizer {
            nx,
            ny,
            px,
            py,
            spacing,
            corr_distance,
            gain: Vec::new(),
            fft_x,
            ifft_x,
            fft_y,
            ifft_y,
        };
        synth.gain = synth.filter_gain();
        Ok(synth)
    }

    pub fn for_footprint(topo: &TopologyConfig, spacing: f64, corr_distance: f64) -> Result<Self> {
        Self::new(topo.length, topo.width, spacing, corr_distance)
    }

    fn filter_gain(&self) -> Vec<f64> {
        let (px, py) = (self.px, self.py);
        let n = (px * py) as f64;
        let mut cov: Vec<Complex64> = Vec::with_capacity(px * py);
        for iy in 0..py {
            let dy = iy.min(py - iy) as f64 * self.spacing;
            for ix in 0..px {
                let dx = ix.min(px - ix) as f64 * self.spacing;
                let r = (dx * dx + dy * dy).sqrt();
                cov.push(Complex64::new((-r / self.corr_distance).exp(), 0.0));
            }
        }
        let spectrum = self.forward(cov);
        // Clamp the (tiny) negative eigenvalues, then restore unit variance.
        let eig: Vec<f64> = spectrum.iter().map(|c| c.re.max(0.0)).collect();
        let c0 = eig.iter().sum::<f64>() / n;
        eig.iter().map(|&l| (l / c0).sqrt() / n).collect()
    }

    /// Row FFTs then column FFTs; the result is left transposed (`[ix][iy]`).
    fn forward(&self, mut data: Vec<Complex64>) -> Vec<Complex64> {
        self.fft_x.process(&mut data);
        let mut t = transpose(&data, self.px, self.py);
        self.fft_y.process(&mut t);
        t
    }

    /// Inverse of [`Self::forward`] without the 1/N factor.
    fn inverse(&self, mut t: Vec<Complex64>) -> Vec<Complex64> {
        self.ifft_y.process(&mut t);
        let mut data = transpose(&t, self.py, self.px);
        self.ifft_x.process(&mut data);
        data
    }

    /// Draws two independent fields from one complex noise realization.
    pub fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (SpatialField, SpatialField) {
        let noise: Vec<Complex64> = (0..self.px * self.py)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let mut spec = self.forward(noise);
        for (s, g) in spec.iter_mut().zip(&self.gain) {
            *s *= *g;
        }
        let out = self.inverse(spec);
        let mut re = Vec::with_capacity(self.nx * self.ny);
        let mut im = Vec::with_capacity(self.nx * self.ny);
        for iy in 0..self.ny {
            for c in &out[iy * self.px..iy * self.px + self.nx] {
                re.push(c.re as f32);
                im.push(c.im as f32);
            }
        }
        (self.wrap(re), self.wrap(im))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SpatialField {
        self.draw_pair(rng).0
    }

    fn wrap(&self, values: Vec<f32>) -> SpatialField {
        SpatialField {
            origin: [0.0, 0.0],
            spacing: self.spacing,
            nx: self.nx,
            ny: self.ny,
            corr_distance: self.corr_distance,
            values,
        }
    }
}

fn transpose(src: &[Complex64], width: usize, height: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::default(); src.len()];
    for y in 0..height {
        for x in 0..width {
            dst[x * height + y] = src[y * width + x];
        }
    }
    dst
}

/// Samples one standard-normal field over the hall footprint.
pub fn sample_spatial_field(
    seed: u64,
    corr_distance: f64,
    footprint: &TopologyConfig,
    grid_spacing: f64,
) -> Result<SpatialField> {
    let synth = FieldSynthesizer::for_footprint(footprint, grid_spacing, corr_distance)?;
    Ok(synth.draw(&mut rng::stream(seed, &[])))
}
