//! Hall topology and the large-scale channel: LoS state, path loss,
//! shadow fading and path gain.

mod factory;
mod field;
mod pathloss;
mod topology;

pub use factory::{FactoryRealization, LinkGeometry};
pub use field::{sample_spatial_field, FieldSynthesizer, SpatialField};
pub use pathloss::{
    clamp_distance, clutter_subscene_length, los_probability, path_loss_db, path_loss_dh_db, path_loss_los_db,
};
pub use topology::{build_topology, Point3, TopologyConfig};

use crate::error::{Error, Result};

/// Clutter meta-parameters `(r, h, d)`: density, height (m), size (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutterConfig {
    pub density: f64,
    pub height: f64,
    pub size: f64,
}

impl ClutterConfig {
    /// 40 % density, 2 m high, 2 m wide.
    pub const SPARSE: ClutterConfig = ClutterConfig { density: 0.40, height: 2.0, size: 2.0 };
    /// 60 % density, 6 m high, 2 m wide.
    pub const DENSE: ClutterConfig = ClutterConfig { density: 0.60, height: 6.0, size: 2.0 };

    pub fn new(density: f64, height: f64, size: f64) -> Result<Self> {
        let c = ClutterConfig { density, height, size };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0 && self.density < 1.0) {
            return Err(Error::config(format!("clutter density must be in (0,1), got {}", self.density)));
        }
        if !(self.height > 0.0) || !(self.size > 0.0) {
            return Err(Error::config("clutter height and size must be positive"));
        }
        Ok(())
    }

    /// Short label such as `r60` used in file names.
    pub fn label(&self) -> String {
        format!("r{:.0}", self.density * 100.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub n_taps: usize,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig { carrier_ghz: 3.5, bandwidth_hz: 100e6, n_taps: 256 }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_ghz > 0.0) || !(self.bandwidth_hz > 0.0) {
            return Err(Error::config("carrier frequency and bandwidth must be positive"));
        }
        if self.n_taps == 0 || self.n_taps > u16::MAX as usize {
            return Err(Error::config("n_taps must be in 1..=65535"));
        }
        Ok(())
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_ghz * 1e9)
    }
}

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Shadow-fading spread and the correlation distances of every spatial field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeScaleConfig {
    pub sf_sigma_los_db: f64,
    pub sf_sigma_nlos_db: f64,
    pub los_corr_distance: f64,
    pub sf_corr_distance: f64,
    /// Delay spread and Ricean K fields.
    pub lsp_corr_distance: f64,
    /// Per-cluster delay, power and phase fields.
    pub ssp_corr_distance: f64,
    /// Grid pitch of the LoS, shadowing and LSP fields.
    pub field_spacing: f64,
    /// Grid pitch of the per-cluster fields.
    pub ssp_field_spacing: f64,
}

impl Default for LargeScaleConfig {
    fn default() -> Self {
        LargeScaleConfig {
            sf_sigma_los_db: 4.3,
            sf_sigma_nlos_db: 4.0,
            los_corr_distance: 10.0,
            sf_corr_distance: 10.0,
            lsp_corr_distance: 10.0,
            ssp_corr_distance: 10.0,
            field_spacing: 0.5,
            ssp_field_spacing: 1.0,
        }
    }
}

impl LargeScaleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sf_sigma_los_db >= 0.0) || !(self.sf_sigma_nlos_db >= 0.0) {
            return Err(Error::config("shadow-fading sigma must be non-negative"));
        }
        for (name, d, s) in [
            ("d_cor_los", self.los_corr_distance, self.field_spacing),
            ("d_cor_sf", self.sf_corr_distance, self.field_spacing),
            ("d_cor_lsp", self.lsp_corr_distance, self.field_spacing),
            ("d_cor_ssp", self.ssp_corr_distance, self.ssp_field_spacing),
        ] {
            if !(d > 0.0) || !(s > 0.0) || s > d / 2.0 {
                return Err(Error::config(format!("{name}={d} needs a positive grid spacing <= d/2 (got {s})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkState {
    Los,
    Nlos,
}

/// Horizontal UE position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}
