//! Small-scale channel: large-scale parameters per link, cluster delays and
//! powers, and the discrete complex impulse response.
//!
//! Every random variable is read from a spatially consistent field of the
//! factory, so a sample is a pure function of `(factory, position)`.

mod cir;
mod clusters;
mod lsp;
mod sample;

pub use cir::{synthesize_cir, CirTaps};
pub use clusters::{generate_clusters, ClusterDraws, ClusterSet};
pub use lsp::{sample_lsp, LinkLsp};
pub use sample::{build_sample, ChannelSample, Fingerprint, SignalType};

use crate::channel::{LinkState, TopologyConfig};
use crate::error::{Error, Result};

/// Delay-domain statistics for one propagation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Mean of log10(DS / 1 s).
    pub lg_ds_mu: f64,
    pub lg_ds_sigma: f64,
    /// Delay distribution proportionality factor.
    pub delay_scaling: f64,
    /// Per-cluster shadowing standard deviation (dB).
    pub cluster_shadowing_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PulseShape {
    /// Each cluster lands on its nearest tap.
    #[default]
    Nearest,
    /// Band-limited sinc interpolation across all taps.
    Sinc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingConfig {
    pub los: ClusterParams,
    pub nlos: ClusterParams,
    pub ricean_k_mu_db: f64,
    pub ricean_k_sigma_db: f64,
    pub n_clusters: usize,
    pub pulse: PulseShape,
    /// Additive white noise at this per-link SNR when set.
    pub snr_db: Option<f64>,
}

impl FadingConfig {
    /// InF statistics; the delay-spread means depend on the hall's
    /// volume-to-surface ratio.
    pub fn for_hall(topo: &TopologyConfig) -> Self {
        let vs = topo.volume_to_surface();
        FadingConfig {
            los: ClusterParams {
                lg_ds_mu: (26.0 * vs + 14.0).log10() - 9.35,
                lg_ds_sigma: 0.15,
                delay_scaling: 2.7,
                cluster_shadowing_db: 4.0,
            },
            nlos: ClusterParams {
                lg_ds_mu: (30.0 * vs + 32.0).log10() - 9.44,
                lg_ds_sigma: 0.19,
                delay_scaling: 3.0,
                cluster_shadowing_db: 3.0,
            },
            ricean_k_mu_db: 7.0,
            ricean_k_sigma_db: 8.0,
            n_clusters: 25,
            pulse: PulseShape::Nearest,
            snr_db: None,
        }
    }

    pub fn params(&self, state: LinkState) -> &ClusterParams {
        match state {
            LinkState::Los => &self.los,
            LinkState::Nlos => &self.nlos,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::config("n_clusters must be at least 1"));
        }
        for p in [&self.los, &self.nlos] {
            if !(p.delay_scaling > 1.0) {
                return Err(Error::config("delay scaling factor must exceed 1"));
            }
            if !(p.lg_ds_sigma >= 0.0) || !(p.cluster_shadowing_db >= 0.0) {
                return Err(Error::config("spreads must be non-negative"));
            }
        }
        Ok(())
    }
}
