//! InF path loss and LoS probability (dense clutter, high BS).

use crate::error::{Error, Result};

use super::{ClutterConfig, LinkState, TopologyConfig};

/// Probability that a link of horizontal length `d_2d` is in line of sight.
///
/// `exp(-d_2d / k)` with `k = -d_c / ln(1 - r) * (h_bs - h_ut) / (h_c - h_ut)`.
pub fn los_probability(d_2d: f64, clutter: &ClutterConfig, topo: &TopologyConfig) -> Result<f64> {
    if !(d_2d >= 0.0) {
        return Err(Error::arg(format!("d_2d must be non-negative, got {d_2d}")));
    }
    let k = clutter_subscene_length(clutter, topo)?;
    Ok((-d_2d / k).exp())
}

/// Decay length of the LoS probability.
pub fn clutter_subscene_length(clutter: &ClutterConfig, topo: &TopologyConfig) -> Result<f64> {
    let gap = clutter.height - topo.ue_height;
    if gap <= 0.0 {
        return Err(Error::config(format!(
            "clutter height {} m must exceed UE height {} m",
            clutter.height, topo.ue_height
        )));
    }
    Ok(-clutter.size / (1.0 - clutter.density).ln() * (topo.bs_height - topo.ue_height) / gap)
}

pub fn path_loss_los_db(d_3d: f64, fc_ghz: f64) -> f64 {
    31.84 + 21.5 * d_3d.log10() + 19.0 * fc_ghz.log10()
}

/// NLoS branch before the `max` with the LoS value.
pub fn path_loss_dh_db(d_3d: f64, fc_ghz: f64) -> f64 {
    33.63 + 21.9 * d_3d.log10() + 20.0 * fc_ghz.log10()
}

/// Path loss in dB. Distances below 1 m are rejected; callers that may sit
/// under a BS clamp first (see [`clamp_distance`]).
pub fn path_loss_db(d_3d: f64, fc_ghz: f64, state: LinkState) -> Result<f64> {
    if !(d_3d >= 1.0) {
        return Err(Error::DistanceTooSmall(d_3d));
    }
    if !(fc_ghz > 0.0) {
        return Err(Error::arg(format!("carrier frequency must be positive, got {fc_ghz}")));
    }
    let los = path_loss_los_db(d_3d, fc_ghz);
    Ok(match state {
        LinkState::Los => los,
        LinkState::Nlos => los.max(path_loss_dh_db(d_3d, fc_ghz)),
    })
}

pub fn clamp_distance(d_3d: f64) -> f64 {
    if d_3d < 1.0 {
        log::warn!("3-D distance {d_3d:.3} m clamped to 1 m");
        1.0
    } else {
        d_3d
    }
}
