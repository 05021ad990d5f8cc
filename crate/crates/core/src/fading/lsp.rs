use crate::channel::{FactoryRealization, LinkState, Position};
use crate::error::Result;

use super::FadingConfig;

/// Large-scale parameters of one BS-UE link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkLsp {
    pub delay_spread_s: f64,
    /// Only defined for LoS links.
    pub ricean_k_db: Option<f64>,
    pub shadow_fading_db: f64,
}

impl LinkLsp {
    /// LSP from standard-normal draws `g_ds`, `g_k`.
    pub fn from_normals(cfg: &FadingConfig, state: LinkState, g_ds: f64, g_k: f64, shadow_fading_db: f64) -> Self {
        let p = cfg.params(state);
        LinkLsp {
            delay_spread_s: 10f64.powf(p.lg_ds_mu + p.lg_ds_sigma * g_ds),
            ricean_k_db: match state {
                LinkState::Los => Some(cfg.ricean_k_mu_db + cfg.ricean_k_sigma_db * g_k),
                LinkState::Nlos => None,
            },
            shadow_fading_db,
        }
    }
}

pub fn sample_lsp(factory: &FactoryRealization, bs: usize, pos: Position, state: LinkState) -> Result<LinkLsp> {
    let (g_ds, g_k) = factory.lsp_normals(bs, pos, state)?;
    let sf = factory.shadow_fading_db(bs, pos, state)?;
    Ok(LinkLsp::from_normals(factory.fading(), state, g_ds, g_k, sf))
}
