use std::sync::{Arc, OnceLock};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::fading::FadingConfig;
use crate::rng;

use super::field::{FieldSynthesizer, SpatialField};
use super::pathloss::{clamp_distance, clutter_subscene_length, path_loss_db};
use super::{
    build_topology, normal_cdf, ClutterConfig, LargeScaleConfig, LinkState, Point3, Position, RadioConfig,
    TopologyConfig,
};

// Stream tags under `[bs, tag]`.
const TAG_LOS: u64 = 0;
const TAG_SF: u64 = 1;
const TAG_DS: u64 = 2;
const TAG_K: u64 = 3;
const TAG_SSP: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub d_2d: f64,
    pub d_3d: f64,
}

#[derive(Debug)]
struct BsLargeScale {
    los: SpatialField,
    sf_los: SpatialField,
    sf_nlos: SpatialField,
    ds_los: SpatialField,
    ds_nlos: SpatialField,
    ricean_k: SpatialField,
}

/// Per-cluster fields, three per cluster: delay, power shadowing, phase.
#[derive(Debug)]
struct BsSmallScale {
    fields: Vec<SpatialField>,
}

/// Standard-normal draws of the per-cluster random variables at one position.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SspNormals {
    pub delay: Vec<f64>,
    pub shadow: Vec<f64>,
    pub phase: Vec<f64>,
}

/// One seeded virtual factory.
///
/// All random fields are fixed by `(seed, config)`. Per-BS fields are
/// synthesized on first use, each from its own seed stream, so the values
/// seen by any query do not depend on which queries ran before it or on
/// which thread ran them. PG-only workloads never pay for the per-cluster
/// fields.
#[derive(Debug)]
pub struct FactoryRealization {
    config: SimConfig,
    bs: Vec<Point3>,
    los_decay: f64,
    los_synth: Arc<FieldSynthesizer>,
    sf_synth: Arc<FieldSynthesizer>,
    lsp_synth: Arc<FieldSynthesizer>,
    ssp_synth: OnceLock<FieldSynthesizer>,
    large: Vec<OnceLock<BsLargeScale>>,
    small: Vec<OnceLock<BsSmallScale>>,
}

impl FactoryRealization {
    pub fn new(config: &SimConfig) -> Result<Self> {
        let topo = &config.topology;
        config.clutter.validate()?;
        config.radio.validate()?;
        config.large_scale.validate()?;
        config.fading.validate()?;
        let bs = build_topology(topo)?;
        let los_decay = clutter_subscene_length(&config.clutter, topo)?;

        let ls = &config.large_scale;
        let mut synths: Vec<(f64, Arc<FieldSynthesizer>)> = Vec::new();
        let mut synth_for = |d: f64| -> Result<Arc<FieldSynthesizer>> {
            if let Some((_, s)) = synths.iter().find(|(dd, _)| *dd == d) {
                return Ok(Arc::clone(s));
            }
            let s = Arc::new(FieldSynthesizer::for_footprint(topo, ls.field_spacing, d)?);
            synths.push((d, Arc::clone(&s)));
            Ok(s)
        };
        let los_synth = synth_for(ls.los_corr_distance)?;
        let sf_synth = synth_for(ls.sf_corr_distance)?;
        let lsp_synth = synth_for(ls.lsp_corr_distance)?;

        let n_bs = bs.len();
        Ok(FactoryRealization {
            config: config.clone(),
            bs,
            los_decay,
            los_synth,
            sf_synth,
            lsp_synth,
            ssp_synth: OnceLock::new(),
            large: (0..n_bs).map(|_| OnceLock::new()).collect(),
            small: (0..n_bs).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn topology(&self) -> &TopologyConfig {
        &self.config.topology
    }

    pub fn clutter(&self) -> &ClutterConfig {
        &self.config.clutter
    }

    pub fn radio(&self) -> &RadioConfig {
        &self.config.radio
    }

    pub fn large_scale(&self) -> &LargeScaleConfig {
        &self.config.large_scale
    }

    pub fn fading(&self) -> &FadingConfig {
        &self.config.fading
    }

    pub fn n_bs(&self) -> usize {
        self.bs.len()
    }

    pub fn bs_positions(&self) -> &[Point3] {
        &self.bs
    }

    /// Synthesizes every field now instead of on first use.
    pub fn materialize(&self, with_clusters: bool) -> Result<()> {
        for b in 0..self.n_bs() {
            self.large_fields(b)?;
            if with_clusters {
                self.small_fields(b)?;
            }
        }
        Ok(())
    }

    fn check_bs(&self, bs: usize) -> Result<()> {
        if bs >= self.bs.len() {
            return Err(Error::OutOfRange { index: bs, len: self.bs.len() });
        }
        Ok(())
    }

    fn check_position(&self, pos: Position) -> Result<()> {
        const TOL: f64 = 1e-6;
        let t = self.topology();
        if !(pos.x >= -TOL && pos.x <= t.length + TOL && pos.y >= -TOL && pos.y <= t.width + TOL) {
            return Err(Error::arg(format!("position ({}, {}) lies outside the hall", pos.x, pos.y)));
        }
        Ok(())
    }

    fn large_fields(&self, bs: usize) -> Result<&BsLargeScale> {
        self.check_bs(bs)?;
        Ok(self.large[bs].get_or_init(|| {
            let seed = self.seed();
            let b = bs as u64;
            let los = self.los_synth.draw(&mut rng::stream(seed, &[b, TAG_LOS]));
            let (sf_los, sf_nlos) = self.sf_synth.draw_pair(&mut rng::stream(seed, &[b, TAG_SF]));
            let (ds_los, ds_nlos) = self.lsp_synth.draw_pair(&mut rng::stream(seed, &[b, TAG_DS]));
            let ricean_k = self.lsp_synth.draw(&mut rng::stream(seed, &[b, TAG_K]));
            BsLargeScale { los, sf_los, sf_nlos, ds_los, ds_nlos, ricean_k }
        }))
    }

    fn small_fields(&self, bs: usize) -> Result<&BsSmallScale> {
        self.check_bs(bs)?;
        let synth = match self.ssp_synth.get() {
            Some(s) => s,
            None => {
                let ls = self.large_scale();
                let s = FieldSynthesizer::for_footprint(self.topology(), ls.ssp_field_spacing, ls.ssp_corr_distance)?;
                // Another thread may have won the race; both plans are identical.
                let _ = self.ssp_synth.set(s);
                self.ssp_synth.get().expect("initialized above")
            }
        };
        Ok(self.small[bs].get_or_init(|| {
            let n_fields = 3 * self.fading().n_clusters;
            let mut fields = Vec::with_capacity(n_fields + 1);
            for pair in 0..n_fields.div_ceil(2) {
                let (a, b) = synth.draw_pair(&mut rng::stream(self.seed(), &[bs as u64, TAG_SSP + pair as u64]));
                fields.push(a);
                fields.push(b);
            }
            fields.truncate(n_fields);
            BsSmallScale { fields }
        }))
    }

    pub fn geometry(&self, bs: usize, pos: Position) -> Result<LinkGeometry> {
        self.check_bs(bs)?;
        self.check_position(pos)?;
        let b = self.bs[bs];
        let d_2d = (pos.x - b.x).hypot(pos.y - b.y);
        let dz = b.z - self.topology().ue_height;
        Ok(LinkGeometry { d_2d, d_3d: d_2d.hypot(dz) })
    }

    /// LoS probability of the link at its horizontal distance.
    pub fn los_probability(&self, bs: usize, pos: Position) -> Result<f64> {
        let g = self.geometry(bs, pos)?;
        Ok((-g.d_2d / self.los_decay).exp())
    }

    /// LoS iff `Phi(g) < P_LoS(d_2d)` where `g` is the BS's LoS field at `pos`.
    pub fn los_state(&self, bs: usize, pos: Position) -> Result<LinkState> {
        let p = self.los_probability(bs, pos)?;
        let g = self.large_fields(bs)?.los.value_at(pos.x, pos.y);
        Ok(los_decision(g, p))
    }

    /// Shadow fading in dB for the given state.
    pub fn shadow_fading_db(&self, bs: usize, pos: Position, state: LinkState) -> Result<f64> {
        self.check_position(pos)?;
        let f = self.large_fields(bs)?;
        let ls = self.large_scale();
        Ok(match state {
            LinkState::Los => ls.sf_sigma_los_db * f.sf_los.value_at(pos.x, pos.y),
            LinkState::Nlos => ls.sf_sigma_nlos_db * f.sf_nlos.value_at(pos.x, pos.y),
        })
    }

    pub fn path_loss_db(&self, bs: usize, pos: Position, state: LinkState) -> Result<f64> {
        let g = self.geometry(bs, pos)?;
        path_loss_db(clamp_distance(g.d_3d), self.radio().carrier_ghz, state)
    }

    /// Path gain: shadow fading minus path loss, in dB.
    pub fn path_gain_db(&self, bs: usize, pos: Position) -> Result<f64> {
        let state = self.los_state(bs, pos)?;
        Ok(self.shadow_fading_db(bs, pos, state)? - self.path_loss_db(bs, pos, state)?)
    }

    /// Standard-normal LSP draws `(delay spread, Ricean K)` for the link.
    pub(crate) fn lsp_normals(&self, bs: usize, pos: Position, state: LinkState) -> Result<(f64, f64)> {
        self.check_position(pos)?;
        let f = self.large_fields(bs)?;
        let ds = match state {
            LinkState::Los => &f.ds_los,
            LinkState::Nlos => &f.ds_nlos,
        };
        Ok((ds.value_at(pos.x, pos.y), f.ricean_k.value_at(pos.x, pos.y)))
    }

    /// Per-cluster normals for the first `n` clusters.
    pub(crate) fn ssp_normals(&self, bs: usize, pos: Position, n: usize) -> Result<SspNormals> {
        self.check_position(pos)?;
        let f = self.small_fields(bs)?;
        if 3 * n > f.fields.len() {
            return Err(Error::arg(format!("{n} clusters requested, factory holds {}", f.fields.len() / 3)));
        }
        let at = |i: usize| f.fields[i].value_at(pos.x, pos.y);
        Ok(SspNormals {
            delay: (0..n).map(|c| at(3 * c)).collect(),
            shadow: (0..n).map(|c| at(3 * c + 1)).collect(),
            phase: (0..n).map(|c| at(3 * c + 2)).collect(),
        })
    }

    #[cfg(test)]
    pub(crate) fn los_field_value(&self, bs: usize, pos: Position) -> f64 {
        self.large_fields(bs).unwrap().los.value_at(pos.x, pos.y)
    }
}

pub(crate) fn los_decision(field_value: f64, p_los: f64) -> LinkState {
    if p_los >= 1.0 || normal_cdf(field_value) < p_los {
        LinkState::Los
    } else {
        LinkState::Nlos
    }
}
