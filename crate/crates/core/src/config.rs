//! `key=value` configuration files.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. Keys are
//! consumed by the typed loaders (`SimConfig::from_kv`, `ExperimentSpec::parse`)
//! and anything left over is reported as an error.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::channel::{ClutterConfig, LargeScaleConfig, RadioConfig, TopologyConfig};
use crate::error::{Error, Result};
use crate::fading::FadingConfig;

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value, got {raw:?}", lineno + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_ascii_lowercase(), value.to_string());
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => parse_value(key, &v).map(Some),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_value(key, s))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Fails if any key has not been consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.entries.keys().cloned().collect();
            Err(Error::config(format!("unknown keys: {}", keys.join(", "))))
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::config(format!("cannot parse value {v:?} for key {key:?}")))
}

/// Everything needed to build one factory realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub topology: TopologyConfig,
    pub clutter: ClutterConfig,
    pub radio: RadioConfig,
    pub large_scale: LargeScaleConfig,
    pub fading: FadingConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        let topology = TopologyConfig::default();
        SimConfig {
            seed: 1,
            fading: FadingConfig::for_hall(&topology),
            topology,
            clutter: ClutterConfig::DENSE,
            radio: RadioConfig::default(),
            large_scale: LargeScaleConfig::default(),
        }
    }
}

impl SimConfig {
    /// Consumes the channel keys of `kv`, leaving the rest for the caller.
    pub fn from_kv(kv: &mut KeyValues) -> Result<Self> {
        let mut topology = TopologyConfig::default();
        topology.length = kv.take_or("length", topology.length)?;
        topology.width = kv.take_or("width", topology.width)?;
        topology.height = kv.take_or("height", topology.height)?;
        topology.bs_spacing = kv.take_or("bs_spacing", topology.bs_spacing)?;
        topology.bs_height = kv.take_or("bs_height", topology.bs_height)?;
        topology.ue_height = kv.take_or("ue_height", topology.ue_height)?;
        topology.n_bs = kv.take_or("n_bs", topology.n_bs)?;
        topology.validate()?;

        let clutter = match kv.take_list::<f64>("clutter")? {
            None => ClutterConfig::DENSE,
            Some(v) if v.len() == 3 => ClutterConfig::new(v[0], v[1], v[2])?,
            Some(v) => return Err(Error::config(format!("clutter needs r,h,d; got {} values", v.len()))),
        };

        let mut radio = RadioConfig::default();
        radio.carrier_ghz = kv.take_or("fc_ghz", radio.carrier_ghz)?;
        radio.bandwidth_hz = kv.take_or("bw_hz", radio.bandwidth_hz)?;
        radio.n_taps = kv.take_or("n_taps", radio.n_taps)?;
        radio.validate()?;

        let mut ls = LargeScaleConfig::default();
        ls.sf_sigma_los_db = kv.take_or("sf_sigma_los_db", ls.sf_sigma_los_db)?;
        ls.sf_sigma_nlos_db = kv.take_or("sf_sigma_nlos_db", ls.sf_sigma_nlos_db)?;
        ls.los_corr_distance = kv.take_or("d_cor_los", ls.los_corr_distance)?;
        ls.sf_corr_distance = kv.take_or("d_cor_sf", ls.sf_corr_distance)?;
        ls.lsp_corr_distance = kv.take_or("d_cor_lsp", ls.lsp_corr_distance)?;
        ls.ssp_corr_distance = kv.take_or("d_cor_ssp", ls.ssp_corr_distance)?;
        ls.field_spacing = kv.take_or("field_spacing", ls.field_spacing)?;
        ls.ssp_field_spacing = kv.take_or("ssp_field_spacing", ls.ssp_field_spacing)?;
        ls.validate()?;

        let mut fading = FadingConfig::for_hall(&topology);
        fading.n_clusters = kv.take_or("n_clusters", fading.n_clusters)?;
        fading.validate()?;

        let seed = kv.take_or("seed", 1u64)?;
        Ok(SimConfig { seed, topology, clutter, radio, large_scale: ls, fading })
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.clutter.validate()?;
        self.radio.validate()?;
        self.large_scale.validate()?;
        self.fading.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let cfg = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_clutter(mut self, clutter: ClutterConfig) -> Self {
        self.clutter = clutter;
        self
    }
}
