use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{normal_cdf, LinkState};
use crate::error::{Error, Result};

use super::{FadingConfig, LinkLsp};

/// Per-cluster random variables consumed by [`generate_clusters`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDraws {
    /// Uniform in (0, 1); sets the cluster delay.
    pub delay_uniform: Vec<f64>,
    /// Standard normal; per-cluster power shadowing.
    pub shadow_normal: Vec<f64>,
    /// Uniform in (0, 1); intrinsic cluster phase as a fraction of a turn.
    pub phase_uniform: Vec<f64>,
}

impl ClusterDraws {
    /// Maps spatially correlated normals onto the required marginals.
    pub fn from_normals(delay: &[f64], shadow: &[f64], phase: &[f64]) -> Self {
        ClusterDraws {
            delay_uniform: delay.iter().map(|&g| normal_cdf(g)).collect(),
            shadow_normal: shadow.to_vec(),
            phase_uniform: phase.iter().map(|&g| normal_cdf(g)).collect(),
        }
    }

    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        ClusterDraws {
            delay_uniform: (0..n).map(|_| rng.gen::<f64>()).collect(),
            shadow_normal: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
            phase_uniform: (0..n).map(|_| rng.gen::<f64>()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.delay_uniform.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delay_uniform.is_empty()
    }
}

/// Cluster delays (ascending, first at zero), normalized powers and
/// intrinsic phases.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub delays_s: Vec<f64>,
    pub powers: Vec<f64>,
    pub phases: Vec<f64>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.delays_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays_s.is_empty()
    }

    /// Drops clusters delayed beyond `max_delay_s` and renormalizes.
    pub fn truncate_delay(&mut self, max_delay_s: f64) {
        let n = self.delays_s.partition_point(|&t| t <= max_delay_s).max(1);
        self.delays_s.truncate(n);
        self.powers.truncate(n);
        self.phases.truncate(n);
        let total: f64 = self.powers.iter().sum();
        self.powers.iter_mut().for_each(|p| *p /= total);
    }

    /// Power-weighted RMS delay spread.
    pub fn rms_delay_spread(&self) -> f64 {
        let mean: f64 = self.delays_s.iter().zip(&self.powers).map(|(t, p)| t * p).sum();
        let second: f64 = self.delays_s.iter().zip(&self.powers).map(|(t, p)| t * t * p).sum();
        (second - mean * mean).max(0.0).sqrt()
    }
}

/// Clusters more than this far below the strongest one are dropped.
pub const WEAK_CLUSTER_THRESHOLD_DB: f64 = 25.0;

fn prune_weak(delays: &mut Vec<f64>, powers: &mut Vec<f64>, phases: &mut Vec<f64>) {
    let max = powers.iter().cloned().fold(0.0, f64::max);
    let floor = max * 10f64.powf(-WEAK_CLUSTER_THRESHOLD_DB / 10.0);
    let keep: Vec<bool> = powers.iter().map(|&p| p >= floor).collect();
    let mut it = keep.iter();
    delays.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    phases.retain(|_| *it.next().unwrap());
    powers.retain(|&p| p >= floor);
    let total: f64 = powers.iter().sum();
    powers.iter_mut().for_each(|pw| *pw /= total);
}

/// Exponential delays scaled by `r_tau * DS`, exponentially decaying powers
/// with lognormal per-cluster shadowing, clusters 25 dB below the strongest
/// removed, and for LoS links a direct path
/// carrying `K / (K + 1)` of the power prepended at zero delay.
pub fn generate_clusters(
    lsp: &LinkLsp,
    state: LinkState,
    cfg: &FadingConfig,
    draws: &ClusterDraws,
) -> Result<ClusterSet> {
    let n = draws.len();
    if n == 0 || draws.shadow_normal.len() != n || draws.phase_uniform.len() != n {
        return Err(Error::arg("cluster draws must be non-empty and of equal length"));
    }
    if !(lsp.delay_spread_s > 0.0) {
        return Err(Error::arg("delay spread must be positive"));
    }
    let p = cfg.params(state);
    let ds = lsp.delay_spread_s;
    let r = p.delay_scaling;

    let mut raw: Vec<(f64, usize)> = draws
        .delay_uniform
        .iter()
        .enumerate()
        .map(|(i, &u)| (-r * ds * u.clamp(1e-12, 1.0 - 1e-12).ln(), i))
        .collect();
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let t0 = raw[0].0;

    let mut delays = Vec::with_capacity(n + 1);
    let mut powers = Vec::with_capacity(n + 1);
    let mut phases = Vec::with_capacity(n + 1);
    for &(t, i) in &raw {
        let tau = t - t0;
        let shadow = 10f64.powf(-p.cluster_shadowing_db * draws.shadow_normal[i] / 10.0);
        delays.push(tau);
        powers.push((-tau * (r - 1.0) / (r * ds)).exp() * shadow);
        phases.push(2.0 * PI * draws.phase_uniform[i]);
    }
    let total: f64 = powers.iter().sum();
    powers.iter_mut().for_each(|pw| *pw /= total);
    prune_weak(&mut delays, &mut powers, &mut phases);

    if let (LinkState::Los, Some(k_db)) = (state, lsp.ricean_k_db) {
        let k = 10f64.powf(k_db / 10.0);
        let scatter = 1.0 / (k + 1.0);
        powers.iter_mut().for_each(|pw| *pw *= scatter);
        delays.insert(0, 0.0);
        powers.insert(0, 1.0 / (1.0 + 1.0 / k));
        phases.insert(0, 0.0);
    }
    Ok(ClusterSet { delays_s: delays, powers, phases })
}
