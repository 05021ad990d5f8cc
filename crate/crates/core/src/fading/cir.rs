use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::RadioConfig;
use crate::error::{Error, Result};

use super::{ClusterSet, PulseShape};

/// Discrete complex impulse response of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct CirTaps {
    pub taps: Vec<Complex64>,
    pub sample_period: f64,
}

impl CirTaps {
    pub fn power(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    pub fn first_nonzero(&self) -> Option<usize> {
        self.taps.iter().position(|t| t.norm_sqr() > 0.0)
    }
}

/// Places each cluster at tap `round((prop_delay + tau_n) * bandwidth)` with
/// amplitude `sqrt(P_n * PG)` and phase `phi_n`.
/// Clusters sharing a tap add coherently; the taps are then rescaled so their
/// total power equals the linear path gain exactly.
pub fn synthesize_cir(
    clusters: &ClusterSet,
    pg_db: f64,
    prop_delay_s: f64,
    radio: &RadioConfig,
    pulse: PulseShape,
) -> Result<CirTaps> {
    if clusters.is_empty() || clusters.powers.len() != clusters.len() || clusters.phases.len() != clusters.len() {
        return Err(Error::arg("cluster set must be non-empty and consistent"));
    }
    if !(prop_delay_s >= 0.0) || !pg_db.is_finite() {
        return Err(Error::arg("propagation delay must be non-negative and path gain finite"));
    }
    let bw = radio.bandwidth_hz;
    let n_taps = radio.n_taps;
    let max_delay = clusters.delays_s.iter().cloned().fold(0.0, f64::max);
    let last = ((prop_delay_s + max_delay) * bw).round() as usize;
    if last >= n_taps {
        return Err(Error::SupportExceedsWindow { needed: last + 1, available: n_taps });
    }

    let pg_lin = 10f64.powf(pg_db / 10.0);
    let mut taps = vec![Complex64::new(0.0, 0.0); n_taps];
    for ((&tau, &p), &phi) in clusters.delays_s.iter().zip(&clusters.powers).zip(&clusters.phases) {
        let delay = prop_delay_s + tau;
        let amp = Complex64::from_polar((p * pg_lin).sqrt(), phi);
        match pulse {
            PulseShape::Nearest => taps[(delay * bw).round() as usize] += amp,
            PulseShape::Sinc => {
                let center = delay * bw;
                for (k, t) in taps.iter_mut().enumerate() {
                    *t += amp * sinc(k as f64 - center);
                }
            }
        }
    }

    let total: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    if total > 0.0 {
        let scale = (pg_lin / total).sqrt();
        taps.iter_mut().for_each(|t| *t *= scale);
    } else {
        // Every cluster cancelled; keep the first arrival so power is conserved.
        taps[(prop_delay_s * bw).round() as usize] = Complex64::new(pg_lin.sqrt(), 0.0);
    }
    Ok(CirTaps { taps, sample_period: radio.sample_period() })
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}
