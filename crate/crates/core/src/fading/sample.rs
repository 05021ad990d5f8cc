use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{FactoryRealization, Position, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::rng;

use super::{generate_clusters, sample_lsp, synthesize_cir, ClusterDraws};

/// Tag for the optional measurement-noise stream.
const TAG_NOISE: u64 = 0xA0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalType {
    /// Path gain per BS (dB).
    Pg,
    /// Complex impulse response per BS.
    Cir,
}

impl SignalType {
    pub fn code(self) -> u8 {
        match self {
            SignalType::Pg => 0,
            SignalType::Cir => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(SignalType::Pg),
            1 => Ok(SignalType::Cir),
            c => Err(Error::format(format!("unknown signal type code {c}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalType::Pg => "pg",
            SignalType::Cir => "cir",
        }
    }
}

impl std::str::FromStr for SignalType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pg" => Ok(SignalType::Pg),
            "cir" => Ok(SignalType::Cir),
            other => Err(Error::arg(format!("unknown signal type {other:?} (expected pg or cir)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fingerprint {
    /// One dB value per BS.
    Pg(Vec<f32>),
    /// BS-major: `taps[b * n_taps + t]`.
    Cir { n_taps: usize, taps: Vec<Complex32> },
}

impl Fingerprint {
    pub fn n_bs(&self) -> usize {
        match self {
            Fingerprint::Pg(v) => v.len(),
            Fingerprint::Cir { n_taps, taps } => taps.len() / n_taps,
        }
    }

    pub fn signal_type(&self) -> SignalType {
        match self {
            Fingerprint::Pg(_) => SignalType::Pg,
            Fingerprint::Cir { .. } => SignalType::Cir,
        }
    }
}

/// One labeled fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub position: Position,
    pub fingerprint: Fingerprint,
}

/// Builds the PG vector or the CIR matrix seen by every BS at `pos`.
pub fn build_sample(factory: &FactoryRealization, pos: Position, signal: SignalType) -> Result<ChannelSample> {
    let fingerprint = match signal {
        SignalType::Pg => Fingerprint::Pg(
            (0..factory.n_bs())
                .map(|b| factory.path_gain_db(b, pos).map(|v| v as f32))
                .collect::<Result<_>>()?,
        ),
        SignalType::Cir => {
            let n_taps = factory.radio().n_taps;
            let mut taps = Vec::with_capacity(n_taps * factory.n_bs());
            for b in 0..factory.n_bs() {
                taps.extend(link_cir(factory, b, pos)?.into_iter().map(|t| Complex32::new(t.re as f32, t.im as f32)));
            }
            Fingerprint::Cir { n_taps, taps }
        }
    };
    Ok(ChannelSample { position: pos, fingerprint })
}

fn link_cir(factory: &FactoryRealization, bs: usize, pos: Position) -> Result<Vec<Complex64>> {
    let cfg = factory.fading();
    let state = factory.los_state(bs, pos)?;
    let lsp = sample_lsp(factory, bs, pos, state)?;
    let pg = factory.path_gain_db(bs, pos)?;
    let n = factory.ssp_normals(bs, pos, cfg.n_clusters)?;
    let draws = ClusterDraws::from_normals(&n.delay, &n.shadow, &n.phase);
    let mut clusters = generate_clusters(&lsp, state, cfg, &draws)?;
    let geom = factory.geometry(bs, pos)?;
    let radio = factory.radio();
    let prop_delay = geom.d_3d / SPEED_OF_LIGHT;
    // Keep the support inside the tap window (rare extreme delay spreads).
    let window = (radio.n_taps as f64 - 0.5) * radio.sample_period() - prop_delay;
    if clusters.delays_s.last().is_some_and(|&t| t >= window) {
        clusters.truncate_delay(window - 1e-12);
    }
    let mut cir = synthesize_cir(&clusters, pg, prop_delay, radio, cfg.pulse)?;

    if let Some(snr_db) = cfg.snr_db {
        let noise_power = cir.power() / 10f64.powf(snr_db / 10.0) / cir.taps.len() as f64;
        let sigma = (noise_power / 2.0).sqrt();
        let mut r = rng::stream(factory.seed(), &[bs as u64, TAG_NOISE, pos.x.to_bits(), pos.y.to_bits()]);
        for t in cir.taps.iter_mut() {
            let re: f64 = r.sample(StandardNormal);
            let im: f64 = r.sample(StandardNormal);
            *t += Complex64::new(sigma * re, sigma * im);
        }
    }
    Ok(cir.taps)
}
