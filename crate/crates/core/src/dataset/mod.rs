//! Position sampling, fingerprint datasets, BS down-selection and the
//! binary dataset file.

mod io;

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::channel::{FactoryRealization, Position, TopologyConfig};
use crate::error::{Error, Result};
use crate::fading::{build_sample, ChannelSample, Fingerprint, SignalType};
use crate::rng;

pub use io::{MAGIC, VERSION};

/// Minimum separation between a test position and any training position.
pub const MIN_TEST_SEPARATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingMode {
    Grid { spacing: f64 },
    Random { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingSpec {
    pub mode: SamplingMode,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn positions(&self, topo: &TopologyConfig) -> Result<Vec<Position>> {
        match self.mode {
            SamplingMode::Grid { spacing } => grid_positions(topo, spacing),
            SamplingMode::Random { n } => random_positions(topo, n, self.seed),
        }
    }
}

/// Grid pitch giving roughly `n` cell-centered positions over the hall.
pub fn spacing_for_size(topo: &TopologyConfig, n: usize) -> f64 {
    (topo.length * topo.width / n as f64).sqrt()
}

fn cells(extent: f64, spacing: f64) -> usize {
    (extent / spacing + 1e-9).floor() as usize
}

/// Cell-centered grid: `x in {s/2, 3s/2, ...}`, likewise for `y`, x-fastest.
pub fn grid_positions(topo: &TopologyConfig, spacing: f64) -> Result<Vec<Position>> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::arg(format!("grid spacing must be positive, got {spacing}")));
    }
    if spacing > topo.length.min(topo.width) {
        return Err(Error::arg(format!(
            "grid spacing {spacing} m exceeds the smaller hall dimension {} m",
            topo.length.min(topo.width)
        )));
    }
    let (nx, ny) = (cells(topo.length, spacing), cells(topo.width, spacing));
    let mut out = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            out.push(Position::new((ix as f64 + 0.5) * spacing, (iy as f64 + 0.5) * spacing));
        }
    }
    Ok(out)
}

/// `n` i.i.d. uniform positions over the hall.
pub fn random_positions(topo: &TopologyConfig, n: usize, seed: u64) -> Result<Vec<Position>> {
    if n == 0 {
        return Err(Error::arg("random sampling needs n > 0"));
    }
    let mut r = rng::stream(seed, &[0x5A]);
    Ok((0..n)
        .map(|_| Position::new(r.gen::<f64>() * topo.length, r.gen::<f64>() * topo.width))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub signal: SignalType,
    pub n_samples: usize,
    pub n_bs: usize,
    /// 1 for PG datasets.
    pub n_taps: usize,
    /// `(r, h, d)` as stored on disk.
    pub clutter: [f32; 3],
    pub factory_seed: u64,
    /// Bit `i` set when original BS `i` is present; columns follow bit order.
    pub bs_mask: u32,
}

impl DatasetHeader {
    /// f32 values per sample.
    pub fn feature_len(&self) -> usize {
        match self.signal {
            SignalType::Pg => self.n_bs,
            SignalType::Cir => 2 * self.n_bs * self.n_taps,
        }
    }

    /// Original BS indices of the columns, in column order.
    pub fn bs_ids(&self) -> Vec<usize> {
        (0..32).filter(|i| self.bs_mask & (1 << i) != 0).collect()
    }
}

/// Labeled fingerprints, stored flat.
///
/// PG features are `n_bs` dB values per sample. CIR features are BS-major
/// with interleaved real/imaginary parts: `[(b * n_taps + t) * 2 + {0,1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    header: DatasetHeader,
    features: Vec<f32>,
    labels: Vec<[f32; 2]>,
}

impl Dataset {
    pub fn new(header: DatasetHeader, features: Vec<f32>, labels: Vec<[f32; 2]>) -> Result<Self> {
        let d = Dataset { header, features, labels };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.n_samples == 0 {
            return Err(Error::arg("dataset has no samples"));
        }
        if h.n_bs == 0 || h.bs_mask.count_ones() as usize != h.n_bs {
            return Err(Error::format(format!("bs_mask {:#x} does not select {} BS", h.bs_mask, h.n_bs)));
        }
        if h.signal == SignalType::Pg && h.n_taps != 1 {
            return Err(Error::format("PG datasets must declare n_taps = 1"));
        }
        if self.labels.len() != h.n_samples || self.features.len() != h.n_samples * h.feature_len() {
            return Err(Error::format("header dimensions do not match payload"));
        }
        Ok(())
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn signal(&self) -> SignalType {
        self.header.signal
    }

    pub fn len(&self) -> usize {
        self.header.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.header.n_samples == 0
    }

    pub fn n_bs(&self) -> usize {
        self.header.n_bs
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        let n = self.header.feature_len();
        &self.features[i * n..(i + 1) * n]
    }

    pub fn labels(&self) -> &[[f32; 2]] {
        &self.labels
    }

    /// Keeps the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let n = self.header.feature_len();
        let mut features = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::OutOfRange { index: i, len: self.len() });
            }
            features.extend_from_slice(self.feature(i));
            labels.push(self.labels[i]);
        }
        let header = DatasetHeader { n_samples: indices.len(), ..self.header.clone() };
        Dataset::new(header, features, labels)
    }

    /// Hex SHA-256 of the serialized dataset.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_bytes());
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One sample per position, in input order.
pub fn generate_dataset(factory: &FactoryRealization, positions: &[Position], signal: SignalType) -> Result<Dataset> {
    if positions.is_empty() {
        return Err(Error::arg("cannot generate a dataset from an empty position list"));
    }
    let samples: Vec<ChannelSample> = positions
        .par_iter()
        .map(|&p| build_sample(factory, p, signal))
        .collect::<Result<_>>()?;

    let n_bs = factory.n_bs();
    let n_taps = match signal {
        SignalType::Pg => 1,
        SignalType::Cir => factory.radio().n_taps,
    };
    let c = factory.clutter();
    let header = DatasetHeader {
        signal,
        n_samples: samples.len(),
        n_bs,
        n_taps,
        clutter: [c.density as f32, c.height as f32, c.size as f32],
        factory_seed: factory.seed(),
        bs_mask: if n_bs == 32 { u32::MAX } else { (1u32 << n_bs) - 1 },
    };
    let mut features = Vec::with_capacity(samples.len() * header.feature_len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        match s.fingerprint {
            Fingerprint::Pg(v) => features.extend(v),
            Fingerprint::Cir { taps, .. } => features.extend(taps.iter().flat_map(|t| [t.re, t.im])),
        }
        labels.push([s.position.x as f32, s.position.y as f32]);
    }
    Dataset::new(header, features, labels)
}

/// Keeps the columns `bs_ids` (indices into the current columns, not the
/// original BS numbering). Columns stay in ascending order.
pub fn select_bs(dataset: &Dataset, bs_ids: &[usize]) -> Result<Dataset> {
    if bs_ids.is_empty() {
        return Err(Error::arg("select_bs needs at least one BS"));
    }
    let h = dataset.header();
    let mut ids = bs_ids.to_vec();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::arg("duplicate BS ids"));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= h.n_bs) {
        return Err(Error::OutOfRange { index: bad, len: h.n_bs });
    }
    let original = h.bs_ids();
    let bs_mask = ids.iter().fold(0u32, |m, &i| m | (1 << original[i]));

    let per_bs = match h.signal {
        SignalType::Pg => 1,
        SignalType::Cir => 2 * h.n_taps,
    };
    let mut features = Vec::with_capacity(h.n_samples * ids.len() * per_bs);
    for s in 0..h.n_samples {
        let row = dataset.feature(s);
        for &b in &ids {
            features.extend_from_slice(&row[b * per_bs..(b + 1) * per_bs]);
        }
    }
    let header = DatasetHeader { n_bs: ids.len(), bs_mask, ..h.clone() };
    Dataset::new(header, features, dataset.labels.clone())
}

/// Random test positions from `factory`, none within 1 mm of `exclude`.
pub fn split_test(
    factory: &FactoryRealization,
    signal: SignalType,
    n_test: usize,
    seed: u64,
    exclude: &[Position],
) -> Result<Dataset> {
    if n_test == 0 {
        return Err(Error::arg("n_test must be positive"));
    }
    let mut sorted: Vec<Position> = exclude.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let too_close = |p: &Position| {
        let lo = sorted.partition_point(|q| q.x < p.x - MIN_TEST_SEPARATION);
        sorted[lo..]
            .iter()
            .take_while(|q| q.x <= p.x + MIN_TEST_SEPARATION)
            .any(|q| (q.x - p.x).hypot(q.y - p.y) < MIN_TEST_SEPARATION)
    };

    let topo = factory.topology();
    let mut r = rng::stream(seed, &[0x7E57]);
    let mut positions = Vec::with_capacity(n_test);
    while positions.len() < n_test {
        let p = Position::new(r.gen::<f64>() * topo.length, r.gen::<f64>() * topo.width);
        if !too_close(&p) {
            positions.push(p);
        }
    }
    generate_dataset(factory, &positions, signal)
}
