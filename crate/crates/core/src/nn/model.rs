use std::f64::consts::PI;
use std::fmt;

use rand::seq::SliceRandom;

use crate::config::KeyValues;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fading::SignalType;
use crate::rng;

use super::layers::{Layer, Mode, Sequential};
use super::nets::{build_cir_net, build_pg_net, CirNetConfig, PgNetConfig};
use super::optim::{Adam, AdamConfig};
use super::tensor::{Scalar, Tensor};

const TAG_INIT: u64 = 0x1417;
const TAG_SHUFFLE: u64 = 0x5F;

#[derive(Debug, Clone, PartialEq)]
pub enum Arch {
    Pg(PgNetConfig),
    Cir(CirNetConfig),
}

impl Arch {
    pub fn id(&self) -> u8 {
        match self {
            Arch::Pg(_) => 0,
            Arch::Cir(_) => 1,
        }
    }

    pub fn signal(&self) -> SignalType {
        match self {
            Arch::Pg(_) => SignalType::Pg,
            Arch::Cir(_) => SignalType::Cir,
        }
    }

    /// f32 values per sample the network consumes.
    pub fn input_len(&self) -> usize {
        match self {
            Arch::Pg(c) => c.input_dim,
            Arch::Cir(c) => 2 * c.n_bs * c.n_taps,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Arch::Pg(c) => c.param_count(),
            Arch::Cir(c) => c.param_count(),
        }
    }

    /// Default architecture for a dataset; `cir_scale` multiplies the CIR
    /// channel counts (1.0 is full ResNet18 width).
    pub fn for_dataset(dataset: &Dataset, cir_scale: f64) -> Self {
        let h = dataset.header();
        match h.signal {
            SignalType::Pg => Arch::Pg(PgNetConfig { input_dim: h.n_bs, ..Default::default() }),
            SignalType::Cir => Arch::Cir(CirNetConfig::scaled(h.n_bs, h.n_taps, cir_scale)),
        }
    }

    /// `key=value` lines that [`Arch::from_echo`] reads back.
    pub fn echo(&self) -> String {
        match self {
            Arch::Pg(c) => format!(
                "input_dim={}\nwidth={}\nn_residual_layers={}\n",
                c.input_dim, c.width, c.n_residual_layers
            ),
            Arch::Cir(c) => format!(
                "n_bs={}\nn_taps={}\nbase_width={}\nblocks={},{},{},{}\n",
                c.n_bs, c.n_taps, c.base_width, c.blocks[0], c.blocks[1], c.blocks[2], c.blocks[3]
            ),
        }
    }

    pub fn from_echo(id: u8, text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let missing = |k: &str| Error::format(format!("architecture echo lacks {k}"));
        let arch = match id {
            0 => Arch::Pg(PgNetConfig {
                input_dim: kv.take("input_dim")?.ok_or_else(|| missing("input_dim"))?,
                width: kv.take("width")?.ok_or_else(|| missing("width"))?,
                n_residual_layers: kv.take("n_residual_layers")?.ok_or_else(|| missing("n_residual_layers"))?,
            }),
            1 => {
                let blocks: Vec<usize> = kv.take_list("blocks")?.ok_or_else(|| missing("blocks"))?;
                Arch::Cir(CirNetConfig {
                    n_bs: kv.take("n_bs")?.ok_or_else(|| missing("n_bs"))?,
                    n_taps: kv.take("n_taps")?.ok_or_else(|| missing("n_taps"))?,
                    base_width: kv.take("base_width")?.ok_or_else(|| missing("base_width"))?,
                    blocks: blocks.try_into().map_err(|_| Error::format("blocks needs four entries"))?,
                })
            }
            other => return Err(Error::format(format!("unknown architecture id {other}"))),
        };
        kv.finish()?;
        Ok(arch)
    }

    pub fn build<T: Scalar>(&self, seed: u64) -> Result<Sequential<T>> {
        let mut r = rng::stream(seed, &[TAG_INIT]);
        match self {
            Arch::Pg(c) => build_pg_net(c, &mut r),
            Arch::Cir(c) => build_cir_net(c, &mut r),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arch::Pg(c) => write!(f, "pg(in={}, width={}, res={})", c.input_dim, c.width, c.n_residual_layers),
            Arch::Cir(c) => write!(f, "cir({}x{}, base={}, blocks={:?})", c.n_bs, c.n_taps, c.base_width, c.blocks),
        }
    }
}

/// Input scaling fitted on the first training set.
#[derive(Debug, Clone, PartialEq)]
pub enum InputScaling {
    /// `(x - mean) / std` per feature.
    Standardize { mean: Vec<f32>, std: Vec<f32> },
    /// `x / scale` for every value.
    Global { scale: f32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub input: InputScaling,
    /// Labels are divided by these (hall length and width).
    pub label_scale: [f32; 2],
}

impl Normalizer {
    pub fn fit(arch: &Arch, dataset: &Dataset, label_scale: [f32; 2]) -> Result<Self> {
        check_compatible(arch, dataset)?;
        if !(label_scale[0] > 0.0 && label_scale[1] > 0.0) {
            return Err(Error::arg("label scale must be positive"));
        }
        let n = dataset.len() as f64;
        let input = match arch {
            Arch::Pg(c) => {
                let d = c.input_dim;
                let mut mean = vec![0.0f64; d];
                let mut sq = vec![0.0f64; d];
                for row in dataset.features().chunks_exact(d) {
                    for (j, &v) in row.iter().enumerate() {
                        mean[j] += v as f64;
                        sq[j] += (v as f64).powi(2);
                    }
                }
                let mean: Vec<f64> = mean.iter().map(|m| m / n).collect();
                let std = sq
                    .iter()
                    .zip(&mean)
                    .map(|(s, m)| {
                        let sd = (s / n - m * m).max(0.0).sqrt();
                        if sd > 1e-6 { sd as f32 } else { 1.0 }
                    })
                    .collect();
                InputScaling::Standardize { mean: mean.iter().map(|&m| m as f32).collect(), std }
            }
            Arch::Cir(_) => {
                // Real and imaginary parts together: RMS tap magnitude.
                let ms = dataset.features().iter().map(|&v| (v as f64).powi(2)).sum::<f64>() * 2.0
                    / dataset.features().len() as f64;
                let scale = ms.sqrt();
                InputScaling::Global { scale: if scale > 0.0 { scale as f32 } else { 1.0 } }
            }
        };
        Ok(Normalizer { input, label_scale })
    }

    pub fn normalize_label(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] / self.label_scale[0] as f64, p[1] / self.label_scale[1] as f64]
    }

    pub fn denormalize_label(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] * self.label_scale[0] as f64, p[1] * self.label_scale[1] as f64]
    }
}

fn check_compatible(arch: &Arch, dataset: &Dataset) -> Result<()> {
    if dataset.signal() != arch.signal() {
        return Err(Error::arg(format!(
            "{} model cannot consume a {} dataset",
            arch.signal().name(),
            dataset.signal().name()
        )));
    }
    if dataset.header().feature_len() != arch.input_len() {
        return Err(Error::shape(format!(
            "model expects {} values per sample, dataset has {}",
            arch.input_len(),
            dataset.header().feature_len()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::arg("dataset is empty"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from the base rate to zero over all steps.
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Small datasets get extra epochs until at least this many optimizer
    /// steps are taken (ignored when `epochs` is 0).
    pub min_steps: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    /// Label normalization used when the model has no normalizer yet.
    pub label_scale: [f32; 2],
}

impl TrainConfig {
    pub fn pg() -> Self {
        TrainConfig {
            lr: 1e-3,
            adam: AdamConfig::default(),
            batch_size: 256,
            epochs: 200,
            min_steps: 22_500,
            schedule: LrSchedule::Cosine,
            seed: 1,
            label_scale: [120.0, 60.0],
        }
    }

    pub fn cir() -> Self {
        TrainConfig { lr: 1e-4, epochs: 50, min_steps: 0, ..Self::pg() }
    }

    pub fn fine_tune() -> Self {
        TrainConfig { lr: 1e-4, min_steps: 0, ..Self::pg() }
    }

    pub fn for_arch(arch: &Arch) -> Self {
        match arch {
            Arch::Pg(_) => Self::pg(),
            Arch::Cir(_) => Self::cir(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        Ok(())
    }

    /// Epochs actually run on `n` samples.
    pub fn effective_epochs(&self, n: usize) -> usize {
        if self.epochs == 0 {
            return 0;
        }
        let per_epoch = n.div_ceil(self.batch_size).max(1);
        self.epochs.max(self.min_steps.div_ceil(per_epoch))
    }

    fn lr_at(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => 0.5 * self.lr * (1.0 + (PI * step as f64 / total.max(1) as f64).cos()),
        }
    }
}

/// Mean over the batch of `0.5 * |pred - label|^2`, and its gradient
/// w.r.t. `pred`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, label: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != label.shape() || pred.is_empty() {
        return Err(Error::shape(format!("loss of {:?} against {:?}", pred.shape(), label.shape())));
    }
    let b = pred.batch();
    let inv_b = T::from_f64_lossy(1.0 / b as f64);
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(label.data())
        .map(|(&p, &l)| {
            let d = p - l;
            loss += 0.5 * d.as_f64().powi(2);
            d * inv_b
        })
        .collect();
    Ok((loss / b as f64, Tensor::from_vec(pred.shape(), grad)?))
}

/// Per-epoch mean training loss (normalized label units).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
}

pub struct Model {
    arch: Arch,
    net: Sequential<f32>,
    normalizer: Option<Normalizer>,
    seed: u64,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("arch", &self.arch)
            .field("params", &self.net.n_params())
            .field("normalizer", &self.normalizer)
            .field("seed", &self.seed)
            .finish()
    }
}

impl Model {
    /// Freshly initialized network; weights depend only on `arch` and `seed`.
    pub fn new(arch: Arch, seed: u64) -> Result<Self> {
        let net = arch.build(seed)?;
        Ok(Model { arch, net, normalizer: None, seed })
    }

    pub(crate) fn from_parts(arch: Arch, net: Sequential<f32>, normalizer: Option<Normalizer>, seed: u64) -> Self {
        Model { arch, net, normalizer, seed }
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    pub fn net(&self) -> &Sequential<f32> {
        &self.net
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    /// All trainable values followed by all buffers, in layer order.
    pub fn flat_parameters(&self) -> Vec<f32> {
        let mut out: Vec<f32> = self.net.params().iter().flat_map(|p| p.value.data().iter().copied()).collect();
        out.extend(self.net.buffers().iter().flat_map(|b| b.data().iter().copied()));
        out
    }

    fn input_tensor(&self, norm: &Normalizer, features: &[f32], n: usize) -> Result<Tensor<f32>> {
        let len = self.arch.input_len();
        if features.len() != n * len {
            return Err(Error::shape(format!("expected {n} x {len} input values, got {}", features.len())));
        }
        match (&self.arch, &norm.input) {
            (Arch::Pg(c), InputScaling::Standardize { mean, std }) => {
                let data = features
                    .chunks_exact(len)
                    .flat_map(|row| row.iter().zip(mean).zip(std).map(|((&v, &m), &s)| (v - m) / s))
                    .collect();
                Tensor::from_vec(&[n, c.input_dim], data)
            }
            (Arch::Cir(c), InputScaling::Global { scale }) => {
                let plane = c.n_bs * c.n_taps;
                let mut data = vec![0.0f32; n * 2 * plane];
                for (s, row) in features.chunks_exact(len).enumerate() {
                    let out = &mut data[s * 2 * plane..(s + 1) * 2 * plane];
                    for (k, pair) in row.chunks_exact(2).enumerate() {
                        out[k] = pair[0] / scale;
                        out[plane + k] = pair[1] / scale;
                    }
                }
                Tensor::from_vec(&[n, 2, c.n_bs, c.n_taps], data)
            }
            _ => Err(Error::format("normalizer does not match the architecture")),
        }
    }

    /// Denormalized `(x, y)` for each of the `n` rows of `features`.
    pub fn predict(&self, features: &[f32], n: usize) -> Result<Vec<[f64; 2]>> {
        let norm = self.normalizer.as_ref().ok_or_else(|| Error::arg("model has not been fitted to any data"))?;
        let len = self.arch.input_len();
        if features.len() != n * len {
            return Err(Error::shape(format!("expected {n} x {len} input values, got {}", features.len())));
        }
        const CHUNK: usize = 256;
        let mut out = Vec::with_capacity(n);
        for (i, rows) in features.chunks(CHUNK * len.max(1)).enumerate() {
            let m = rows.len() / len;
            let x = self.input_tensor(norm, rows, m)?;
            let y = self.net.infer(&x)?;
            for p in y.data().chunks_exact(2) {
                out.push(norm.denormalize_label([p[0] as f64, p[1] as f64]));
            }
            debug_assert_eq!(out.len(), (i * CHUNK + m).min(n));
        }
        Ok(out)
    }

    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<[f64; 2]>> {
        check_compatible(&self.arch, dataset)?;
        self.predict(dataset.features(), dataset.len())
    }
}

/// Mini-batch Adam on the MSE loss. Fits the normalizer to `dataset` when
/// the model has none.
pub fn train(model: &mut Model, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_compatible(&model.arch, dataset)?;
    if model.normalizer.is_none() {
        model.normalizer = Some(Normalizer::fit(&model.arch, dataset, cfg.label_scale)?);
    }
    run_training(model, dataset, cfg)
}

/// Continues training an already fitted model, keeping its normalizer.
pub fn fine_tune(model: &mut Model, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_compatible(&model.arch, dataset)?;
    if model.normalizer.is_none() {
        return Err(Error::arg("fine-tuning needs a previously trained model"));
    }
    run_training(model, dataset, cfg)
}

fn run_training(model: &mut Model, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let norm = model.normalizer.clone().expect("normalizer fitted");
    let n = dataset.len();
    let len = model.arch.input_len();
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let epochs = cfg.effective_epochs(n);
    let total_steps = batches_per_epoch * epochs;

    let mut opt = Adam::new(cfg.adam, &model.net.params_mut());
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    let mut feats = Vec::with_capacity(cfg.batch_size * len);
    let mut labels = Vec::with_capacity(cfg.batch_size * 2);

    for epoch in 0..epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, &[TAG_SHUFFLE, epoch as u64]));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            feats.clear();
            labels.clear();
            for &i in batch {
                feats.extend_from_slice(dataset.feature(i));
                let l = dataset.labels()[i];
                let p = norm.normalize_label([l[0] as f64, l[1] as f64]);
                labels.extend([p[0] as f32, p[1] as f32]);
            }
            let x = model.input_tensor(&norm, &feats, batch.len())?;
            let target = Tensor::from_vec(&[batch.len(), 2], labels.clone())?;

            model.net.zero_grad();
            let pred = model.net.forward(&x, Mode::Train)?;
            let (loss, grad) = mse_loss(&pred, &target)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            model.net.backward(&grad)?;
            opt.step(&mut model.net.params_mut(), cfg.lr_at(step, total_steps));
            epoch_loss += loss * batch.len() as f64;
            step += 1;
        }
        let mean = epoch_loss / n as f64;
        log::debug!("epoch {epoch}: loss {mean:.6e}");
        report.epoch_loss.push(mean);
    }
    Ok(report)
}
