//! The five end-to-end experiments: PG vs CIR, BS-count sweep, dataset-size
//! sweep, cross-factory generalization and fine-tuning.
//!
//! Every experiment is a list of legs. A leg trains one model and evaluates
//! it on a held-out set; its report carries the seeds and dataset hash it was
//! produced from.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::channel::{ClutterConfig, FactoryRealization, Position};
use crate::config::{KeyValues, SimConfig};
use crate::dataset::{generate_dataset, grid_positions, random_positions, select_bs, spacing_for_size, split_test, Dataset};
use crate::error::{Error, Result};
use crate::eval::{build_report, summary_csv, ErrorReport, ReportMeta, SummaryRow};
use crate::fading::SignalType;
use crate::nn::{fine_tune, train, Arch, Model, TrainConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    SignalCompare,
    BsSweep,
    SizeSweep,
    Generalization,
    Finetune,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SignalCompare => "signal_compare",
            ExperimentKind::BsSweep => "bs_sweep",
            ExperimentKind::SizeSweep => "size_sweep",
            ExperimentKind::Generalization => "generalization",
            ExperimentKind::Finetune => "finetune",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "signal_compare" => ExperimentKind::SignalCompare,
            "bs_sweep" => ExperimentKind::BsSweep,
            "size_sweep" => ExperimentKind::SizeSweep,
            "generalization" => ExperimentKind::Generalization,
            "finetune" => ExperimentKind::Finetune,
            other => return Err(Error::config(format!("unknown experiment kind {other:?}"))),
        })
    }
}

/// Desk scale caps CIR datasets and shrinks the CIR network; full scale runs
/// everything at the nominal sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(Error::config(format!("unknown scale {other:?} (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub scale: Scale,
    /// Training factory; `sim.seed` is its factory seed.
    pub sim: SimConfig,
    /// Foreign factory for generalization and fine-tuning.
    pub test_factory_seed: u64,
    /// Nominal training-set sizes (grid sampling).
    pub sizes: Vec<usize>,
    /// Largest CIR training set.
    pub cir_size_cap: usize,
    pub pg_bs_counts: Vec<usize>,
    pub cir_bs_counts: Vec<usize>,
    pub signals: Vec<SignalType>,
    pub n_test: usize,
    /// Positions for test sets and random training sets.
    pub sampling_seed: u64,
    /// Weight init and batch order.
    pub training_seed: u64,
    pub pg_train: TrainConfig,
    pub cir_train: TrainConfig,
    pub finetune_train: TrainConfig,
    pub finetune_size: usize,
    /// CIR network channel multiplier (1.0 = ResNet18 widths).
    pub cir_scale: f64,
}

impl ExperimentSpec {
    /// Defaults for `kind` at `scale`.
    pub fn new(kind: ExperimentKind, scale: Scale) -> Self {
        let (sizes, cir_size_cap, cir_scale) = match scale {
            Scale::Desk => (vec![28_800], 1800, 0.25),
            Scale::Full => (vec![28_800], 28_800, 1.0),
        };
        // At 1800 samples the full-scale CIR schedule takes about 350 steps,
        // which leaves the reduced network far from converged.
        let cir_train = match scale {
            Scale::Desk => TrainConfig { lr: 1e-3, batch_size: 32, epochs: 30, ..TrainConfig::cir() },
            Scale::Full => TrainConfig::cir(),
        };
        let sizes = match kind {
            ExperimentKind::SizeSweep | ExperimentKind::Generalization => match scale {
                Scale::Desk => vec![1800, 7200, 28_800],
                Scale::Full => vec![1700, 7200, 28_800, 80_000],
            },
            ExperimentKind::BsSweep => vec![1800],
            _ => sizes,
        };
        let signals = match kind {
            ExperimentKind::SizeSweep | ExperimentKind::Finetune => vec![SignalType::Pg],
            _ => vec![SignalType::Pg, SignalType::Cir],
        };
        ExperimentSpec {
            kind,
            scale,
            sim: SimConfig::default(),
            test_factory_seed: 2,
            sizes,
            cir_size_cap,
            pg_bs_counts: vec![18, 12, 8, 6, 4, 2],
            cir_bs_counts: vec![18, 8, 4, 1],
            signals,
            n_test: 2000,
            sampling_seed: 7,
            training_seed: 11,
            pg_train: TrainConfig::pg(),
            cir_train,
            finetune_train: TrainConfig::fine_tune(),
            finetune_size: 1000,
            cir_scale,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let kind: ExperimentKind = kv.take("kind")?.ok_or_else(|| Error::config("experiment spec needs kind"))?;
        let scale = kv.take_or("scale", Scale::Desk)?;
        let mut spec = ExperimentSpec::new(kind, scale);
        spec.sim = SimConfig::from_kv(&mut kv)?;
        spec.test_factory_seed = kv.take_or("test_seed", spec.test_factory_seed)?;
        if let Some(sizes) = kv.take_list("sizes")? {
            spec.sizes = sizes;
        }
        spec.cir_size_cap = kv.take_or("cir_size_cap", spec.cir_size_cap)?;
        if let Some(v) = kv.take_list("pg_bs_counts")? {
            spec.pg_bs_counts = v;
        }
        if let Some(v) = kv.take_list("cir_bs_counts")? {
            spec.cir_bs_counts = v;
        }
        if let Some(v) = kv.take_list("signals")? {
            spec.signals = v;
        }
        spec.n_test = kv.take_or("n_test", spec.n_test)?;
        spec.sampling_seed = kv.take_or("sampling_seed", spec.sampling_seed)?;
        spec.training_seed = kv.take_or("training_seed", spec.training_seed)?;
        spec.finetune_size = kv.take_or("finetune_size", spec.finetune_size)?;
        spec.cir_scale = kv.take_or("cir_scale", spec.cir_scale)?;
        for (prefix, cfg) in
            [("pg", &mut spec.pg_train), ("cir", &mut spec.cir_train), ("finetune", &mut spec.finetune_train)]
        {
            cfg.epochs = kv.take_or(&format!("{prefix}_epochs"), cfg.epochs)?;
            cfg.min_steps = kv.take_or(&format!("{prefix}_min_steps"), cfg.min_steps)?;
            cfg.lr = kv.take_or(&format!("{prefix}_lr"), cfg.lr)?;
            cfg.batch_size = kv.take_or(&format!("{prefix}_batch_size"), cfg.batch_size)?;
        }
        kv.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::config("sizes must be a non-empty list of positive counts"));
        }
        if self.signals.is_empty() {
            return Err(Error::config("signals must not be empty"));
        }
        if self.n_test == 0 || self.finetune_size == 0 || self.cir_size_cap == 0 {
            return Err(Error::config("n_test, finetune_size and cir_size_cap must be positive"));
        }
        if !(self.cir_scale > 0.0) {
            return Err(Error::config("cir_scale must be positive"));
        }
        let n_bs = self.sim.topology.n_bs;
        for &c in self.pg_bs_counts.iter().chain(&self.cir_bs_counts) {
            if c == 0 || c > n_bs {
                return Err(Error::config(format!("BS count {c} outside 1..={n_bs}")));
            }
        }
        if matches!(self.kind, ExperimentKind::Generalization | ExperimentKind::Finetune)
            && self.test_factory_seed == self.sim.seed
        {
            return Err(Error::config("train and test factory seeds must differ for cross-factory experiments"));
        }
        for cfg in [&self.pg_train, &self.cir_train, &self.finetune_train] {
            cfg.validate()?;
        }
        Ok(())
    }

    fn train_config(&self, signal: SignalType) -> TrainConfig {
        let base = match signal {
            SignalType::Pg => &self.pg_train,
            SignalType::Cir => &self.cir_train,
        };
        let t = &self.sim.topology;
        TrainConfig { seed: self.training_seed, label_scale: [t.length as f32, t.width as f32], ..base.clone() }
    }

    /// Sizes in order with duplicates dropped.
    fn unique_sizes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &s in &self.sizes {
            if out.contains(&s) {
                log::warn!("duplicate dataset size {s} ignored");
            } else {
                out.push(s);
            }
        }
        out
    }

    fn signal_size(&self, signal: SignalType, size: usize) -> usize {
        match signal {
            SignalType::Pg => size,
            SignalType::Cir => size.min(self.cir_size_cap),
        }
    }
}

/// One trained-and-evaluated model.
#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    /// Short identifier, used for the CDF file name and the summary row.
    pub param: String,
    pub report: ErrorReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub legs: Vec<Leg>,
}

impl ExperimentResult {
    pub fn leg(&self, param: &str) -> Option<&Leg> {
        self.legs.iter().find(|l| l.param == param)
    }

    pub fn q90(&self, param: &str) -> Option<f64> {
        self.leg(param).map(|l| l.report.q90)
    }

    pub fn summary_csv(&self) -> String {
        let rows: Vec<SummaryRow> = self.legs.iter().map(|l| SummaryRow::new(&l.param, &l.report)).collect();
        summary_csv(&rows)
    }

    /// `(file name, contents)` for every output table.
    pub fn files(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> =
            self.legs.iter().map(|l| (format!("cdf_{}.csv", l.param), l.report.cdf_csv())).collect();
        out.push(("summary.csv".to_string(), self.summary_csv()));
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, contents) in self.files() {
            fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }
}

pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let legs = match spec.kind {
        ExperimentKind::SignalCompare => run_signal_compare(spec)?,
        ExperimentKind::BsSweep => run_bs_sweep(spec)?,
        ExperimentKind::SizeSweep => run_size_sweep(spec)?,
        ExperimentKind::Generalization => run_generalization(spec)?,
        ExperimentKind::Finetune => run_finetune(spec)?,
    };
    Ok(ExperimentResult { kind: spec.kind, legs })
}

/// `n` BS spread over the deployment order: indices `floor(i * n_bs / n)`.
pub fn spread_bs(n_bs: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| i * n_bs / n).collect()
}

fn grid_for_size(factory: &FactoryRealization, size: usize) -> Result<Vec<Position>> {
    grid_positions(factory.topology(), spacing_for_size(factory.topology(), size))
}

struct LegInput<'a> {
    param: String,
    train: &'a Dataset,
    test: &'a Dataset,
}

fn new_model(spec: &ExperimentSpec, train: &Dataset) -> Result<Model> {
    Model::new(Arch::for_dataset(train, spec.cir_scale), spec.training_seed)
}

fn evaluate(spec: &ExperimentSpec, model: &Model, input: &LegInput<'_>) -> Result<Leg> {
    let preds = model.predict_dataset(input.test)?;
    let meta = ReportMeta {
        experiment: spec.kind.name().to_string(),
        train_size: input.train.len(),
        test_size: input.test.len(),
        factory_seed: input.train.header().factory_seed,
        training_seed: spec.training_seed,
        dataset_hash: input.train.content_hash(),
    };
    let report = build_report(&preds, input.test.labels(), meta)?;
    log::info!("{} {}: q90 = {:.3} m", spec.kind.name(), input.param, report.q90);
    Ok(Leg { param: input.param.clone(), report })
}

fn train_and_evaluate(spec: &ExperimentSpec, input: LegInput<'_>) -> Result<Leg> {
    log::info!("{} {}: training on {} samples", spec.kind.name(), input.param, input.train.len());
    let mut model = new_model(spec, input.train)?;
    train(&mut model, input.train, &spec.train_config(input.train.signal()))?;
    evaluate(spec, &model, &input)
}

fn run_signal_compare(spec: &ExperimentSpec) -> Result<Vec<Leg>> {
    let size = spec.sizes[0];
    let mut legs = Vec::new();
    for clutter in [ClutterConfig::SPARSE, ClutterConfig::DENSE] {
        let factory = FactoryRealization::new(&spec.sim.clone().with_clutter(clutter))?;
        for &signal in &spec.signals {
            let positions = grid_for_size(&factory, spec.signal_size(signal, size))?;
            let train_set = generate_dataset(&factory, &positions, signal)?;
            let test = split_test(&factory, signal, spec.n_test, spec.sampling_seed, &positions)?;
            let param = format!("{}_{}", signal.name(), clutter.label());
            legs.push(train_and_evaluate(spec, LegInput { param, train: &train_set, test: &test })?);
        }
    }
    Ok(legs)
}

fn run_bs_sweep(spec: &ExperimentSpec) -> Result<Vec<Leg>> {
    let factory = FactoryRealization::new(&spec.sim)?;
    let n_bs = factory.n_bs();
    let mut legs = Vec::new();
    for &signal in &spec.signals {
        let counts = match signal {
            SignalType::Pg => &spec.pg_bs_counts,
            SignalType::Cir => &spec.cir_bs_counts,
        };
        let positions = grid_for_size(&factory, spec.signal_size(signal, spec.sizes[0]))?;
        let full_train = generate_dataset(&factory, &positions, signal)?;
        let full_test = split_test(&factory, signal, spec.n_test, spec.sampling_seed, &positions)?;
        for &count in counts {
            let ids = spread_bs(n_bs, count);
            let train_set = select_bs(&full_train, &ids)?;
            let test = select_bs(&full_test, &ids)?;
            let param = format!("{}_bs{count}", signal.name());
            legs.push(train_and_evaluate(spec, LegInput { param, train: &train_set, test: &test })?);
        }
    }
    Ok(legs)
}

fn run_size_sweep(spec: &ExperimentSpec) -> Result<Vec<Leg>> {
    let factory = FactoryRealization::new(&spec.sim)?;
    let sizes = spec.unique_sizes();
    if sizes.len() < 3 {
        log::warn!("size sweep with only {} distinct sizes", sizes.len());
    }
    let mut legs = Vec::new();
    for &signal in &spec.signals {
        let grids: Vec<(usize, Vec<Position>)> = sizes
            .iter()
            .map(|&s| spec.signal_size(signal, s))
            .map(|s| Ok((s, grid_for_size(&factory, s)?)))
            .collect::<Result<_>>()?;
        let mut grids = grids;
        grids.dedup_by_key(|g| g.0);
        let all: Vec<Position> = grids.iter().flat_map(|g| g.1.iter().copied()).collect();
        let test = split_test(&factory, signal, spec.n_test, spec.sampling_seed, &all)?;
        for (size, positions) in &grids {
            let train_set = generate_dataset(&factory, positions, signal)?;
            let param = format!("{}_n{size}", signal.name());
            legs.push(train_and_evaluate(spec, LegInput { param, train: &train_set, test: &test })?);
        }
    }
    Ok(legs)
}

fn foreign_factory(spec: &ExperimentSpec) -> Result<FactoryRealization> {
    FactoryRealization::new(&spec.sim.clone().with_seed(spec.test_factory_seed))
}

fn foreign_test(spec: &ExperimentSpec, factory: &FactoryRealization, signal: SignalType, exclude: &[Position]) -> Result<Dataset> {
    split_test(factory, signal, spec.n_test, rng::derive_seed(spec.sampling_seed, &[1]), exclude)
}

fn run_generalization(spec: &ExperimentSpec) -> Result<Vec<Leg>> {
    let home = FactoryRealization::new(&spec.sim)?;
    let away = foreign_factory(spec)?;
    let mut legs = Vec::new();
    for &signal in &spec.signals {
        let test = foreign_test(spec, &away, signal, &[])?;
        let mut done = Vec::new();
        for size in spec.unique_sizes() {
            let size = spec.signal_size(signal, size);
            if done.contains(&size) {
                continue;
            }
            done.push(size);
            let train_set = generate_dataset(&home, &grid_for_size(&home, size)?, signal)?;
            let param = format!("{}_n{size}", signal.name());
            legs.push(train_and_evaluate(spec, LegInput { param, train: &train_set, test: &test })?);
        }
    }
    Ok(legs)
}

/// Zero-shot, fine-tuned and from-scratch legs for every configured signal.
fn run_finetune(spec: &ExperimentSpec) -> Result<Vec<Leg>> {
    let home = FactoryRealization::new(&spec.sim)?;
    let away = foreign_factory(spec)?;
    let mut legs = Vec::new();
    for &signal in &spec.signals {
        let size = spec.signal_size(signal, spec.sizes[0]);
        let pretrain = generate_dataset(&home, &grid_for_size(&home, size)?, signal)?;
        let light_positions = random_positions(away.topology(), spec.finetune_size, rng::derive_seed(spec.sampling_seed, &[2]))?;
        let light = generate_dataset(&away, &light_positions, signal)?;
        let test = foreign_test(spec, &away, signal, &light_positions)?;
        let name = signal.name();

        let mut model = new_model(spec, &pretrain)?;
        train(&mut model, &pretrain, &spec.train_config(signal))?;
        legs.push(evaluate(spec, &model, &LegInput { param: format!("{name}_zero_shot"), train: &pretrain, test: &test })?);

        let ft_cfg = TrainConfig { seed: spec.training_seed, ..spec.finetune_train.clone() };
        fine_tune(&mut model, &light, &ft_cfg)?;
        legs.push(evaluate(spec, &model, &LegInput { param: format!("{name}_finetuned"), train: &light, test: &test })?);

        legs.push(train_and_evaluate(spec, LegInput { param: format!("{name}_scratch"), train: &light, test: &test })?);
    }
    Ok(legs)
}
