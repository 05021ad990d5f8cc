use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use infpos::channel::FactoryRealization;
use infpos::config::{KeyValues, SimConfig};
use infpos::dataset::{generate_dataset, spacing_for_size, split_test, Dataset, SamplingMode, SamplingSpec};
use infpos::eval::{build_report, ReportMeta};
use infpos::experiment::{self, ExperimentSpec, Scale};
use infpos::fading::SignalType;
use infpos::nn::{fine_tune, train, Arch, Model, TrainConfig};
use infpos::{Error, Result};

#[derive(Parser)]
#[command(name = "infpos", version, about = "Indoor-factory fingerprint simulator and neural positioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Pg,
    Cir,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training dataset (and optionally a test set) from a config file.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; receives train.infds and, with n_test set, test.infds.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset file.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        arch: ArchArg,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Start from this checkpoint and fine-tune instead of training from scratch.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Exact epoch count (disables the minimum step budget).
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        /// CIR network width multiplier (1.0 = full ResNet18).
        #[arg(long, default_value_t = 0.25)]
        cir_scale: f64,
    },
    /// Evaluate a checkpoint on a dataset and write the error CDF.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment spec and write its CSV tables.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's scale with full-scale datasets and networks.
        #[arg(long)]
        full_scale: bool,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("INFPOS_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::InvalidConfig(format!("INFPOS_THREADS={v:?} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    Ok(())
}

fn generate(config: &Path, out: &Path) -> Result<()> {
    let mut kv = KeyValues::load(config)?;
    let sim = SimConfig::from_kv(&mut kv)?;
    let signal: SignalType = kv.take_or("signal", SignalType::Pg)?;
    let sampling_seed = kv.take_or("sampling_seed", 7u64)?;
    let mode = match kv.take_str("sampling").as_deref().unwrap_or("grid") {
        "grid" => {
            let spacing = match (kv.take::<f64>("spacing")?, kv.take::<usize>("size")?) {
                (Some(s), None) => s,
                (None, Some(n)) => spacing_for_size(&sim.topology, n),
                (None, None) => 0.5,
                (Some(_), Some(_)) => return Err(Error::InvalidConfig("give either spacing or size, not both".into())),
            };
            SamplingMode::Grid { spacing }
        }
        "random" => SamplingMode::Random { n: kv.take("size")?.ok_or_else(|| Error::InvalidConfig("random sampling needs size".into()))? },
        other => return Err(Error::InvalidConfig(format!("unknown sampling {other:?}"))),
    };
    let n_test = kv.take_or("n_test", 0usize)?;
    kv.finish()?;

    let factory = FactoryRealization::new(&sim)?;
    let positions = SamplingSpec { mode, seed: sampling_seed }.positions(factory.topology())?;
    let dataset = generate_dataset(&factory, &positions, signal)?;
    fs::create_dir_all(out)?;
    dataset.save(out.join("train.infds"))?;
    log::info!("wrote {} {} samples", dataset.len(), signal.name());
    if n_test > 0 {
        let test = split_test(&factory, signal, n_test, sampling_seed, &positions)?;
        test.save(out.join("test.infds"))?;
        log::info!("wrote {} test samples", test.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    dataset: &Path,
    arch: ArchArg,
    out: &Path,
    init: Option<&Path>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    seed: u64,
    cir_scale: f64,
) -> Result<()> {
    let data = Dataset::load(dataset)?;
    let expected = match arch {
        ArchArg::Pg => SignalType::Pg,
        ArchArg::Cir => SignalType::Cir,
    };
    if data.signal() != expected {
        return Err(Error::InvalidArgument(format!("--arch does not match the {} dataset", data.signal().name())));
    }
    let (mut model, mut cfg) = match init {
        Some(path) => (Model::load(path)?, TrainConfig::fine_tune()),
        None => {
            let arch = Arch::for_dataset(&data, cir_scale);
            let cfg = TrainConfig::for_arch(&arch);
            (Model::new(arch, seed)?, cfg)
        }
    };
    cfg.seed = seed;
    if let Some(e) = epochs {
        cfg.epochs = e;
        cfg.min_steps = 0;
    }
    cfg.lr = lr.unwrap_or(cfg.lr);
    cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
    let report = if init.is_some() { fine_tune(&mut model, &data, &cfg)? } else { train(&mut model, &data, &cfg)? };
    if let Some(last) = report.epoch_loss.last() {
        log::info!("final epoch loss {last:.6e}");
    }
    model.save(out)
}

fn eval_cmd(model: &Path, dataset: &Path, out: &Path) -> Result<()> {
    let model = Model::load(model)?;
    let data = Dataset::load(dataset)?;
    let preds = model.predict_dataset(&data)?;
    let meta = ReportMeta {
        experiment: "eval".into(),
        train_size: 0,
        test_size: data.len(),
        factory_seed: data.header().factory_seed,
        training_seed: model.seed(),
        dataset_hash: data.content_hash(),
    };
    let report = build_report(&preds, data.labels(), meta)?;
    println!("q90 = {:.3} m", report.q90);
    fs::write(out, report.cdf_csv())?;
    Ok(())
}

fn experiment_cmd(spec: &Path, out: &Path, full_scale: bool) -> Result<()> {
    let mut spec = ExperimentSpec::load(spec)?;
    if full_scale && spec.scale != Scale::Full {
        let full = ExperimentSpec::new(spec.kind, Scale::Full);
        spec.scale = Scale::Full;
        spec.cir_size_cap = full.cir_size_cap;
        spec.cir_scale = full.cir_scale;
    }
    let result = experiment::run(&spec)?;
    result.write(out)?;
    for leg in &result.legs {
        println!("{} {}: q90 = {:.3} m", spec.kind.name(), leg.param, leg.report.q90);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Generate { config, out } => generate(&config, &out),
        Command::Train { dataset, arch, out, init, epochs, lr, batch_size, seed, cir_scale } => {
            train_cmd(&dataset, arch, &out, init.as_deref(), epochs, lr, batch_size, seed, cir_scale)
        }
        Command::Eval { model, dataset, out } => eval_cmd(&model, &dataset, &out),
        Command::Experiment { spec, out, full_scale } => experiment_cmd(&spec, &out, full_scale),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
