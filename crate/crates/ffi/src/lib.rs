//! C ABI over the `infpos` library.
//!
//! Conventions:
//! - Every fallible function returns an [`InfposStatus`]; `INFPOS_STATUS_OK`
//!   is zero. Results are written through out-pointers.
//! - On failure a message is stored per thread and can be read with
//!   [`infpos_last_error_message`] until the next failing call on that thread.
//! - Handles (`InfposFactory`, `InfposDataset`, `InfposModel`) are opaque and
//!   owned by the caller once returned; release them with the matching
//!   `_free` function. Passing NULL to a `_free` function is a no-op.
//! - Signal codes: 0 = path gain, 1 = channel impulse response.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use infpos::channel::{FactoryRealization, LinkState, Position};
use infpos::config::SimConfig;
use infpos::dataset::{generate_dataset, grid_positions, random_positions, select_bs, Dataset};
use infpos::fading::SignalType;
use infpos::nn::{fine_tune, train, Arch, Model, TrainConfig};
use infpos::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfposStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Divergence = 6,
    Panic = 7,
}

/// A factory realization: geometry, clutter and every spatial field.
pub struct InfposFactory(FactoryRealization);

/// A labeled fingerprint dataset.
pub struct InfposDataset(Dataset);

/// A positioning network with its input/label normalization.
pub struct InfposModel(Model);

/// Training hyperparameters. Obtain defaults from
/// [`infpos_train_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct InfposTrainOptions {
    pub epochs: usize,
    /// Extra epochs are added until at least this many optimizer steps run
    /// (0 = exactly `epochs`).
    pub min_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> InfposStatus {
    match err {
        Error::Io(_) => InfposStatus::Io,
        Error::Format(_) => InfposStatus::Format,
        Error::Shape(_) => InfposStatus::Shape,
        Error::Divergence { .. } => InfposStatus::Divergence,
        _ => InfposStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> InfposStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => InfposStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is NULL"));
            InfposStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            InfposStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

unsafe fn c_path(p: *const c_char) -> FfiResult<PathBuf> {
    c_str(p, "path").map(PathBuf::from)
}

fn signal(code: u8) -> FfiResult<SignalType> {
    SignalType::from_code(code).map_err(|_| Failure::Lib(Error::InvalidArgument(format!("unknown signal code {code}"))))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn infpos_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

// ---------------------------------------------------------------------------
// Factory

/// Builds a factory from `key=value` configuration text (empty text gives the
/// defaults).
///
/// # Safety
/// `config_text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_factory_new(config_text: *const c_char, out: *mut *mut InfposFactory) -> InfposStatus {
    guard(|| {
        let cfg = SimConfig::parse(c_str(config_text, "config_text")?)?;
        let f = FactoryRealization::new(&cfg)?;
        put(out, boxed(InfposFactory(f)), "out")
    })
}

/// # Safety
/// `factory` must be NULL or a handle from [`infpos_factory_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn infpos_factory_free(factory: *mut InfposFactory) {
    if !factory.is_null() {
        drop(Box::from_raw(factory));
    }
}

/// # Safety
/// `factory` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_factory_n_bs(factory: *const InfposFactory, out: *mut usize) -> InfposStatus {
    guard(|| put(out, deref(factory, "factory")?.0.n_bs(), "out"))
}

/// # Safety
/// `factory` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_factory_seed(factory: *const InfposFactory, out: *mut u64) -> InfposStatus {
    guard(|| put(out, deref(factory, "factory")?.0.seed(), "out"))
}

/// Path gain (dB, shadow fading included) from BS `bs` to the UE at `(x, y)`.
///
/// # Safety
/// `factory` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_path_gain_db(
    factory: *const InfposFactory,
    bs: usize,
    x: f64,
    y: f64,
    out: *mut f64,
) -> InfposStatus {
    guard(|| put(out, deref(factory, "factory")?.0.path_gain_db(bs, Position::new(x, y))?, "out"))
}

/// Writes 1 for a line-of-sight link, 0 otherwise.
///
/// # Safety
/// `factory` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_los_state(
    factory: *const InfposFactory,
    bs: usize,
    x: f64,
    y: f64,
    out: *mut i32,
) -> InfposStatus {
    guard(|| {
        let state = deref(factory, "factory")?.0.los_state(bs, Position::new(x, y))?;
        put(out, i32::from(state == LinkState::Los), "out")
    })
}

// ---------------------------------------------------------------------------
// Dataset

/// Cell-centered grid with the given spacing (meters).
///
/// # Safety
/// `factory` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_dataset_generate_grid(
    factory: *const InfposFactory,
    signal_code: u8,
    spacing: f64,
    out: *mut *mut InfposDataset,
) -> InfposStatus {
    guard(|| {
        let f = &deref(factory, "factory")?.0;
        let positions = grid_positions(f.topology(), spacing)?;
        let d = generate_dataset(f, &positions, signal(signal_code)?)?;
        put(out, boxed(InfposDataset(d)), "out")
    })
}

/// `n` uniform random positions drawn with `seed`.
///
/// # Safety
/// `factory` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_dataset_generate_random(
    factory: *const InfposFactory,
    signal_code: u8,
    n: usize,
    seed: u64,
    out: *mut *mut InfposDataset,
) -> InfposStatus {
    guard(|| {
        let f = &deref(factory, "factory")?.0;
        let positions = random_positions(f.topology(), n, seed)?;
        let d = generate_dataset(f, &positions, signal(signal_code)?)?;
        put(out, boxed(InfposDataset(d)), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_dataset_load(path: *const c_char, out: *mut *mut InfposDataset) -> InfposStatus {
    guard(|| {
        let d = Dataset::load(c_path(path)?)?;
        put(out, boxed(InfposDataset(d)), "out")
    })
}

/// # Safety
/// `dataset` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn infpos_dataset_save(dataset: *const InfposDataset, path: *const c_char) -> InfposStatus {
    guard(|| Ok(deref(dataset, "dataset")?.0.save(c_path(path)?)?))
}

/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn infpos_dataset_free(dataset: *mut InfposDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Sample count, BS count, taps per BS (1 for PG), f32 values per sample
/// and signal code. Any out-pointer may be NULL to skip it.
///
/// # Safety
/// `dataset` must be a live handle; non-NULL out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_dataset_dims(
    dataset: *const InfposDataset,
    n_samples: *mut usize,
    n_bs: *mut usize,
    n_taps: *mut usize,
    feature_len: *mut usize,
    signal_code: *mut u8,
) -> InfposStatus {
    guard(|| {
        let h = deref(dataset, "dataset")?.0.header();
        for (p, v) in [(n_samples, h.n_samples), (n_bs, h.n_bs), (n_taps, h.n_taps), (feature_len, h.feature_len())] {
            if !p.is_null() {
                p.write(v);
            }
        }
        if !signal_code.is_null() {
            signal_code.write(h.signal.code());
        }
        Ok(())
    })
}

/// New dataset keeping the columns `ids[0..n_ids]` (indices into the current
/// columns).
///
/// # Safety
/// `dataset` must be a live handle, `ids` must point to `n_ids` values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_dataset_select_bs(
    dataset: *const InfposDataset,
    ids: *const usize,
    n_ids: usize,
    out: *mut *mut InfposDataset,
) -> InfposStatus {
    guard(|| {
        let d = &deref(dataset, "dataset")?.0;
        if ids.is_null() && n_ids > 0 {
            return Err(Failure::Null("ids"));
        }
        let ids = if n_ids == 0 { &[][..] } else { std::slice::from_raw_parts(ids, n_ids) };
        put(out, boxed(InfposDataset(select_bs(d, ids)?)), "out")
    })
}

unsafe fn copy_into(src: &[f32], buf: *mut f32, len: usize) -> FfiResult<()> {
    if buf.is_null() {
        return Err(Failure::Null("buffer"));
    }
    if len != src.len() {
        return Err(Failure::Lib(Error::Shape(format!("buffer holds {len} values, {} needed", src.len()))));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    Ok(())
}

/// Copies all features (`n_samples * feature_len` f32, sample-major).
///
/// # Safety
/// `dataset` must be a live handle; `buf` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn infpos_dataset_copy_features(
    dataset: *const InfposDataset,
    buf: *mut f32,
    len: usize,
) -> InfposStatus {
    guard(|| copy_into(deref(dataset, "dataset")?.0.features(), buf, len))
}

/// Copies labels as `x0, y0, x1, y1, ...` (`2 * n_samples` f32).
///
/// # Safety
/// `dataset` must be a live handle; `buf` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn infpos_dataset_copy_labels(
    dataset: *const InfposDataset,
    buf: *mut f32,
    len: usize,
) -> InfposStatus {
    guard(|| {
        let labels: Vec<f32> = deref(dataset, "dataset")?.0.labels().iter().flatten().copied().collect();
        copy_into(&labels, buf, len)
    })
}

// ---------------------------------------------------------------------------
// Model

/// Default hyperparameters for a signal (learning rate, epochs, batch size).
#[no_mangle]
pub extern "C" fn infpos_train_options_default(signal_code: u8) -> InfposTrainOptions {
    let cfg = match signal_code {
        1 => TrainConfig::cir(),
        _ => TrainConfig::pg(),
    };
    InfposTrainOptions { epochs: cfg.epochs, min_steps: cfg.min_steps, batch_size: cfg.batch_size, learning_rate: cfg.lr, seed: cfg.seed }
}

fn train_config(base: TrainConfig, opts: &InfposTrainOptions) -> TrainConfig {
    TrainConfig { epochs: opts.epochs, min_steps: opts.min_steps, batch_size: opts.batch_size, lr: opts.learning_rate, seed: opts.seed, ..base }
}

/// Untrained network sized for `dataset`. `cir_scale` multiplies the CIR
/// network widths (1.0 = full size; ignored for PG).
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_model_new(
    dataset: *const InfposDataset,
    cir_scale: f64,
    seed: u64,
    out: *mut *mut InfposModel,
) -> InfposStatus {
    guard(|| {
        let d = &deref(dataset, "dataset")?.0;
        if !(cir_scale > 0.0) {
            return Err(Failure::Lib(Error::InvalidArgument("cir_scale must be positive".into())));
        }
        let m = Model::new(Arch::for_dataset(d, cir_scale), seed)?;
        put(out, boxed(InfposModel(m)), "out")
    })
}

/// Trains in place. `final_loss` (may be NULL) receives the last epoch's loss.
///
/// # Safety
/// `model` and `dataset` must be live handles; `opts` must be readable.
#[no_mangle]
pub unsafe extern "C" fn infpos_model_train(
    model: *mut InfposModel,
    dataset: *const InfposDataset,
    opts: *const InfposTrainOptions,
    final_loss: *mut f64,
) -> InfposStatus {
    guard(|| {
        let m = &mut deref_mut(model, "model")?.0;
        let d = &deref(dataset, "dataset")?.0;
        let cfg = train_config(TrainConfig::for_arch(m.arch()), deref(opts, "opts")?);
        let report = train(m, d, &cfg)?;
        if !final_loss.is_null() {
            final_loss.write(report.epoch_loss.last().copied().unwrap_or(f64::NAN));
        }
        Ok(())
    })
}

/// Continues training a trained model on new data, keeping its normalization.
///
/// # Safety
/// `model` and `dataset` must be live handles; `opts` must be readable.
#[no_mangle]
pub unsafe extern "C" fn infpos_model_fine_tune(
    model: *mut InfposModel,
    dataset: *const InfposDataset,
    opts: *const InfposTrainOptions,
) -> InfposStatus {
    guard(|| {
        let m = &mut deref_mut(model, "model")?.0;
        let d = &deref(dataset, "dataset")?.0;
        let cfg = train_config(TrainConfig::fine_tune(), deref(opts, "opts")?);
        fine_tune(m, d, &cfg)?;
        Ok(())
    })
}

/// Predicts `(x, y)` for `n` samples. `features` holds `n * feature_len`
/// floats; `out` receives `2 * n` doubles.
///
/// # Safety
/// `model` must be a live handle; the buffers must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn infpos_model_predict(
    model: *const InfposModel,
    features: *const f32,
    n: usize,
    out: *mut f64,
) -> InfposStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        if features.is_null() {
            return Err(Failure::Null("features"));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let feats = std::slice::from_raw_parts(features, n * m.arch().input_len());
        let preds = m.predict(feats, n)?;
        let dst = std::slice::from_raw_parts_mut(out, 2 * n);
        for (d, p) in dst.chunks_exact_mut(2).zip(&preds) {
            d.copy_from_slice(p);
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_model_n_params(model: *const InfposModel, out: *mut usize) -> InfposStatus {
    guard(|| put(out, deref(model, "model")?.0.n_params(), "out"))
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn infpos_model_save(model: *const InfposModel, path: *const c_char) -> InfposStatus {
    guard(|| Ok(deref(model, "model")?.0.save(c_path(path)?)?))
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_model_load(path: *const c_char, out: *mut *mut InfposModel) -> InfposStatus {
    guard(|| {
        let m = Model::load(c_path(path)?)?;
        put(out, boxed(InfposModel(m)), "out")
    })
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn infpos_model_free(model: *mut InfposModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Linear-interpolation empirical quantile of `errors[0..n]`.
///
/// # Safety
/// `errors` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn infpos_quantile(errors: *const f64, n: usize, q: f64, out: *mut f64) -> InfposStatus {
    guard(|| {
        if errors.is_null() {
            return Err(Failure::Null("errors"));
        }
        let e = std::slice::from_raw_parts(errors, n);
        put(out, infpos::eval::quantile(e, q)?, "out")
    })
}
