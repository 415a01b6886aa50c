//! C ABI over `semiforge`.
//!
//! Objects cross the boundary as opaque handles created by `sf_*_new`,
//! `sf_*_load` or `sf_train` and released with the matching `sf_*_free`.
//! Every fallible call returns an [`SfStatus`]; on failure the message is
//! available from [`sf_last_error`] on the same thread until the next
//! failing call. Panics are caught and reported as `SF_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use semiforge::config::{parse_config, set_key};
use semiforge::datagen::{load_dataset, save_dataset, synth_dataset, ClassProfile, Dataset};
use semiforge::model::{forward, load_checkpoint, save_checkpoint, ModelParams};
use semiforge::numcore::argmax;
use semiforge::report::save_metrics;
use semiforge::trainer::{run_experiment, RunResult, TrainConfig};
use semiforge::Error;

/// Result code of every fallible call.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    SF_OK = 0,
    /// A required pointer argument was null.
    SF_NULL_POINTER = 1,
    /// Argument out of range, bad UTF-8, or inconsistent shapes.
    SF_INVALID_ARGUMENT = 2,
    SF_CONFIG_ERROR = 3,
    SF_PARSE_ERROR = 4,
    SF_IO_ERROR = 5,
    /// Training produced a non-finite or exploding loss.
    SF_DIVERGED = 6,
    SF_INTERNAL_ERROR = 7,
    SF_PANIC = 8,
}

/// Which dataset split a query refers to.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfSplit {
    SF_SPLIT_LABELED = 0,
    SF_SPLIT_UNLABELED = 1,
    SF_SPLIT_TEST = 2,
}

/// Which classifier head to use.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfHead {
    SF_HEAD_STANDARD = 0,
    SF_HEAD_BALANCED = 1,
}

/// Which parameters of a finished run.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfWhich {
    SF_PARAMS_FINAL = 0,
    SF_PARAMS_BEST = 1,
}

/// Scalar fields of one epoch's metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SfEpochMetrics {
    pub epoch: usize,
    pub acc_std: f64,
    pub acc_bal: f64,
    pub acc_headline: f64,
    pub mask_prob: f64,
    pub used_acc: f64,
    pub mean_weight: f64,
    pub gamma_u_est: f64,
    pub loss_s: f64,
    pub loss_u: f64,
    pub loss_ea: f64,
    pub loss_bs: f64,
    pub loss_bu: f64,
}

/// Synthetic dataset.
pub struct SfDataset {
    inner: Dataset,
}

/// Training configuration.
pub struct SfConfig {
    inner: TrainConfig,
}

/// Finished training run: metrics plus final and best parameters.
pub struct SfRun {
    inner: RunResult,
}

/// Model parameters.
pub struct SfModel {
    inner: ModelParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SfStatus {
    match err {
        Error::InvalidInput(_) | Error::InvalidProfile(_) => SfStatus::SF_INVALID_ARGUMENT,
        Error::Config(_) => SfStatus::SF_CONFIG_ERROR,
        Error::Parse { .. } => SfStatus::SF_PARSE_ERROR,
        Error::Io { .. } => SfStatus::SF_IO_ERROR,
        Error::Diverged { .. } => SfStatus::SF_DIVERGED,
        Error::OracleFailure(_) | Error::Inconsistent(_) | Error::Unavailable => SfStatus::SF_INTERNAL_ERROR,
    }
}

/// Internal failure carrying a status and message.
struct Fail(SfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SfStatus::SF_NULL_POINTER, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SfStatus::SF_INVALID_ARGUMENT, msg.into())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F>(f: F) -> SfStatus
where
    F: FnOnce() -> Result<(), Fail>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfStatus::SF_OK,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SfStatus::SF_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Generates a synthetic imbalanced dataset.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sf_dataset_generate(
    k: usize,
    n1: usize,
    m1: usize,
    gamma_l: f64,
    gamma_u: f64,
    d: usize,
    class_sep: f64,
    test_per_class: usize,
    seed: u64,
    out: *mut *mut SfDataset,
) -> SfStatus {
    guard(|| {
        let profile = ClassProfile { k, n1, m1, gamma_l, gamma_u };
        let ds = synth_dataset(&profile, d, class_sep, test_per_class, seed)?;
        put(out, SfDataset { inner: ds })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn sf_dataset_load(path: *const c_char, out: *mut *mut SfDataset) -> SfStatus {
    guard(|| {
        let ds = load_dataset(path_arg(path, "path")?)?;
        put(out, SfDataset { inner: ds })
    })
}

/// # Safety
/// `ds` must be a live dataset handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_dataset_save(ds: *const SfDataset, path: *const c_char) -> SfStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        save_dataset(&ds.inner, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of classes and feature dimension.
///
/// # Safety
/// `ds` must be a live dataset handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_dataset_shape(
    ds: *const SfDataset,
    out_k: *mut usize,
    out_d: *mut usize,
) -> SfStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        if let Some(k) = out_k.as_mut() {
            *k = ds.inner.k;
        }
        if let Some(d) = out_d.as_mut() {
            *d = ds.inner.d;
        }
        Ok(())
    })
}

/// Writes the per-class counts of `split` into `counts[0..K]`.
///
/// # Safety
/// `ds` must be a live handle; `counts` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn sf_dataset_class_counts(
    ds: *const SfDataset,
    split: SfSplit,
    counts: *mut usize,
    len: usize,
) -> SfStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        if counts.is_null() {
            return Err(null("counts"));
        }
        let values = match split {
            SfSplit::SF_SPLIT_LABELED => ds.inner.labeled_counts(),
            SfSplit::SF_SPLIT_UNLABELED => ds.inner.unlabeled_counts(),
            SfSplit::SF_SPLIT_TEST => ds.inner.test_counts(),
        };
        if len < values.len() {
            return Err(invalid(format!("counts buffer holds {len}, need {}", values.len())));
        }
        std::slice::from_raw_parts_mut(counts, values.len()).copy_from_slice(&values);
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_dataset_free(ds: *mut SfDataset) {
    free(ds);
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn sf_config_new(out: *mut *mut SfConfig) -> SfStatus {
    guard(|| put(out, SfConfig { inner: TrainConfig::default() }))
}

/// Parses `key = value` text on top of the defaults.
///
/// # Safety
/// `text` must be NUL-terminated; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn sf_config_parse(text: *const c_char, out: *mut *mut SfConfig) -> SfStatus {
    guard(|| {
        let cfg = parse_config(str_arg(text, "text")?)?;
        put(out, SfConfig { inner: cfg })
    })
}

/// Sets one key from its textual value. The full configuration is
/// validated when training starts.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sf_config_set(cfg: *mut SfConfig, key: *const c_char, value: *const c_char) -> SfStatus {
    guard(|| {
        let cfg = handle_mut(cfg, "config")?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        let mut next = cfg.inner.clone();
        set_key(&mut next, 1, key, value)?;
        cfg.inner = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_config_free(cfg: *mut SfConfig) {
    free(cfg);
}

/// Trains on `ds` with `cfg`.
///
/// # Safety
/// `cfg` and `ds` must be live handles; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn sf_train(cfg: *const SfConfig, ds: *const SfDataset, out: *mut *mut SfRun) -> SfStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let ds = handle(ds, "dataset")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let run = run_experiment(&cfg.inner, &ds.inner, |_, _| {})?;
        put(out, SfRun { inner: run })
    })
}

/// Number of evaluated epochs.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_run_num_epochs(run: *const SfRun, out: *mut usize) -> SfStatus {
    guard(|| {
        let run = handle(run, "run")?;
        *handle_mut(out, "out")? = run.inner.metrics.len();
        Ok(())
    })
}

/// Index of the best epoch; fails with `SF_INVALID_ARGUMENT` for a run
/// without epochs.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_run_best_epoch(run: *const SfRun, out: *mut usize) -> SfStatus {
    guard(|| {
        let run = handle(run, "run")?;
        let best = run.inner.best.ok_or_else(|| invalid("run has no epochs"))?;
        *handle_mut(out, "out")? = best;
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_run_epoch_metrics(run: *const SfRun, index: usize, out: *mut SfEpochMetrics) -> SfStatus {
    guard(|| {
        let run = handle(run, "run")?;
        let m = run
            .inner
            .metrics
            .get(index)
            .ok_or_else(|| invalid(format!("epoch index {index} out of range")))?;
        *handle_mut(out, "out")? = SfEpochMetrics {
            epoch: m.epoch,
            acc_std: m.acc_std,
            acc_bal: m.acc_bal,
            acc_headline: m.acc_headline,
            mask_prob: m.mask_prob,
            used_acc: m.used_acc,
            mean_weight: m.mean_weight,
            gamma_u_est: m.gamma_u_est,
            loss_s: m.loss_s,
            loss_u: m.loss_u,
            loss_ea: m.loss_ea,
            loss_bs: m.loss_bs,
            loss_bu: m.loss_bu,
        };
        Ok(())
    })
}

/// Per-class accuracy of the headline head at epoch `index`.
///
/// # Safety
/// `run` must be a live handle; `acc` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_run_per_class(run: *const SfRun, index: usize, acc: *mut f64, len: usize) -> SfStatus {
    guard(|| {
        let run = handle(run, "run")?;
        if acc.is_null() {
            return Err(null("acc"));
        }
        let m = run
            .inner
            .metrics
            .get(index)
            .ok_or_else(|| invalid(format!("epoch index {index} out of range")))?;
        let k = m.acc_per_class.len();
        if len < k {
            return Err(invalid(format!("accuracy buffer holds {len}, need {k}")));
        }
        std::slice::from_raw_parts_mut(acc, k).copy_from_slice(&m.acc_per_class);
        Ok(())
    })
}

/// Writes the metrics stream (one JSON object per line).
///
/// # Safety
/// `run` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sf_run_save_metrics(run: *const SfRun, path: *const c_char) -> SfStatus {
    guard(|| {
        let run = handle(run, "run")?;
        save_metrics(&run.inner.metrics, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Copies the final or best parameters into a new model handle.
///
/// # Safety
/// `run` must be a live handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn sf_run_model(run: *const SfRun, which: SfWhich, out: *mut *mut SfModel) -> SfStatus {
    guard(|| {
        let run = handle(run, "run")?;
        let params = match which {
            SfWhich::SF_PARAMS_FINAL => run.inner.final_params.clone(),
            SfWhich::SF_PARAMS_BEST => run.inner.best_params.clone(),
        };
        put(out, SfModel { inner: params })
    })
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_run_free(run: *mut SfRun) {
    free(run);
}

/// # Safety
/// `path` must be NUL-terminated; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn sf_model_load(path: *const c_char, out: *mut *mut SfModel) -> SfStatus {
    guard(|| {
        let params = load_checkpoint(path_arg(path, "path")?)?;
        put(out, SfModel { inner: params })
    })
}

/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sf_model_save(model: *const SfModel, path: *const c_char) -> SfStatus {
    guard(|| {
        let model = handle(model, "model")?;
        save_checkpoint(&model.inner, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Predicted class of one feature vector of length `d`.
///
/// # Safety
/// `model` must be a live handle; `x` must hold `d` doubles; `out_class`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_model_predict(
    model: *const SfModel,
    x: *const f64,
    d: usize,
    head: SfHead,
    out_class: *mut usize,
) -> SfStatus {
    guard(|| {
        let model = handle(model, "model")?;
        if x.is_null() {
            return Err(null("x"));
        }
        let trace = forward(&model.inner, std::slice::from_raw_parts(x, d))?;
        let logits = match head {
            SfHead::SF_HEAD_STANDARD => &trace.logits_std,
            SfHead::SF_HEAD_BALANCED => &trace.logits_bal,
        };
        *handle_mut(out_class, "out_class")? = argmax(logits);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_model_free(model: *mut SfModel) {
    free(model);
}
