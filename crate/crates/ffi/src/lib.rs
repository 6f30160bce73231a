//! C ABI over `sparsevd`.
//!
//! Every function returns an [`SvdStatus`]; on failure the message is
//! available from [`svd_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_load`/`svd_train`/`svd_compress` and released
//! with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sparsevd::sparsity::{kl_per_weight, model_sparsity, CompressedModel, Container};
use sparsevd::trainer::{train, Checkpoint, MetricsRecord, RunStatus, TaskData, TrainConfig};
use sparsevd::varlayers::{deterministic_forward, Predictions, SeqBatch, Targets, Task};
use sparsevd::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvdStatus {
    Ok = 0,
    NullArgument = 1,
    Invalid = 2,
    Config = 3,
    Data = 4,
    Diverged = 5,
    Format = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvdTask {
    CharLm = 0,
    Sentiment = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SvdModelInfo {
    pub task: u32,
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
    pub epoch: usize,
}

/// Percent of pruned weights; `y` is NaN when the output layer is not sparsified.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SvdSparsity {
    pub x: f64,
    pub h: f64,
    pub y: f64,
}

/// Training configuration.
pub struct SvdConfig {
    inner: TrainConfig,
}

/// A trained model with its run metadata.
pub struct SvdModel {
    inner: Checkpoint,
}

/// A pruned model with CSR weights.
pub struct SvdCompressed {
    inner: CompressedModel,
    threshold: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SvdStatus {
    match e {
        Error::Shape(_) | Error::Invalid(_) => SvdStatus::Invalid,
        Error::Config(_) => SvdStatus::Config,
        Error::Data(_) => SvdStatus::Data,
        Error::Divergence(_) => SvdStatus::Diverged,
        Error::Format(_) | Error::Json(_) => SvdStatus::Format,
        Error::Io { .. } => SvdStatus::Io,
    }
}

struct Fail(SvdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult = Result<SvdStatus, Fail>;

/// Run `f`, converting errors and panics into a status and the last-error message.
fn guard(f: impl FnOnce() -> FfiResult) -> SvdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SvdStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SvdStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SvdStatus::Invalid, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn svd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn svd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// KL divergence approximation for one weight at the given log α.
#[no_mangle]
pub extern "C" fn svd_kl_per_weight(log_alpha: f64) -> f64 {
    kl_per_weight(log_alpha)
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svd_config_new(out: *mut *mut SvdConfig) -> SvdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SvdConfig {
            inner: TrainConfig::default(),
        }));
        Ok(SvdStatus::Ok)
    })
}

/// Parse flat `key = value` config text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svd_config_parse(text: *const c_char, out: *mut *mut SvdConfig) -> SvdStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SvdConfig {
            inner: TrainConfig::parse(text)?,
        }));
        Ok(SvdStatus::Ok)
    })
}

/// Set one key; unknown keys and unparsable values fail with `SVD_STATUS_CONFIG`.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn svd_config_set(cfg: *mut SvdConfig, key: *const c_char, value: *const c_char) -> SvdStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        cfg.inner.set(str_arg(key, "key")?, str_arg(value, "value")?)?;
        Ok(SvdStatus::Ok)
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svd_config_free(cfg: *mut SvdConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Train per `cfg`. Metrics lines are appended to `metrics_path` when it is
/// not NULL. On divergence the status is `SVD_STATUS_DIVERGED` and `out` still
/// receives the last good model.
///
/// # Safety
/// `cfg` must be a live handle, `metrics_path` NULL or NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn svd_train(
    cfg: *const SvdConfig,
    metrics_path: *const c_char,
    out: *mut *mut SvdModel,
) -> SvdStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.inner;
        let metrics_path = if metrics_path.is_null() {
            None
        } else {
            Some(str_arg(metrics_path, "metrics_path")?.to_string())
        };
        let out = out_arg(out, "out")?;
        cfg.validate()?;
        let data = TaskData::load(cfg)?;
        let init = match &cfg.init_from {
            Some(p) => Some(Checkpoint::load(p)?.model),
            None => None,
        };
        let mut lines = String::new();
        let mut hook = |rec: &MetricsRecord, _: &Checkpoint| {
            lines.push_str(&rec.to_line());
            lines.push('\n');
            Ok(())
        };
        let outcome = train(cfg, &data, init.as_ref(), &mut hook)?;
        if let Some(p) = metrics_path {
            std::fs::write(&p, &lines).map_err(|e| Fail(SvdStatus::Io, format!("{p}: {e}")))?;
        }
        let status = match &outcome.status {
            RunStatus::Completed => SvdStatus::Ok,
            RunStatus::Diverged { epoch, message } => {
                set_error(format!("diverged in epoch {epoch}: {message}"));
                SvdStatus::Diverged
            }
        };
        *out = Box::into_raw(Box::new(SvdModel { inner: outcome.last }));
        Ok(status)
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn svd_model_load(path: *const c_char, out: *mut *mut SvdModel) -> SvdStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SvdModel {
            inner: Checkpoint::load(path)?,
        }));
        Ok(SvdStatus::Ok)
    })
}

/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn svd_model_save(model: *const SvdModel, path: *const c_char) -> SvdStatus {
    guard(|| {
        ref_arg(model, "model")?.inner.save(str_arg(path, "path")?)?;
        Ok(SvdStatus::Ok)
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svd_model_free(model: *mut SvdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn svd_model_info(model: *const SvdModel, out: *mut SvdModelInfo) -> SvdStatus {
    guard(|| {
        let ck = &ref_arg(model, "model")?.inner;
        let m = &ck.model;
        *out_arg(out, "out")? = SvdModelInfo {
            task: match m.task {
                Task::CharLm => SvdTask::CharLm as u32,
                Task::Sentiment => SvdTask::Sentiment as u32,
            },
            vocab_size: m.vocab_size(),
            hidden_size: m.hidden_size(),
            output_size: m.output_size(),
            epoch: ck.meta.epoch,
        };
        Ok(SvdStatus::Ok)
    })
}

/// Sparsity at `threshold` of the matrices trained under Sparse VD.
///
/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn svd_model_sparsity(model: *const SvdModel, threshold: f64, out: *mut SvdSparsity) -> SvdStatus {
    guard(|| {
        let r = model_sparsity(&ref_arg(model, "model")?.inner.model, threshold)?;
        *out_arg(out, "out")? = SvdSparsity {
            x: r.x,
            h: r.h,
            y: r.y.unwrap_or(f64::NAN),
        };
        Ok(SvdStatus::Ok)
    })
}

/// Batch-major `tokens [batch×len]` into a time-major batch. `last` gives the
/// output position per sequence for sentiment models (NULL: `len - 1`).
unsafe fn read_batch(
    task: Task,
    tokens: *const usize,
    last: *const usize,
    batch: usize,
    len: usize,
) -> Result<SeqBatch, Fail> {
    if tokens.is_null() {
        return Err(null("tokens"));
    }
    if batch == 0 || len == 0 {
        return Err(Fail(SvdStatus::Invalid, "batch and len must be positive".into()));
    }
    let flat = std::slice::from_raw_parts(tokens, batch * len);
    let steps: Vec<Vec<usize>> = (0..len).map(|t| (0..batch).map(|b| flat[b * len + t]).collect()).collect();
    let targets = match task {
        // targets are unused by the forward pass
        Task::CharLm => Targets::NextToken(steps.clone()),
        Task::Sentiment => {
            let last = if last.is_null() {
                vec![len - 1; batch]
            } else {
                std::slice::from_raw_parts(last, batch).to_vec()
            };
            if let Some(&bad) = last.iter().find(|&&l| l >= len) {
                return Err(Fail(SvdStatus::Invalid, format!("last position {bad} outside length {len}")));
            }
            Targets::Score {
                last,
                value: vec![0.0; batch],
            }
        }
    };
    Ok(SeqBatch { tokens: steps, targets })
}

/// Copy predictions into `out`. Sentiment yields `batch` scores; char-LM
/// yields time-major logits, row `t·batch + b`, `output_size` values each.
/// With `out` NULL only `written` is set to the required length.
unsafe fn write_predictions(pred: Predictions, out: *mut f64, cap: usize, written: *mut usize) -> FfiResult {
    let values = match pred {
        Predictions::Logits(t) => t.into_data(),
        Predictions::Scores(s) => s,
    };
    let written = out_arg(written, "written")?;
    *written = values.len();
    if out.is_null() {
        return Ok(SvdStatus::Ok);
    }
    if cap < values.len() {
        return Err(Fail(
            SvdStatus::BufferTooSmall,
            format!("output needs {} values, buffer holds {cap}", values.len()),
        ));
    }
    std::slice::from_raw_parts_mut(out, values.len()).copy_from_slice(&values);
    Ok(SvdStatus::Ok)
}

/// Mean-weight forward pass.
///
/// # Safety
/// `tokens` must hold `batch·len` values, `last` NULL or `batch` values,
/// `out` NULL or `cap` writable values, `written` valid.
#[no_mangle]
pub unsafe extern "C" fn svd_model_forward(
    model: *const SvdModel,
    tokens: *const usize,
    last: *const usize,
    batch: usize,
    len: usize,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SvdStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.inner.model;
        let b = read_batch(m.task, tokens, last, batch, len)?;
        write_predictions(deterministic_forward(m, &b)?, out, cap, written)
    })
}

/// Prune at `threshold` and pack into CSR.
///
/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn svd_compress(model: *const SvdModel, threshold: f64, out: *mut *mut SvdCompressed) -> SvdStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.inner.model;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SvdCompressed {
            inner: CompressedModel::from_model(m, threshold)?,
            threshold,
        }));
        Ok(SvdStatus::Ok)
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn svd_compressed_load(path: *const c_char, out: *mut *mut SvdCompressed) -> SvdStatus {
    guard(|| {
        let c = Container::read(str_arg(path, "path")?)?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SvdCompressed {
            inner: CompressedModel::from_container(&c)?,
            threshold: c.threshold.unwrap_or(f64::NAN),
        }));
        Ok(SvdStatus::Ok)
    })
}

/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn svd_compressed_save(model: *const SvdCompressed, path: *const c_char) -> SvdStatus {
    guard(|| {
        let c = ref_arg(model, "model")?;
        c.inner.to_container(c.threshold).write(str_arg(path, "path")?)?;
        Ok(SvdStatus::Ok)
    })
}

/// Stored nonzeros across the CSR matrices, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn svd_compressed_nnz(model: *const SvdCompressed) -> usize {
    model
        .as_ref()
        .map_or(0, |c| c.inner.wx.nnz() + c.inner.wh.nnz() + c.inner.head.nnz())
}

/// Forward pass on CSR weights; same layout contract as [`svd_model_forward`].
///
/// # Safety
/// As for [`svd_model_forward`].
#[no_mangle]
pub unsafe extern "C" fn svd_compressed_forward(
    model: *const SvdCompressed,
    tokens: *const usize,
    last: *const usize,
    batch: usize,
    len: usize,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SvdStatus {
    guard(|| {
        let c = &ref_arg(model, "model")?.inner;
        let b = read_batch(c.task, tokens, last, batch, len)?;
        write_predictions(c.forward(&b)?, out, cap, written)
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svd_compressed_free(model: *mut SvdCompressed) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
