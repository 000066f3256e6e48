//! C ABI over `dsal-core`.
//!
//! Learners live behind an opaque `DsalLearner` handle. Every function
//! returns a `DsalStatus`; on failure the message is available from
//! `dsal_last_error_message` on the same thread until the next call.
//! Matrices are row-major `double` buffers. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dsal::checkpoint::{load_learner, save_learner};
use dsal::{ActivationKind, ClassId, DsalError, Learner, LearnerConfig, PhaseDataset};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsalStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Dimension = 3,
    ClassOverlap = 4,
    UnknownLabel = 5,
    Numerical = 6,
    Io = 7,
    Format = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsalActivation {
    Relu = 0,
    Tanh = 1,
    Mish = 2,
    Hardswish = 3,
    Sigmoid = 4,
    Identity = 5,
}

impl From<DsalActivation> for ActivationKind {
    fn from(a: DsalActivation) -> Self {
        match a {
            DsalActivation::Relu => ActivationKind::Relu,
            DsalActivation::Tanh => ActivationKind::Tanh,
            DsalActivation::Mish => ActivationKind::Mish,
            DsalActivation::Hardswish => ActivationKind::Hardswish,
            DsalActivation::Sigmoid => ActivationKind::Sigmoid,
            DsalActivation::Identity => ActivationKind::Identity,
        }
    }
}

impl From<ActivationKind> for DsalActivation {
    fn from(a: ActivationKind) -> Self {
        match a {
            ActivationKind::Relu => DsalActivation::Relu,
            ActivationKind::Tanh => DsalActivation::Tanh,
            ActivationKind::Mish => DsalActivation::Mish,
            ActivationKind::Hardswish => DsalActivation::Hardswish,
            ActivationKind::Sigmoid => DsalActivation::Sigmoid,
            ActivationKind::Identity => DsalActivation::Identity,
        }
    }
}

/// Learner settings. Start from `dsal_config_default` and override fields.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsalConfig {
    pub gamma: f64,
    /// Compensation-stream regularization; 0 means use `gamma`.
    pub comp_gamma: f64,
    pub buffer_dim: usize,
    pub seed: u64,
    pub sigma_main: DsalActivation,
    pub sigma_comp: DsalActivation,
    pub comp_ratio: f64,
    pub chunk_rows: usize,
    pub enable_dac: bool,
    pub enable_plc: bool,
}

impl From<&LearnerConfig> for DsalConfig {
    fn from(c: &LearnerConfig) -> Self {
        DsalConfig {
            gamma: c.gamma,
            comp_gamma: c.comp_gamma.unwrap_or(0.0),
            buffer_dim: c.buffer_dim,
            seed: c.seed,
            sigma_main: c.sigma_main.into(),
            sigma_comp: c.sigma_comp.into(),
            comp_ratio: c.comp_ratio,
            chunk_rows: c.chunk_rows,
            enable_dac: c.enable_dac,
            enable_plc: c.enable_plc,
        }
    }
}

impl From<&DsalConfig> for LearnerConfig {
    fn from(c: &DsalConfig) -> Self {
        LearnerConfig {
            gamma: c.gamma,
            comp_gamma: (c.comp_gamma != 0.0).then_some(c.comp_gamma),
            buffer_dim: c.buffer_dim,
            seed: c.seed,
            sigma_main: c.sigma_main.into(),
            sigma_comp: c.sigma_comp.into(),
            comp_ratio: c.comp_ratio,
            chunk_rows: c.chunk_rows,
            enable_dac: c.enable_dac,
            enable_plc: c.enable_plc,
        }
    }
}

/// Opaque learner handle.
pub struct DsalLearner {
    inner: Learner,
}

struct Failure(DsalStatus, String);

impl From<DsalError> for Failure {
    fn from(e: DsalError) -> Self {
        let status = match &e {
            DsalError::Io { .. } => DsalStatus::Io,
            DsalError::Format { .. } => DsalStatus::Format,
            DsalError::Manifest(_) | DsalError::Config(_) => DsalStatus::InvalidArgument,
            DsalError::ClassOverlap(_) => DsalStatus::ClassOverlap,
            DsalError::UnknownLabel(_) => DsalStatus::UnknownLabel,
            DsalError::Dimension(_) => DsalStatus::Dimension,
            DsalError::NonFinite(_) | DsalError::Factorization(_) => DsalStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: Option<String>) {
    let msg = msg.map(|m| CString::new(m.replace('\0', " ")).expect("nul bytes removed"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg);
}

/// Runs `f`, records its error message and converts panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DsalStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure(DsalStatus::Panic, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            set_last_error(None);
            DsalStatus::Ok
        }
        Err(Failure(status, msg)) => {
            set_last_error(Some(msg));
            status
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DsalStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null only when `len` is 0, otherwise valid for `len` reads.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// Same contract as [`slice`], for writes.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn element_count(rows: usize, cols: usize) -> Result<usize, Failure> {
    rows.checked_mul(cols)
        .ok_or_else(|| Failure(DsalStatus::InvalidArgument, format!("{rows} x {cols} overflows")))
}

/// # Safety
/// `data` holds `rows * cols` doubles.
unsafe fn matrix(data: *const f64, rows: usize, cols: usize) -> Result<DMatrix<f64>, Failure> {
    let values = slice(data, element_count(rows, cols)?, "embeddings")?;
    Ok(DMatrix::from_row_slice(rows, cols, values))
}

/// # Safety
/// Pointer contracts as documented on the public phase functions.
unsafe fn phase(
    index: usize,
    embeddings: *const f64,
    rows: usize,
    cols: usize,
    labels: *const u32,
    classes: *const u32,
    num_classes: usize,
) -> Result<PhaseDataset, Failure> {
    let x = matrix(embeddings, rows, cols)?;
    let labels: Vec<ClassId> = slice(labels, rows, "labels")?.to_vec();
    let classes: Vec<ClassId> = slice(classes, num_classes, "classes")?.to_vec();
    Ok(PhaseDataset::new(index, x, labels, classes)?)
}

/// # Safety
/// `handle` is null or a live pointer from this library.
unsafe fn learner<'a>(handle: *const DsalLearner) -> Result<&'a Learner, Failure> {
    handle.as_ref().map(|h| &h.inner).ok_or_else(|| null("learner"))
}

unsafe fn learner_mut<'a>(handle: *mut DsalLearner) -> Result<&'a mut Learner, Failure> {
    handle.as_mut().map(|h| &mut h.inner).ok_or_else(|| null("learner"))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DsalStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

/// Writes the `rows x num_classes` score matrix row-major into `out`.
fn write_scores(scores: &DMatrix<f64>, out: &mut [f64]) {
    let cols = scores.ncols();
    for i in 0..scores.nrows() {
        for j in 0..cols {
            out[i * cols + j] = scores[(i, j)];
        }
    }
}

fn check_capacity(needed: usize, have: usize) -> Result<(), Failure> {
    if have < needed {
        return Err(Failure(
            DsalStatus::BufferTooSmall,
            format!("output buffer holds {have} values, {needed} needed"),
        ));
    }
    Ok(())
}

#[no_mangle]
pub extern "C" fn dsal_config_default() -> DsalConfig {
    DsalConfig::from(&LearnerConfig::default())
}

/// Fits the base phase and returns a new learner in `*out`.
///
/// # Safety
/// `embeddings` holds `rows * cols` doubles, `labels` holds `rows` ids and
/// `classes` holds `num_classes` ids. Pointers may be null when their
/// length is 0. `config` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_new(
    config: *const DsalConfig,
    embeddings: *const f64,
    rows: usize,
    cols: usize,
    labels: *const u32,
    classes: *const u32,
    num_classes: usize,
    out: *mut *mut DsalLearner,
) -> DsalStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        let base = phase(0, embeddings, rows, cols, labels, classes, num_classes)?;
        let inner = Learner::init_base(LearnerConfig::from(config), &base)?;
        *out = Box::into_raw(Box::new(DsalLearner { inner }));
        Ok(())
    })
}

/// Learns one incremental phase. The learner is unchanged on failure.
///
/// # Safety
/// Same buffer contract as [`dsal_learner_new`]; `handle` must be live.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_learn_phase(
    handle: *mut DsalLearner,
    embeddings: *const f64,
    rows: usize,
    cols: usize,
    labels: *const u32,
    classes: *const u32,
    num_classes: usize,
) -> DsalStatus {
    guard(|| {
        let learner = learner_mut(handle)?;
        let data = phase(learner.phases_seen(), embeddings, rows, cols, labels, classes, num_classes)?;
        Ok(learner.learn_phase(&data)?)
    })
}

/// Combined scores, row-major `rows x dsal_learner_num_classes`, written to
/// `scores`. Columns follow `dsal_learner_class_ids`.
///
/// # Safety
/// `embeddings` holds `rows * cols` doubles; `scores` has room for
/// `scores_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_predict(
    handle: *const DsalLearner,
    embeddings: *const f64,
    rows: usize,
    cols: usize,
    scores: *mut f64,
    scores_len: usize,
) -> DsalStatus {
    guard(|| {
        let learner = learner(handle)?;
        check_capacity(element_count(rows, learner.classes().len())?, scores_len)?;
        let x = matrix(embeddings, rows, cols)?;
        let s = learner.predict_combined(&x)?;
        write_scores(&s, slice_mut(scores, scores_len, "scores")?);
        Ok(())
    })
}

/// Predicted class id per row, written to `predictions`.
///
/// # Safety
/// `embeddings` holds `rows * cols` doubles; `predictions` has room for
/// `predictions_len` ids.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_classify(
    handle: *const DsalLearner,
    embeddings: *const f64,
    rows: usize,
    cols: usize,
    predictions: *mut u32,
    predictions_len: usize,
) -> DsalStatus {
    guard(|| {
        let learner = learner(handle)?;
        check_capacity(rows, predictions_len)?;
        let x = matrix(embeddings, rows, cols)?;
        let ids = learner.classify(&x)?;
        slice_mut(predictions, predictions_len, "predictions")?[..rows].copy_from_slice(&ids);
        Ok(())
    })
}

/// # Safety
/// `handle` must be live.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_set_comp_ratio(handle: *mut DsalLearner, ratio: f64) -> DsalStatus {
    guard(|| Ok(learner_mut(handle)?.set_comp_ratio(ratio)?))
}

/// Number of classes learned so far; 0 for a null handle.
///
/// # Safety
/// `handle` is null or live.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_num_classes(handle: *const DsalLearner) -> usize {
    handle.as_ref().map_or(0, |h| h.inner.classes().len())
}

/// Phases learned, base included; 0 for a null handle.
///
/// # Safety
/// `handle` is null or live.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_phases_seen(handle: *const DsalLearner) -> usize {
    handle.as_ref().map_or(0, |h| h.inner.phases_seen())
}

/// Embedding width the learner expects; 0 for a null handle.
///
/// # Safety
/// `handle` is null or live.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_input_dim(handle: *const DsalLearner) -> usize {
    handle.as_ref().map_or(0, |h| h.inner.buffer().input_dim())
}

/// Class ids in score-column order.
///
/// # Safety
/// `out` has room for `out_len` ids.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_class_ids(handle: *const DsalLearner, out: *mut u32, out_len: usize) -> DsalStatus {
    guard(|| {
        let ids = learner(handle)?.classes();
        check_capacity(ids.len(), out_len)?;
        slice_mut(out, out_len, "out")?[..ids.len()].copy_from_slice(ids);
        Ok(())
    })
}

/// Copies the active configuration into `*out`.
///
/// # Safety
/// `handle` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_config(handle: *const DsalLearner, out: *mut DsalConfig) -> DsalStatus {
    guard(|| {
        let config = DsalConfig::from(learner(handle)?.config());
        *out.as_mut().ok_or_else(|| null("out"))? = config;
        Ok(())
    })
}

/// Writes a checkpoint directory.
///
/// # Safety
/// `dir` is a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_save(handle: *const DsalLearner, dir: *const c_char) -> DsalStatus {
    guard(|| Ok(save_learner(&path(dir)?, learner(handle)?)?))
}

/// Restores a learner from a checkpoint directory into `*out`.
///
/// # Safety
/// `dir` is a NUL-terminated UTF-8 path; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_load(dir: *const c_char, out: *mut *mut DsalLearner) -> DsalStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let inner = load_learner(&path(dir)?)?;
        *out = Box::into_raw(Box::new(DsalLearner { inner }));
        Ok(())
    })
}

/// Releases a learner. Null is ignored.
///
/// # Safety
/// `handle` is null or a pointer from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsal_learner_free(handle: *mut DsalLearner) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Message of the last failed call on this thread, or null after a
/// successful one. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dsal_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Short static name for a status code.
#[no_mangle]
pub extern "C" fn dsal_status_name(status: DsalStatus) -> *const c_char {
    let name: &'static CStr = match status {
        DsalStatus::Ok => c"ok",
        DsalStatus::InvalidArgument => c"invalid argument",
        DsalStatus::NullPointer => c"null pointer",
        DsalStatus::Dimension => c"dimension mismatch",
        DsalStatus::ClassOverlap => c"class overlap",
        DsalStatus::UnknownLabel => c"unknown label",
        DsalStatus::Numerical => c"numerical failure",
        DsalStatus::Io => c"i/o error",
        DsalStatus::Format => c"malformed file",
        DsalStatus::BufferTooSmall => c"buffer too small",
        DsalStatus::Panic => c"internal panic",
    };
    name.as_ptr()
}
