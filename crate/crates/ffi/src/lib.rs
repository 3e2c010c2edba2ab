//! C interface to `ummu-core`.
//!
//! Every fallible function returns a [`UmmuStatus`]. On failure the message
//! is kept per thread and can be read with [`ummu_last_error`]. Objects cross
//! the boundary as opaque handles that the caller frees with the matching
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use libc::{c_char, size_t};
use ummu_core::cli::{cmd_eval, cmd_train, RunConfig};
use ummu_core::evalmetrics::{self, CandidateSet};
use ummu_core::numcore::{Rng, Tensor};
use ummu_core::synthgen::{generate, SynthSpec};
use ummu_core::tgraph::{load_events, EventStream};
use ummu_core::ummu::{ummu_apply, Mode, UmmuConfig, Variant};
use ummu_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmmuStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Parse = 4,
    Config = 5,
    Data = 6,
    Io = 7,
    IncompatibleCheckpoint = 8,
    Training = 9,
    Panic = 10,
}

pub const UMMU_VARIANT_FULL: u32 = 0;
pub const UMMU_VARIANT_NO_U: u32 = 1;
pub const UMMU_VARIANT_NO_MMU: u32 = 2;
pub const UMMU_VARIANT_NO_M: u32 = 3;

/// Augmentation settings; `variant` is one of the `UMMU_VARIANT_*` values.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct UmmuAugmentConfig {
    pub alpha: f64,
    pub apply_prob: f64,
    pub sigma_floor: f64,
    pub variant: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct UmmuSynthSpec {
    pub n_src: size_t,
    pub n_dst: size_t,
    pub n_events: size_t,
    pub feature_dim: size_t,
    pub n_regimes: size_t,
    pub drift_rate: f64,
    pub noise_std: f64,
    pub seed: u64,
}

/// Opaque seeded random stream.
pub struct UmmuRng(Rng);

/// Opaque time-sorted event stream.
pub struct UmmuEventStream(EventStream);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> UmmuStatus {
    match e {
        Error::Dimension { .. } | Error::Contract(_) => UmmuStatus::InvalidArgument,
        Error::Domain(_) => UmmuStatus::Domain,
        Error::Parse { .. } | Error::Format(_) => UmmuStatus::Parse,
        Error::Config(_) => UmmuStatus::Config,
        Error::Data(_) => UmmuStatus::Data,
        Error::Io { .. } => UmmuStatus::Io,
        Error::IncompatibleCheckpoint(_) => UmmuStatus::IncompatibleCheckpoint,
        Error::Training(_) => UmmuStatus::Training,
    }
}

struct Failure(UmmuStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(UmmuStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UmmuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UmmuStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            UmmuStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(UmmuStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ummu_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Creates the named sub-stream of `seed` (for example "augment").
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ummu_rng_new(seed: u64, name: *const c_char, out: *mut *mut UmmuRng) -> UmmuStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let handle = Box::into_raw(Box::new(UmmuRng(Rng::stream(seed, name))));
        write_out(out, handle, "out").inspect_err(|_| drop(Box::from_raw(handle)))
    })
}

/// # Safety
/// `rng` must come from [`ummu_rng_new`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ummu_rng_free(rng: *mut UmmuRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

fn variant_of(code: u32) -> Result<Variant, Failure> {
    match code {
        UMMU_VARIANT_FULL => Ok(Variant::Full),
        UMMU_VARIANT_NO_U => Ok(Variant::NoU),
        UMMU_VARIANT_NO_MMU => Ok(Variant::NoMmU),
        UMMU_VARIANT_NO_M => Ok(Variant::NoM),
        other => Err(Failure(UmmuStatus::InvalidArgument, format!("unknown variant code {other}"))),
    }
}

/// Training-mode augmentation of a row-major `rows x cols` batch. `z_out`
/// may alias `z_in`.
///
/// # Safety
/// `z_in` and `z_out` must each hold `rows * cols` doubles; `rng` and
/// `config` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ummu_augment(
    rng: *mut UmmuRng,
    config: *const UmmuAugmentConfig,
    z_in: *const f64,
    rows: size_t,
    cols: size_t,
    z_out: *mut f64,
) -> UmmuStatus {
    guard(|| {
        let rng = rng.as_mut().ok_or_else(|| null("rng"))?;
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        if z_out.is_null() {
            return Err(null("z_out"));
        }
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(UmmuStatus::InvalidArgument, "rows * cols overflows".into()))?;
        let z = Tensor::new(rows, cols, slice_arg(z_in, n, "z_in")?.to_vec())?;
        let variant = variant_of(c.variant)?;
        let cfg = UmmuConfig {
            alpha: c.alpha,
            apply_prob: c.apply_prob,
            sigma_floor: c.sigma_floor,
            variant,
            ..Default::default()
        };
        cfg.validate()?;
        let out = ummu_apply(&z, &mut rng.0, &cfg, Mode::Train, variant)?;
        std::ptr::copy(out.data().as_ptr(), z_out, n);
        Ok(())
    })
}

/// Average precision of `n` scores with 0/1 `labels`.
///
/// # Safety
/// `scores` and `labels` must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ummu_average_precision(
    scores: *const f64,
    labels: *const u8,
    n: size_t,
    out: *mut f64,
) -> UmmuStatus {
    guard(|| {
        let scores = slice_arg(scores, n, "scores")?;
        let labels: Vec<bool> = slice_arg(labels, n, "labels")?.iter().map(|&l| l != 0).collect();
        write_out(out, evalmetrics::average_precision(scores, &labels)?, "out")
    })
}

/// Mean reciprocal rank over `n_sets` candidate sets, each one positive
/// score and `k_neg` negatives stored row-major in `negatives`.
///
/// # Safety
/// `positives` must hold `n_sets` doubles and `negatives` `n_sets * k_neg`.
#[no_mangle]
pub unsafe extern "C" fn ummu_mrr(
    positives: *const f64,
    negatives: *const f64,
    n_sets: size_t,
    k_neg: size_t,
    out: *mut f64,
) -> UmmuStatus {
    guard(|| {
        let pos = slice_arg(positives, n_sets, "positives")?;
        let total = n_sets
            .checked_mul(k_neg)
            .ok_or_else(|| Failure(UmmuStatus::InvalidArgument, "n_sets * k_neg overflows".into()))?;
        let neg = slice_arg(negatives, total, "negatives")?;
        let sets: Vec<CandidateSet> = pos
            .iter()
            .enumerate()
            .map(|(i, &p)| CandidateSet {
                positive: p,
                negatives: neg[i * k_neg..(i + 1) * k_neg].to_vec(),
                t: i as f64,
            })
            .collect();
        write_out(out, evalmetrics::mrr(&sets)?, "out")
    })
}

/// Loads an event CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ummu_stream_load(path: *const c_char, out: *mut *mut UmmuEventStream) -> UmmuStatus {
    guard(|| {
        let stream = load_events(str_arg(path, "path")?)?;
        let handle = Box::into_raw(Box::new(UmmuEventStream(stream)));
        write_out(out, handle, "out").inspect_err(|_| drop(Box::from_raw(handle)))
    })
}

/// Generates a synthetic drifting stream.
///
/// # Safety
/// `spec` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ummu_stream_synth(
    spec: *const UmmuSynthSpec,
    out: *mut *mut UmmuEventStream,
) -> UmmuStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| null("spec"))?;
        let stream = generate(&SynthSpec {
            n_src: s.n_src,
            n_dst: s.n_dst,
            n_events: s.n_events,
            feature_dim: s.feature_dim,
            n_regimes: s.n_regimes,
            drift_rate: s.drift_rate,
            noise_std: s.noise_std,
            seed: s.seed,
        })?;
        let handle = Box::into_raw(Box::new(UmmuEventStream(stream)));
        write_out(out, handle, "out").inspect_err(|_| drop(Box::from_raw(handle)))
    })
}

/// Default generator settings.
#[no_mangle]
pub extern "C" fn ummu_synth_spec_default() -> UmmuSynthSpec {
    let s = SynthSpec::default();
    UmmuSynthSpec {
        n_src: s.n_src,
        n_dst: s.n_dst,
        n_events: s.n_events,
        feature_dim: s.feature_dim,
        n_regimes: s.n_regimes,
        drift_rate: s.drift_rate,
        noise_std: s.noise_std,
        seed: s.seed,
    }
}

/// Number of events, or 0 for NULL.
///
/// # Safety
/// `stream` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ummu_stream_len(stream: *const UmmuEventStream) -> size_t {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// Feature dimension, or 0 for NULL.
///
/// # Safety
/// `stream` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ummu_stream_feature_dim(stream: *const UmmuEventStream) -> size_t {
    stream.as_ref().map_or(0, |s| s.0.feature_dim())
}

/// # Safety
/// `stream` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ummu_stream_free(stream: *mut UmmuEventStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

unsafe fn run_config(config_path: *const c_char, out_dir: *const c_char) -> Result<RunConfig, Failure> {
    let mut cfg = if config_path.is_null() {
        RunConfig::default()
    } else {
        RunConfig::from_file(str_arg(config_path, "config_path")?.as_ref())?
    };
    cfg.out = PathBuf::from(str_arg(out_dir, "out_dir")?);
    Ok(cfg)
}

/// Same as `ummu train --config <config_path> --out <out_dir>`. A NULL
/// `config_path` uses the defaults.
///
/// # Safety
/// Both arguments must be NULL or NUL-terminated strings; `out_dir` is required.
#[no_mangle]
pub unsafe extern "C" fn ummu_train(config_path: *const c_char, out_dir: *const c_char) -> UmmuStatus {
    guard(|| {
        cmd_train(&run_config(config_path, out_dir)?)?;
        Ok(())
    })
}

/// Same as `ummu eval`; writes the report files into `out_dir` and stores
/// overall test AP and MRR in `ap` and `mrr` when they are not NULL.
///
/// # Safety
/// String arguments must be NUL-terminated; `ap` and `mrr` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ummu_eval(
    config_path: *const c_char,
    out_dir: *const c_char,
    checkpoint: *const c_char,
    ap: *mut f64,
    mrr: *mut f64,
) -> UmmuStatus {
    guard(|| {
        let cfg = run_config(config_path, out_dir)?;
        let report = cmd_eval(&cfg, str_arg(checkpoint, "checkpoint")?.as_ref())?;
        if !ap.is_null() {
            ap.write(report.ap);
        }
        if !mrr.is_null() {
            mrr.write(report.mrr);
        }
        Ok(())
    })
}
