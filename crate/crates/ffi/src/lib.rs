//! C interface to `pll-core`.
//!
//! Every object crosses the boundary as an opaque pointer created by a `pll_*_new`/`load`/`train`
//! function and released by the matching `pll_*_free`. Fallible calls return a [`PllStatus`] and
//! write their result through an out-pointer; the message of the last failure on the calling
//! thread is available from [`pll_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pll_core::data::{corrupt_uniform, load_csv, CsvSchema, PllDataset, SplitTag};
use pll_core::dirichlet::{kl_dirichlet_to_prior, DirichletParams, DirichletPrior};
use pll_core::models::ModelBundle;
use pll_core::numeric::{Matrix, RngState, Stream};
use pll_core::trainer::{self, TrainConfig};
use pll_core::PllError;
use thiserror::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PllStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    NonFinite = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[derive(Debug, Error)]
enum FfiError {
    #[error("null pointer passed as {0}")]
    Null(&'static str),
    #[error("{0} is not valid UTF-8")]
    Utf8(&'static str),
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("buffer holds {got} values, {need} needed")]
    Buffer { need: usize, got: usize },
    #[error(transparent)]
    Core(#[from] PllError),
}

impl FfiError {
    fn status(&self) -> PllStatus {
        match self {
            FfiError::Null(_) => PllStatus::NullPointer,
            FfiError::Utf8(_) => PllStatus::InvalidString,
            FfiError::UnknownKey(_) => PllStatus::InvalidArgument,
            FfiError::Buffer { .. } => PllStatus::BufferTooSmall,
            FfiError::Core(e) => match e {
                PllError::Io { .. } => PllStatus::Io,
                PllError::Parse { .. } | PllError::Json(_) => PllStatus::Parse,
                PllError::NonFinite(_) => PllStatus::NonFinite,
                _ => PllStatus::InvalidArgument,
            },
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> PllStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PllStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(e.to_string());
            e.status()
        }
        Err(_) => {
            set_last_error("internal panic".into());
            PllStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, FfiError> {
    if p.is_null() {
        return Err(FfiError::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| FfiError::Utf8(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, FfiError> {
    p.as_ref().ok_or(FfiError::Null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> Result<(), FfiError> {
    if out.is_null() {
        return Err(FfiError::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn free_box<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// A feature matrix with candidate sets and optional true labels.
pub struct PllDatasetHandle(PllDataset);

/// Training hyper-parameters.
pub struct PllConfigHandle(TrainConfig);

/// The three trained networks.
pub struct PllModelHandle {
    bundle: ModelBundle,
    seed: u64,
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn pll_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pll_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset CSV (`f0..,candidates[,true]`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pll_dataset_load(
    path: *const c_char,
    standardize: bool,
    out: *mut *mut PllDatasetHandle,
) -> PllStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let schema = CsvSchema {
            standardize,
            class_count: None,
            split: SplitTag::Train,
        };
        let d = load_csv(&path, &schema)?;
        put(out, Box::into_raw(Box::new(PllDatasetHandle(d))), "out")
    })
}

/// # Safety
/// `ds` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pll_dataset_free(ds: *mut PllDatasetHandle) {
    free_box(ds);
}

/// Writes rows, features and classes; any of the out-pointers may be null.
///
/// # Safety
/// `ds` must be a live handle; non-null out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pll_dataset_shape(
    ds: *const PllDatasetHandle,
    rows: *mut usize,
    features: *mut usize,
    classes: *mut usize,
) -> PllStatus {
    guard(|| {
        let d = &ref_arg(ds, "dataset")?.0;
        for (p, v) in [(rows, d.len()), (features, d.num_features()), (classes, d.num_classes())] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Uniform candidate corruption of a dataset with true labels, as a new handle.
///
/// # Safety
/// `ds` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pll_dataset_corrupt_uniform(
    ds: *const PllDatasetHandle,
    xi: f64,
    seed: u64,
    out: *mut *mut PllDatasetHandle,
) -> PllStatus {
    guard(|| {
        let d = &ref_arg(ds, "dataset")?.0;
        let mut rng = RngState::stream(seed, Stream::Corruption);
        let (noisy, _) = corrupt_uniform(d, xi, &mut rng)?;
        put(out, Box::into_raw(Box::new(PllDatasetHandle(noisy))), "out")
    })
}

/// Default training configuration.
#[no_mangle]
pub extern "C" fn pll_config_new() -> *mut PllConfigHandle {
    Box::into_raw(Box::new(PllConfigHandle(TrainConfig::default())))
}

/// # Safety
/// `cfg` must come from [`pll_config_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pll_config_free(cfg: *mut PllConfigHandle) {
    free_box(cfg);
}

/// Sets one numeric field. Keys: `seed`, `total_epochs`, `warmup_epochs`, `batch_size`, `k`,
/// `mc_samples`, `lambda`, `epsilon`, `lr`, `weight_decay` (the last two apply to all three models).
///
/// # Safety
/// `cfg` must be a live handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pll_config_set(cfg: *mut PllConfigHandle, key: *const c_char, value: f64) -> PllStatus {
    guard(|| {
        let c = &mut cfg.as_mut().ok_or(FfiError::Null("config"))?.0;
        let key = str_arg(key, "key")?;
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(PllError::Config(format!("{key} must be a non-negative integer, got {value}")))
            }
        };
        match key {
            "seed" => c.seed = count()? as u64,
            "total_epochs" => c.total_epochs = count()?,
            "warmup_epochs" => c.warmup_epochs = count()?,
            "batch_size" => c.batch_size = count()?,
            "k" => c.k = count()?,
            "mc_samples" => c.mc_samples = count()?,
            "lambda" => c.lambda = value,
            "epsilon" => c.epsilon = value,
            "lr" => {
                for o in [&mut c.predictive, &mut c.inference, &mut c.observation] {
                    o.lr = value;
                }
            }
            "weight_decay" => {
                for o in [&mut c.predictive, &mut c.inference, &mut c.observation] {
                    o.weight_decay = value;
                }
            }
            other => return Err(FfiError::UnknownKey(other.into())),
        }
        Ok(())
    })
}

/// Trains on `train`, with label enhancement unless `ablate_no_le`.
///
/// # Safety
/// `train` and `cfg` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pll_train(
    train: *const PllDatasetHandle,
    cfg: *const PllConfigHandle,
    ablate_no_le: bool,
    out: *mut *mut PllModelHandle,
) -> PllStatus {
    guard(|| {
        let d = &ref_arg(train, "train")?.0;
        let c = &ref_arg(cfg, "config")?.0;
        let outcome = if ablate_no_le {
            trainer::ablate_no_le(d, None, c)?
        } else {
            trainer::fit(d, None, c)?
        };
        let model = PllModelHandle {
            bundle: outcome.state.bundle,
            seed: c.seed,
        };
        put(out, Box::into_raw(Box::new(model)), "out")
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pll_model_free(model: *mut PllModelHandle) {
    free_box(model);
}

/// Saves `models.bin` and `models.json` into an existing directory.
///
/// # Safety
/// `model` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pll_model_save(model: *const PllModelHandle, dir: *const c_char) -> PllStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        Ok(m.bundle.save(&dir, m.seed)?)
    })
}

/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pll_model_load(dir: *const c_char, out: *mut *mut PllModelHandle) -> PllStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        let (bundle, manifest) = ModelBundle::load(&dir)?;
        let model = PllModelHandle {
            bundle,
            seed: manifest.seed,
        };
        put(out, Box::into_raw(Box::new(model)), "out")
    })
}

/// Writes class probabilities row-major into `buf`, which must hold rows × classes values.
///
/// # Safety
/// `model` and `ds` must be live handles and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pll_model_predict(
    model: *const PllModelHandle,
    ds: *const PllDatasetHandle,
    buf: *mut f64,
    len: usize,
) -> PllStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let d = &ref_arg(ds, "dataset")?.0;
        let probs = m.bundle.predictive.predict(d.features())?;
        let need = probs.as_slice().len();
        if buf.is_null() {
            return Err(FfiError::Null("buf"));
        }
        if len < need {
            return Err(FfiError::Buffer { need, got: len });
        }
        std::slice::from_raw_parts_mut(buf, need).copy_from_slice(probs.as_slice());
        Ok(())
    })
}

/// Accuracy against the true labels of `ds`.
///
/// # Safety
/// `model` and `ds` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pll_model_accuracy(
    model: *const PllModelHandle,
    ds: *const PllDatasetHandle,
    out: *mut f64,
) -> PllStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let d = &ref_arg(ds, "dataset")?.0;
        let acc = trainer::evaluate(&m.bundle.predictive, d)?;
        put(out, acc, "out")
    })
}

/// KL divergence from `Dir(alpha)` to the symmetric `Dir(epsilon)`.
///
/// # Safety
/// `alpha` must point to `len` readable doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pll_kl_dirichlet(alpha: *const f64, len: usize, epsilon: f64, out: *mut f64) -> PllStatus {
    guard(|| {
        if alpha.is_null() {
            return Err(FfiError::Null("alpha"));
        }
        let a = std::slice::from_raw_parts(alpha, len);
        let params = DirichletParams::new(Matrix::row_vector(a))?;
        let kl = kl_dirichlet_to_prior(&params, &DirichletPrior::new(epsilon)?);
        put(out, kl, "out")
    })
}
