//! C interface to `nystrom-erm`.
//!
//! Datasets and models are opaque handles owned by the caller and released
//! with `ny_dataset_free` / `ny_model_free`. Every function returns a
//! [`NyStatus`]; on failure `ny_last_error_message` describes the error for
//! the calling thread. Matrices are dense, row-major `f64`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use nalgebra::DMatrix;
use nystrom_erm::diagnostics::{effective_dim_2, effective_dim_inf};
use nystrom_erm::nystrom::DEFAULT_EIGEN_TOL;
use nystrom_erm::sampling::SamplingPlan;
use nystrom_erm::solver::StepSchedule;
use nystrom_erm::{
    exact_leverage_scores, load_libsvm, predict, train_model, Dataset, Error, KernelSpec,
    LossFamily, LossSpec, PipelineConfig, Points, SamplingMethod, TrainOptions, TrainedModel,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NyStatus {
    Ok = 0,
    InvalidInput = 1,
    Parse = 2,
    NumericalDomain = 3,
    Divergence = 4,
    InsufficientData = 5,
    Io = 6,
    Format = 7,
    NullPointer = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NyKernel {
    Gaussian = 0,
    Linear = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NySampling {
    Uniform = 0,
    Leverage = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NyLoss {
    Hinge = 0,
    Logistic = 1,
}

/// Training parameters. Fill with `ny_train_params_default` first.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NyTrainParams {
    pub kernel: NyKernel,
    /// Gaussian width.
    pub sigma: f64,
    pub lambda: f64,
    /// Number of landmarks.
    pub m: usize,
    pub sampling: NySampling,
    /// Ridge level for leverage scores; `<= 0` uses `lambda`.
    pub alpha: f64,
    /// Pilot landmarks for approximate scores; 0 uses `m`.
    pub pilot_size: usize,
    pub loss: NyLoss,
    /// Clipping level; `<= 0` uses the loss default.
    pub clip: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Return the averaged iterate.
    pub average: bool,
    /// Solve the norm-constrained problem when `> 0`.
    pub constrained_radius: f64,
}

/// Opaque labelled dataset.
pub struct NyDataset(Dataset);

/// Opaque trained model.
pub struct NyModel(TrainedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> NyStatus {
    match err {
        Error::InvalidInput(_) => NyStatus::InvalidInput,
        Error::Parse { .. } => NyStatus::Parse,
        Error::NumericalDomain(_) => NyStatus::NumericalDomain,
        Error::Divergence { .. } => NyStatus::Divergence,
        Error::InsufficientData(_) => NyStatus::InsufficientData,
        Error::Io(_) => NyStatus::Io,
        Error::Format(_) => NyStatus::Format,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NyStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NyStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            NyStatus::NullPointer
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            NyStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidInput("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn checked_len(n: usize, d: usize) -> Result<usize, Failure> {
    n.checked_mul(d)
        .ok_or_else(|| Failure::Lib(Error::InvalidInput("matrix size overflows".into())))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ny_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ny_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ny_dataset_load_libsvm(
    path: *const c_char,
    out: *mut *mut NyDataset,
) -> NyStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ds = load_libsvm(path_arg(path)?, None, None)?;
        *out = Box::into_raw(Box::new(NyDataset(ds)));
        Ok(())
    })
}

/// Dataset from `n x d` row-major features and `n` labels in {-1, +1}.
///
/// # Safety
/// `features` holds `n * d` values, `labels` holds `n`; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ny_dataset_from_dense(
    n: usize,
    d: usize,
    features: *const f64,
    labels: *const f64,
    out: *mut *mut NyDataset,
) -> NyStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let x = slice_arg(features, checked_len(n, d)?, "features")?;
        let y = slice_arg(labels, n, "labels")?;
        let ds = Dataset::new("ffi", Points::new(n, d, x.to_vec())?, y.to_vec())?;
        *out = Box::into_raw(Box::new(NyDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` is a live dataset handle; outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn ny_dataset_shape(ds: *const NyDataset, n: *mut usize, d: *mut usize) -> NyStatus {
    guard(|| {
        let ds = &non_null(ds, "dataset")?.0;
        *out_ptr(n, "n")? = ds.len();
        *out_ptr(d, "d")? = ds.dim();
        Ok(())
    })
}

/// # Safety
/// `ds` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ny_dataset_free(ds: *mut NyDataset) {
    if !ds.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(ds))));
    }
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ny_train_params_default(out: *mut NyTrainParams) -> NyStatus {
    guard(|| {
        let opts = TrainOptions::default();
        *out_ptr(out, "out")? = NyTrainParams {
            kernel: NyKernel::Gaussian,
            sigma: 1.0,
            lambda: 1e-4,
            m: 100,
            sampling: NySampling::Leverage,
            alpha: 0.0,
            pilot_size: 0,
            loss: NyLoss::Hinge,
            clip: 0.0,
            epochs: opts.epochs,
            seed: opts.seed,
            average: opts.average,
            constrained_radius: 0.0,
        };
        Ok(())
    })
}

fn pipeline_config(p: &NyTrainParams) -> Result<PipelineConfig, Error> {
    let kernel = match p.kernel {
        NyKernel::Gaussian => KernelSpec::gaussian(p.sigma)?,
        NyKernel::Linear => KernelSpec::Linear,
    };
    let family = match p.loss {
        NyLoss::Hinge => LossFamily::Hinge,
        NyLoss::Logistic => LossFamily::Logistic,
    };
    let loss = LossSpec::new(family, (p.clip > 0.0).then_some(p.clip))?;
    let constrained_radius = (p.constrained_radius > 0.0).then_some(p.constrained_radius);
    let schedule = if constrained_radius.is_some() {
        StepSchedule::InvSqrt { scale: None }
    } else {
        StepSchedule::Pegasos
    };
    Ok(PipelineConfig {
        kernel,
        loss,
        lambda: p.lambda,
        constrained_radius,
        sampling: SamplingPlan {
            method: match p.sampling {
                NySampling::Uniform => SamplingMethod::Uniform,
                NySampling::Leverage => SamplingMethod::Als,
            },
            m: p.m,
            alpha: if p.alpha > 0.0 { p.alpha } else { p.lambda },
            pilot_size: if p.pilot_size > 0 { p.pilot_size } else { p.m },
            seed: p.seed,
        },
        eigen_tol: DEFAULT_EIGEN_TOL,
        batch: None,
        train: TrainOptions {
            epochs: p.epochs,
            seed: p.seed,
            schedule,
            average: p.average,
            ..TrainOptions::default()
        },
    })
}

/// # Safety
/// `ds` is a live dataset handle, `params` is readable, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ny_train(
    ds: *const NyDataset,
    params: *const NyTrainParams,
    out: *mut *mut NyModel,
) -> NyStatus {
    guard(|| {
        let ds = &non_null(ds, "dataset")?.0;
        let params = non_null(params, "params")?;
        let out = out_ptr(out, "out")?;
        let model = train_model(ds, &pipeline_config(params)?)?;
        *out = Box::into_raw(Box::new(NyModel(model)));
        Ok(())
    })
}

/// Scores of `n x d` row-major points, clipped when `clip` is set.
///
/// # Safety
/// `features` holds `n * d` values and `scores` has room for `n`.
#[no_mangle]
pub unsafe extern "C" fn ny_model_predict(
    model: *const NyModel,
    n: usize,
    d: usize,
    features: *const f64,
    clip: bool,
    scores: *mut f64,
) -> NyStatus {
    guard(|| {
        let model = &non_null(model, "model")?.0;
        let x = slice_arg(features, checked_len(n, d)?, "features")?;
        let out = slice_out(scores, n, "scores")?;
        let s = predict(model, &Points::new(n, d, x.to_vec())?, clip)?;
        out.copy_from_slice(&s);
        Ok(())
    })
}

/// # Safety
/// `model` is a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ny_model_save(model: *const NyModel, path: *const c_char) -> NyStatus {
    guard(|| {
        let model = &non_null(model, "model")?.0;
        model.save(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ny_model_load(path: *const c_char, out: *mut *mut NyModel) -> NyStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = TrainedModel::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(NyModel(model)));
        Ok(())
    })
}

/// Embedding rank and expected input dimension.
///
/// # Safety
/// `model` is a live handle; outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn ny_model_shape(
    model: *const NyModel,
    rank: *mut usize,
    input_dim: *mut usize,
) -> NyStatus {
    guard(|| {
        let model = &non_null(model, "model")?.0;
        *out_ptr(rank, "rank")? = model.map.rank();
        *out_ptr(input_dim, "input_dim")? = model.map.input_dim();
        Ok(())
    })
}

/// # Safety
/// `model` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ny_model_free(model: *mut NyModel) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(model))));
    }
}

unsafe fn gram_arg(n: usize, gram: *const f64) -> Result<DMatrix<f64>, Failure> {
    let g = slice_arg(gram, checked_len(n, n)?, "gram")?;
    Ok(DMatrix::from_row_slice(n, n, g))
}

/// Exact ridge leverage scores of an `n x n` Gram matrix.
///
/// # Safety
/// `gram` holds `n * n` values and `scores` has room for `n`.
#[no_mangle]
pub unsafe extern "C" fn ny_leverage_scores(
    n: usize,
    gram: *const f64,
    alpha: f64,
    scores: *mut f64,
) -> NyStatus {
    guard(|| {
        let k = gram_arg(n, gram)?;
        let out = slice_out(scores, n, "scores")?;
        out.copy_from_slice(&exact_leverage_scores(&k, alpha)?.scores);
        Ok(())
    })
}

/// `d_{alpha,2}` and `d_{alpha,inf}` of an `n x n` Gram matrix.
///
/// # Safety
/// `gram` holds `n * n` values; outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn ny_effective_dimensions(
    n: usize,
    gram: *const f64,
    alpha: f64,
    d2: *mut f64,
    d_inf: *mut f64,
) -> NyStatus {
    guard(|| {
        let k = gram_arg(n, gram)?;
        let d2 = out_ptr(d2, "d2")?;
        let d_inf = out_ptr(d_inf, "d_inf")?;
        *d2 = effective_dim_2(&k, alpha)?;
        *d_inf = effective_dim_inf(&k, alpha)?;
        Ok(())
    })
}
