//! C ABI for the `homon` simulator.
//!
//! Every fallible function returns a [`HomonStatus`]; on failure the message
//! is available from [`homon_last_error`] on the same thread. Handles are
//! opaque, created by `*_load`/`*_new`/`homon_train` and released with the
//! matching `*_free`. Strings returned through out-pointers must be released
//! with [`homon_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use homon::error::Error;
use homon::grid::Grid;
use homon::ingest::{self, BinaryDataset, DatasetKind};
use homon::measurement::{self, MeasurementConfig};
use homon::model::{self, ActivationShape, Checkpoint, NetworkParams};
use homon::profiles;
use homon::training::{self, Preset, TrainConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HomonStatus {
    Ok = 0,
    /// A null pointer, non-UTF-8 string or out-of-range argument.
    InvalidArgument = 1,
    /// A file could not be read or written.
    Io = 2,
    /// An input file is not a valid IDX file.
    Format = 3,
    /// The requested split needs more images than the file holds.
    InsufficientSamples = 4,
    /// Array shapes do not agree.
    ShapeMismatch = 5,
    /// A checkpoint could not be parsed or is inconsistent.
    Parse = 6,
    /// A numerical precondition failed, e.g. an all-zero image.
    Numerical = 7,
    /// The library panicked; this is a bug.
    Internal = 8,
}

/// Dataset selector for [`homon_dataset_load`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HomonDatasetKind {
    Mnist = 0,
    Fashion = 1,
}

/// Binary-labelled image subset.
pub struct HomonDataset(BinaryDataset);

/// Trained network together with its activation shape.
pub struct HomonParams {
    params: NetworkParams,
    shape: ActivationShape,
}

/// Optimiser settings and network width.
pub struct HomonTrainConfig {
    config: TrainConfig,
    neurons: usize,
    noise: Option<MeasurementConfig>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HomonStatus {
    match e {
        Error::Io { .. } => HomonStatus::Io,
        Error::MagicMismatch { .. }
        | Error::TruncatedFile { .. }
        | Error::CountMismatch { .. }
        | Error::BadDimensions { .. } => HomonStatus::Format,
        Error::InsufficientSamples { .. } => HomonStatus::InsufficientSamples,
        Error::ShapeMismatch { .. } => HomonStatus::ShapeMismatch,
        Error::CheckpointParse(_) | Error::Json(_) | Error::Csv(_) => HomonStatus::Parse,
        Error::ZeroProfile | Error::ZeroReference | Error::AcquisitionEmpty => HomonStatus::Numerical,
        Error::Domain(_) | Error::InvalidConfig(_) => HomonStatus::InvalidArgument,
    }
}

enum Fail {
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HomonStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HomonStatus::Ok
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            HomonStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            HomonStatus::Internal
        }
    }
}

fn arg(msg: &str) -> Fail {
    Fail::Arg(msg.to_string())
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| arg(&format!("{name} is null")))
}

unsafe fn put<T>(out: *mut T, value: T, name: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(arg(&format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(arg(&format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| arg(&format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(arg(&format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn kind(k: HomonDatasetKind) -> DatasetKind {
    match k {
        HomonDatasetKind::Mnist => DatasetKind::Mnist,
        HomonDatasetKind::Fashion => DatasetKind::Fashion,
    }
}

/// Message for the most recent failure on this thread, or null after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn homon_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn homon_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a seeded train/test subset of two classes from `data_dir`.
///
/// # Safety
/// `data_dir` must be a NUL-terminated string; the out-pointers must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn homon_dataset_load(
    data_dir: *const c_char,
    dataset: HomonDatasetKind,
    class_a: u8,
    class_b: u8,
    n_train: usize,
    n_test: usize,
    seed: u64,
    out_train: *mut *mut HomonDataset,
    out_test: *mut *mut HomonDataset,
) -> HomonStatus {
    guard(|| {
        let dir = str_arg(data_dir, "data_dir")?;
        if out_train.is_null() || out_test.is_null() {
            return Err(arg("output pointer is null"));
        }
        if class_a == class_b || class_a > 9 || class_b > 9 {
            return Err(arg("classes must be distinct digits 0..=9"));
        }
        let (train, test) =
            ingest::load_binary(Path::new(dir), kind(dataset), (class_a, class_b), n_train, n_test, seed)?;
        put(out_train, Box::into_raw(Box::new(HomonDataset(train))), "out_train")?;
        put(out_test, Box::into_raw(Box::new(HomonDataset(test))), "out_test")
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn homon_dataset_len(ds: *const HomonDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Image side length, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn homon_dataset_resolution(ds: *const HomonDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.resolution)
}

/// Copies sample `index` (row-major, `resolution²` values) into `image` and
/// its 0/1 label into `label`.
///
/// # Safety
/// `image` must have room for `image_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn homon_dataset_sample(
    ds: *const HomonDataset,
    index: usize,
    image: *mut f64,
    image_len: usize,
    label: *mut u8,
) -> HomonStatus {
    guard(|| {
        let d = deref(ds, "dataset")?;
        let s = d.0.samples.get(index).ok_or_else(|| arg("index out of range"))?;
        let px = s.image.as_slice();
        if image.is_null() || image_len != px.len() {
            return Err(Fail::Lib(Error::ShapeMismatch {
                left: (image_len, 1),
                right: (px.len(), 1),
            }));
        }
        std::slice::from_raw_parts_mut(image, image_len).copy_from_slice(px);
        put(label, s.label, "label")
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn homon_dataset_free(ds: *mut HomonDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Creates a configuration from a named preset such as `table1-qon-mnist`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn homon_train_config_preset(
    name: *const c_char,
    out: *mut *mut HomonTrainConfig,
) -> HomonStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let p = Preset::by_name(name).ok_or_else(|| arg("unknown preset"))?;
        let cfg = HomonTrainConfig {
            config: p.config,
            neurons: p.neurons,
            noise: None,
        };
        put(out, Box::into_raw(Box::new(cfg)), "out")
    })
}

/// Creates the default configuration for `neurons` neurons on `dataset`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn homon_train_config_new(
    dataset: HomonDatasetKind,
    neurons: usize,
    epochs: usize,
    out: *mut *mut HomonTrainConfig,
) -> HomonStatus {
    guard(|| {
        if neurons == 0 {
            return Err(arg("neurons must be positive"));
        }
        let cfg = HomonTrainConfig {
            config: TrainConfig::reference(kind(dataset), neurons, epochs),
            neurons,
            noise: None,
        };
        put(out, Box::into_raw(Box::new(cfg)), "out")
    })
}

/// Sets the seed used for initialisation and readout noise.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn homon_train_config_set_seed(cfg: *mut HomonTrainConfig, seed: u64) -> HomonStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| arg("config is null"))?;
        c.config.seed = seed;
        if let Some(n) = &mut c.noise {
            n.seed = seed;
        }
        Ok(())
    })
}

/// Switches to photon-counting readout. A non-positive `mean_signal_cc`
/// restores exact visibilities.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn homon_train_config_set_noise(
    cfg: *mut HomonTrainConfig,
    mean_signal_cc: f64,
    eta_vis: f64,
    background_rate: f64,
) -> HomonStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| arg("config is null"))?;
        if mean_signal_cc <= 0.0 {
            c.noise = None;
            return Ok(());
        }
        let mut m = MeasurementConfig::new(mean_signal_cc, c.config.seed);
        m.eta_vis = eta_vis;
        m.background_rate = background_rate;
        m.validate()?;
        c.noise = Some(m);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn homon_train_config_free(cfg: *mut HomonTrainConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Trains a network and reports the final test accuracy.
///
/// # Safety
/// All handles must be live; `out_params` and `out_test_accuracy` writable.
#[no_mangle]
pub unsafe extern "C" fn homon_train(
    cfg: *const HomonTrainConfig,
    train: *const HomonDataset,
    test: *const HomonDataset,
    out_params: *mut *mut HomonParams,
    out_test_accuracy: *mut f64,
) -> HomonStatus {
    guard(|| {
        let c = deref(cfg, "config")?;
        let (tr, te) = (deref(train, "train")?, deref(test, "test")?);
        if out_params.is_null() || out_test_accuracy.is_null() {
            return Err(arg("output pointer is null"));
        }
        let (params, history) = training::train(&tr.0, &te.0, c.neurons, &c.config, c.noise)?;
        let acc = history.last().map_or(f64::NAN, |r| r.test_accuracy);
        put(out_test_accuracy, acc, "out_test_accuracy")?;
        let handle = HomonParams {
            params,
            shape: c.config.shape,
        };
        put(out_params, Box::into_raw(Box::new(handle)), "out_params")
    })
}

/// Number of neurons, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live parameter handle.
#[no_mangle]
pub unsafe extern "C" fn homon_params_neurons(p: *const HomonParams) -> usize {
    p.as_ref().map_or(0, |h| h.params.neurons())
}

/// Class-1 probability for one row-major `rows × cols` image.
///
/// # Safety
/// `image` must point to `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn homon_params_forward(
    p: *const HomonParams,
    image: *const f64,
    rows: usize,
    cols: usize,
    out_probability: *mut f64,
) -> HomonStatus {
    guard(|| {
        let h = deref(p, "params")?;
        let px = slice_arg(image, rows * cols, "image")?;
        let x = profiles::normalize(&Grid::from_vec(rows, cols, px.to_vec())?)?;
        let prob = model::forward(&x, &h.params, h.shape)?;
        put(out_probability, prob, "out_probability")
    })
}

/// Fills `out_counts` (4 values, row-major `[actual][predicted]`) with the
/// confusion matrix on `test`.
///
/// # Safety
/// `out_counts` must have room for 4 values.
#[no_mangle]
pub unsafe extern "C" fn homon_params_confusion(
    p: *const HomonParams,
    test: *const HomonDataset,
    out_counts: *mut u64,
) -> HomonStatus {
    guard(|| {
        let h = deref(p, "params")?;
        let t = deref(test, "test")?;
        if out_counts.is_null() {
            return Err(arg("out_counts is null"));
        }
        let c = training::confusion_matrix(&t.0, &h.params, h.shape)?;
        let flat = [c.counts[0][0], c.counts[0][1], c.counts[1][0], c.counts[1][1]];
        std::slice::from_raw_parts_mut(out_counts, 4).copy_from_slice(&flat);
        Ok(())
    })
}

/// Serialises parameters as checkpoint JSON; free with [`homon_string_free`].
///
/// # Safety
/// `p` must be live and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn homon_params_to_json(p: *const HomonParams, out_json: *mut *mut c_char) -> HomonStatus {
    guard(|| {
        let h = deref(p, "params")?;
        let json = Checkpoint::new(&h.params, h.shape).to_json()?;
        let c = CString::new(json).map_err(|_| arg("json contains NUL"))?;
        put(out_json, c.into_raw(), "out_json")
    })
}

/// Parses checkpoint JSON into a parameter handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn homon_params_from_json(json: *const c_char, out: *mut *mut HomonParams) -> HomonStatus {
    guard(|| {
        let s = str_arg(json, "json")?;
        let (params, shape) = Checkpoint::from_json(s)?.into_parts()?;
        put(out, Box::into_raw(Box::new(HomonParams { params, shape })), "out")
    })
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn homon_params_free(p: *mut HomonParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Ideal HOM visibility of two images after normalising each to unit norm.
///
/// # Safety
/// `a` and `b` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn homon_overlap(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> HomonStatus {
    guard(|| {
        let ga = Grid::from_vec(1, len, slice_arg(a, len, "a")?.to_vec())?;
        let gb = Grid::from_vec(1, len, slice_arg(b, len, "b")?.to_vec())?;
        let v = profiles::overlap(&profiles::normalize(&ga)?, &profiles::normalize(&gb)?)?;
        put(out, v, "out")
    })
}

/// Photons needed so a visibility estimate lies within `eps` of the truth
/// with probability at least `1 − delta`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn homon_hoeffding_shots(eps: f64, delta: f64, out: *mut u64) -> HomonStatus {
    guard(|| put(out, measurement::hoeffding_shots(eps, delta)?, "out"))
}
