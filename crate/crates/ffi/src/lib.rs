//! C interface to `ugmcs`.
//!
//! Datasets and networks cross the boundary as opaque handles created and
//! destroyed by this library. Every fallible call returns a [`UgmcsStatus`];
//! on failure the message is kept per thread and read back with
//! [`ugmcs_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ugmcs::dataio::{load_manifest, save_manifest, synth_generate, NoduleSample, MANIFEST_FILE};
use ugmcs::evalharness::{predict, score_samples, EvalConfig};
use ugmcs::maskops::Mask;
use ugmcs::metrics::{mean, MetricsRecord};
use ugmcs::model::{net_forward, otsu_threshold, NetState, Tensor};
use ugmcs::runconfig::RunConfig;
use ugmcs::trainer::{fit, FitSpec, TrainSet};
use ugmcs::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UgmcsStatus {
    Ok = 0,
    InvalidInput = 1,
    Degenerate = 2,
    NumericFault = 3,
    Config = 4,
    Data = 5,
    Io = 6,
    NullPointer = 7,
    Panic = 8,
}

impl From<&Error> for UgmcsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => Self::InvalidInput,
            Error::Degenerate(_) => Self::Degenerate,
            Error::NumericFault(_) => Self::NumericFault,
            Error::Config(_) => Self::Config,
            Error::Data(_) => Self::Data,
            Error::Io { .. } => Self::Io,
        }
    }
}

/// Samples loaded from a manifest or generated synthetically.
pub struct UgmcsDataset {
    samples: Vec<NoduleSample>,
}

/// Network configuration and parameters.
pub struct UgmcsNet {
    state: NetState,
}

/// Mean segmentation metrics over a dataset.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UgmcsScores {
    pub dsc: f64,
    pub iou: f64,
    pub nsd: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> UgmcsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UgmcsStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            let status = UgmcsStatus::from(&e);
            set_error(e.to_string());
            status
        }
        Ok(Err(Fail::Null(name))) => {
            set_error(format!("{name} is null"));
            UgmcsStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            UgmcsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

unsafe fn as_str<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidInput(format!("{name} is not UTF-8"))))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut T, value: T, name: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(name));
    }
    out.write(value);
    Ok(())
}

fn sample(ds: &UgmcsDataset, index: usize) -> Result<&NoduleSample, Fail> {
    ds.samples.get(index).ok_or_else(|| {
        Fail::Lib(Error::InvalidInput(format!(
            "sample index {index} out of range for {} samples",
            ds.samples.len()
        )))
    })
}

fn parse_config(json: &str) -> Result<RunConfig, Fail> {
    let c = RunConfig::from_json(json)?;
    c.validate()?;
    Ok(c)
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ugmcs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Process exit code the command-line tool uses for `status`.
#[no_mangle]
pub extern "C" fn ugmcs_status_exit_code(status: UgmcsStatus) -> i32 {
    match status {
        UgmcsStatus::Ok => 0,
        UgmcsStatus::InvalidInput | UgmcsStatus::Config | UgmcsStatus::NullPointer => 2,
        UgmcsStatus::Degenerate | UgmcsStatus::Data | UgmcsStatus::Io => 3,
        UgmcsStatus::NumericFault | UgmcsStatus::Panic => 4,
    }
}

/// Generates `count` synthetic samples with `annotators` masks each.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_dataset_synth(
    count: usize,
    annotators: usize,
    seed: u64,
    out: *mut *mut UgmcsDataset,
) -> UgmcsStatus {
    guard(|| {
        let samples = synth_generate(count, annotators, seed)?;
        put(out, Box::into_raw(Box::new(UgmcsDataset { samples })), "out")
    })
}

/// Loads a manifest file or a directory containing `manifest.json`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_dataset_load(path: *const c_char, out: *mut *mut UgmcsDataset) -> UgmcsStatus {
    guard(|| {
        let mut p = PathBuf::from(as_str(path, "path")?);
        if p.is_dir() {
            p.push(MANIFEST_FILE);
        }
        let samples = load_manifest(&p)?;
        put(out, Box::into_raw(Box::new(UgmcsDataset { samples })), "out")
    })
}

/// Writes the dataset as a manifest directory.
///
/// # Safety
/// `ds` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_dataset_save(ds: *const UgmcsDataset, dir: *const c_char) -> UgmcsStatus {
    guard(|| {
        let ds = as_ref(ds, "ds")?;
        save_manifest(&ds.samples, as_str(dir, "dir")?.as_ref())?;
        Ok(())
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_dataset_len(ds: *const UgmcsDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.samples.len())
}

/// Patch height, width and annotation count of sample `index`.
///
/// # Safety
/// `ds` must be a live handle; the out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_dataset_sample_shape(
    ds: *const UgmcsDataset,
    index: usize,
    height: *mut usize,
    width: *mut usize,
    annotators: *mut usize,
) -> UgmcsStatus {
    guard(|| {
        let s = sample(as_ref(ds, "ds")?, index)?;
        let (h, w) = s.hu_patch.shape();
        put(height, h, "height")?;
        put(width, w, "width")?;
        put(annotators, s.annotations.len(), "annotators")
    })
}

/// Copies annotation `annotation` of sample `index` into `out` (`len` = height·width bytes, 0/1).
///
/// # Safety
/// `ds` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_dataset_annotation(
    ds: *const UgmcsDataset,
    index: usize,
    annotation: usize,
    out: *mut u8,
    len: usize,
) -> UgmcsStatus {
    guard(|| {
        let s = sample(as_ref(ds, "ds")?, index)?;
        let m = s.annotations.masks().get(annotation).ok_or_else(|| {
            Error::InvalidInput(format!("annotation {annotation} out of range for {}", s.annotations.len()))
        })?;
        copy_mask(m, out, len)
    })
}

unsafe fn copy_mask(m: &Mask, out: *mut u8, len: usize) -> Result<(), Fail> {
    if len != m.data().len() {
        return Err(Error::InvalidInput(format!("buffer holds {len} bytes, mask has {}", m.data().len())).into());
    }
    slice_mut(out, len, "out")?.copy_from_slice(m.data());
    Ok(())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_dataset_free(ds: *mut UgmcsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Initializes a network from the `net` section of a run-config JSON
/// document; null `config_json` selects the default architecture.
///
/// # Safety
/// `config_json` must be null or NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_net_init(config_json: *const c_char, seed: u64, out: *mut *mut UgmcsNet) -> UgmcsStatus {
    guard(|| {
        let c = if config_json.is_null() {
            RunConfig::default()
        } else {
            parse_config(as_str(config_json, "config_json")?)?
        };
        let state = NetState::init(&c.net, seed)?;
        put(out, Box::into_raw(Box::new(UgmcsNet { state })), "out")
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_net_load(path: *const c_char, out: *mut *mut UgmcsNet) -> UgmcsStatus {
    guard(|| {
        let state = NetState::load(as_str(path, "path")?.as_ref(), None)?;
        put(out, Box::into_raw(Box::new(UgmcsNet { state })), "out")
    })
}

/// # Safety
/// `net` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_net_save(net: *const UgmcsNet, path: *const c_char) -> UgmcsStatus {
    guard(|| {
        as_ref(net, "net")?.state.save(as_str(path, "path")?.as_ref())?;
        Ok(())
    })
}

/// Input side length the network expects.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_net_input_size(net: *const UgmcsNet) -> usize {
    net.as_ref().map_or(0, |n| n.state.config().input_size)
}

/// Number of learnable scalars.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_net_num_params(net: *const UgmcsNet) -> usize {
    net.as_ref().map_or(0, |n| n.state.num_scalars())
}

/// Trains a network on every sample of `ds` using the run-config JSON
/// document `config_json` (its `net`, `train` and `loss` sections).
///
/// # Safety
/// `ds` must be a live handle, `config_json` NUL-terminated, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_net_train(
    ds: *const UgmcsDataset,
    config_json: *const c_char,
    out: *mut *mut UgmcsNet,
) -> UgmcsStatus {
    guard(|| {
        let ds = as_ref(ds, "ds")?;
        let c = parse_config(as_str(config_json, "config_json")?)?;
        let spec = FitSpec {
            net: &c.net,
            train: &c.train,
            loss: &c.loss,
            eval: &c.eval,
            out_dir: None,
            tag: "all",
        };
        let outcome = fit(&ds.samples, TrainSet::All, &spec)?;
        put(out, Box::into_raw(Box::new(UgmcsNet { state: outcome.final_state })), "out")
    })
}

/// Runs the network on a normalized `channels × size × size` image
/// (`image_len` values, channel-major) and writes the segmentation
/// probabilities `X_S` (`size × size` values) into `out`.
///
/// # Safety
/// `net` must be a live handle; `image` readable for `image_len` values and
/// `out` writable for `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_net_forward(
    net: *const UgmcsNet,
    image: *const f64,
    image_len: usize,
    out: *mut f64,
    out_len: usize,
) -> UgmcsStatus {
    guard(|| {
        let state = &as_ref(net, "net")?.state;
        let cfg = state.config();
        let s = cfg.input_size;
        let expected = cfg.in_channels * s * s;
        if image_len != expected || out_len != s * s {
            return Err(Error::InvalidInput(format!(
                "expected {expected} input and {} output values, got {image_len} and {out_len}",
                s * s
            ))
            .into());
        }
        let x = Tensor::from_vec(cfg.in_channels, s, s, slice(image, image_len, "image")?.to_vec());
        let y = net_forward(state, &x)?;
        slice_mut(out, out_len, "out")?.copy_from_slice(&y.x_s.data);
        Ok(())
    })
}

/// Binary segmentation of sample `index` at its native resolution
/// (`len` = height·width bytes, 0/1).
///
/// # Safety
/// `net` and `ds` must be live handles; `out` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_net_predict(
    net: *const UgmcsNet,
    ds: *const UgmcsDataset,
    index: usize,
    out: *mut u8,
    len: usize,
) -> UgmcsStatus {
    guard(|| {
        let state = &as_ref(net, "net")?.state;
        let s = sample(as_ref(ds, "ds")?, index)?;
        copy_mask(&predict(state, s)?.segmentation, out, len)
    })
}

/// Mean DSC, IoU and NSD of the network over `ds` against annotation `annotation`.
///
/// # Safety
/// `net` and `ds` must be live handles; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_net_score(
    net: *const UgmcsNet,
    ds: *const UgmcsDataset,
    annotation: usize,
    nsd_tolerance: f64,
    out: *mut UgmcsScores,
) -> UgmcsStatus {
    guard(|| {
        let state = &as_ref(net, "net")?.state;
        let ds = as_ref(ds, "ds")?;
        let eval = EvalConfig { annotation, nsd_tolerance };
        eval.validate()?;
        let rows = score_samples(state, &ds.samples.iter().collect::<Vec<_>>(), &eval)?;
        let col = |f: fn(&MetricsRecord) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>());
        put(
            out,
            UgmcsScores {
                dsc: col(|r| r.dsc),
                iou: col(|r| r.iou),
                nsd: col(|r| r.nsd),
            },
            "out",
        )
    })
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_net_free(net: *mut UgmcsNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// DSC, IoU and NSD of two `height × width` binary masks (bytes 0/1).
///
/// # Safety
/// `pred` and `gt` must be readable for `height·width` bytes; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_metrics(
    pred: *const u8,
    gt: *const u8,
    height: usize,
    width: usize,
    nsd_tolerance: f64,
    out: *mut UgmcsScores,
) -> UgmcsStatus {
    guard(|| {
        let n = height * width;
        let p = Mask::new(height, width, slice(pred, n, "pred")?.to_vec())?;
        let g = Mask::new(height, width, slice(gt, n, "gt")?.to_vec())?;
        let r = MetricsRecord::compute("", &p, &g, nsd_tolerance)?;
        put(
            out,
            UgmcsScores {
                dsc: r.dsc,
                iou: r.iou,
                nsd: r.nsd,
            },
            "out",
        )
    })
}

/// Otsu threshold of `len` values over a `bins`-bin histogram.
///
/// # Safety
/// `values` must be readable for `len` values; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ugmcs_otsu_threshold(values: *const f64, len: usize, bins: usize, out: *mut f64) -> UgmcsStatus {
    guard(|| {
        let t = otsu_threshold(slice(values, len, "values")?, bins)?;
        put(out, t, "out")
    })
}
