//! C ABI over `pleth-core`.
//!
//! Every fallible function returns a [`PlethStatus`]; on anything other than
//! `PLETH_STATUS_OK` the thread's last error message describes the failure
//! and output parameters are left untouched. Handles are opaque and owned by
//! the caller until passed to the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pleth_core::database::BreathRow;
use pleth_core::entropy::{approx_entropy, MAX_EMBEDDING};
use pleth_core::error::Error;
use pleth_core::pipeline::{process_recording, PipelineConfig};
use pleth_core::preprocess::{sap_filter_in_place, SapAlignment, SapOptions};
use pleth_core::segmentation::{Downsample, MinDeviationRule, SegmentationConfig, PADDED_LEN};
use pleth_core::signal_io::{read_channel, Activity, Gene, Recording, SubjectLabels};
use pleth_core::stats_compare::{ks_two_sample, t_two_sample, TTestKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlethStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    ChannelNotFound = 4,
    Truncated = 5,
    InsufficientData = 6,
    Range = 7,
    Utf8 = 8,
    /// A Rust panic was caught at the boundary.
    Internal = 9,
}

/// Opaque single-channel recording.
pub struct PlethRecording {
    inner: Recording,
}

/// Opaque list of segmented breaths with their metrics.
pub struct PlethBreaths {
    rows: Vec<BreathRow>,
}

/// Processing parameters. Obtain defaults from [`pleth_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlethConfig {
    pub sap_threshold: f64,
    pub sap_symmetric: bool,
    /// Test `s[i+1] - s[i]` instead of `s[i] - s[i-1]`.
    pub sap_outgoing: bool,
    pub duration_min_s: f64,
    /// When true `min_dev_value` is the level itself; otherwise the level is
    /// `-min_dev_value * std(signal)`.
    pub min_dev_absolute: bool,
    pub min_dev_value: f64,
    /// Average blocks of ten samples instead of keeping every tenth.
    pub downsample_block_mean: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlethBreathInfo {
    pub breath_number: usize,
    pub start_time_s: f64,
    pub end_time_s: f64,
    pub native_length: usize,
    pub duration_s: f64,
    pub ti_s: f64,
    pub te_s: f64,
    pub tr_s: f64,
    pub pip: f64,
    pub pep: f64,
    pub pause: f64,
    pub penh: f64,
    /// `ApEn(m)` for m = 0..4; NaN when the breath was too short.
    pub entropy: [f64; 5],
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> PlethStatus {
    match err {
        Error::Format { .. } => PlethStatus::Format,
        Error::ChannelNotFound(_) => PlethStatus::ChannelNotFound,
        Error::Truncated { .. } => PlethStatus::Truncated,
        Error::InsufficientData(_) => PlethStatus::InsufficientData,
        Error::Range { .. } => PlethStatus::Range,
        Error::File { source, .. } => status_of(source),
        _ => PlethStatus::InvalidArgument,
    }
}

struct Failure(PlethStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(PlethStatus::NullPointer, format!("{name} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PlethStatus::InvalidArgument, msg.into())
}

/// Runs `f`, translating errors and panics into a status and last-error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PlethStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            PlethStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal error: {msg}"));
            PlethStatus::Internal
        }
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice_in<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_in<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PlethStatus::Utf8, format!("{name} is not UTF-8")))
}

fn placeholder_labels() -> SubjectLabels {
    SubjectLabels {
        subject_id: String::new(),
        activity: Activity::Midactive,
        gene: Gene::Gene59,
    }
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn pleth_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pleth_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn pleth_config_default() -> PlethConfig {
    let seg = SegmentationConfig::default();
    let sap = SapOptions::default();
    let (min_dev_absolute, min_dev_value) = match seg.min_deviation {
        MinDeviationRule::Absolute(v) => (true, v),
        MinDeviationRule::StdFraction(f) => (false, f),
    };
    PlethConfig {
        sap_threshold: sap.threshold,
        sap_symmetric: sap.symmetric,
        sap_outgoing: sap.alignment == SapAlignment::Outgoing,
        duration_min_s: seg.duration_min_s,
        min_dev_absolute,
        min_dev_value,
        downsample_block_mean: seg.downsample == Downsample::BlockMean,
    }
}

fn sap_options(c: &PlethConfig) -> Result<SapOptions, Failure> {
    if !(c.sap_threshold.is_finite() && c.sap_threshold > 0.0) {
        return Err(invalid("sap_threshold must be positive"));
    }
    Ok(SapOptions {
        threshold: c.sap_threshold,
        symmetric: c.sap_symmetric,
        alignment: if c.sap_outgoing {
            SapAlignment::Outgoing
        } else {
            SapAlignment::Incoming
        },
    })
}

fn pipeline_config(c: &PlethConfig) -> Result<PipelineConfig, Failure> {
    if !(c.duration_min_s.is_finite() && c.duration_min_s >= 0.0) {
        return Err(invalid("duration_min_s must be non-negative"));
    }
    if !c.min_dev_value.is_finite() || (!c.min_dev_absolute && c.min_dev_value < 0.0) {
        return Err(invalid("min_dev_value out of range"));
    }
    Ok(PipelineConfig {
        sap: sap_options(c)?,
        segmentation: SegmentationConfig {
            duration_min_s: c.duration_min_s,
            min_deviation: if c.min_dev_absolute {
                MinDeviationRule::Absolute(c.min_dev_value)
            } else {
                MinDeviationRule::StdFraction(c.min_dev_value)
            },
            downsample: if c.downsample_block_mean {
                Downsample::BlockMean
            } else {
                Downsample::Decimate
            },
        },
    })
}

/// Reads channel `channel` from an in-memory EDF file. Subject labels in the
/// header are kept when present.
///
/// # Safety
/// `bytes` must be valid for `len` reads, `channel` a NUL-terminated string
/// and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pleth_recording_from_edf(
    bytes: *const u8,
    len: usize,
    channel: *const c_char,
    out: *mut *mut PlethRecording,
) -> PlethStatus {
    guard(|| {
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let label = str_in(channel, "channel")?;
        let data = std::slice::from_raw_parts(bytes, len);
        let ch = read_channel(data, label)?;
        let labels = ch.labels.clone().unwrap_or_else(placeholder_labels);
        let inner = ch.into_recording(labels)?;
        *out = Box::into_raw(Box::new(PlethRecording { inner }));
        Ok(())
    })
}

/// Copies `len` samples in physical units into a new recording.
///
/// # Safety
/// `samples` must be valid for `len` reads and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pleth_recording_from_samples(
    samples: *const f64,
    len: usize,
    sample_rate_hz: f64,
    out: *mut *mut PlethRecording,
) -> PlethStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = slice_in(samples, len, "samples")?;
        let inner = Recording::new(placeholder_labels(), sample_rate_hz, s.to_vec())?;
        *out = Box::into_raw(Box::new(PlethRecording { inner }));
        Ok(())
    })
}

/// Sample count, or 0 for a null handle.
///
/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pleth_recording_len(rec: *const PlethRecording) -> usize {
    rec.as_ref().map_or(0, |r| r.inner.samples.len())
}

/// Sample rate in Hz, or 0 for a null handle.
///
/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pleth_recording_sample_rate(rec: *const PlethRecording) -> f64 {
    rec.as_ref().map_or(0.0, |r| r.inner.sample_rate_hz)
}

/// Copies up to `cap` samples into `dst` and stores the count in `written`.
///
/// # Safety
/// `rec` must be a live handle, `dst` valid for `cap` writes, `written`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pleth_recording_copy_samples(
    rec: *const PlethRecording,
    dst: *mut f64,
    cap: usize,
    written: *mut usize,
) -> PlethStatus {
    guard(|| {
        let rec = rec.as_ref().ok_or_else(|| null("rec"))?;
        if written.is_null() {
            return Err(null("written"));
        }
        let n = cap.min(rec.inner.samples.len());
        if n > 0 {
            if dst.is_null() {
                return Err(null("dst"));
            }
            ptr::copy_nonoverlapping(rec.inner.samples.as_ptr(), dst, n);
        }
        *written = n;
        Ok(())
    })
}

/// # Safety
/// `rec` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pleth_recording_free(rec: *mut PlethRecording) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Removes positive spikes from `samples` in place and stores the number of
/// altered samples in `replacements`.
///
/// # Safety
/// `samples` must be valid for `len` reads and writes; `config` and
/// `replacements` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pleth_sap_filter(
    samples: *mut f64,
    len: usize,
    config: *const PlethConfig,
    replacements: *mut usize,
) -> PlethStatus {
    guard(|| {
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        if replacements.is_null() {
            return Err(null("replacements"));
        }
        if samples.is_null() {
            return Err(null("samples"));
        }
        let s = std::slice::from_raw_parts_mut(samples, len);
        let (n, _) = sap_filter_in_place(s, &sap_options(config)?)?;
        *replacements = n;
        Ok(())
    })
}

/// Runs the full pipeline on a copy of `rec` and returns the breaths.
///
/// # Safety
/// `rec` must be a live handle, `config` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pleth_process_recording(
    rec: *const PlethRecording,
    config: *const PlethConfig,
    out: *mut *mut PlethBreaths,
) -> PlethStatus {
    guard(|| {
        let rec = rec.as_ref().ok_or_else(|| null("rec"))?;
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let processed = process_recording(rec.inner.clone(), &pipeline_config(config)?)?;
        *out = Box::into_raw(Box::new(PlethBreaths { rows: processed.rows }));
        Ok(())
    })
}

/// Breath count, or 0 for a null handle.
///
/// # Safety
/// `b` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pleth_breaths_count(b: *const PlethBreaths) -> usize {
    b.as_ref().map_or(0, |b| b.rows.len())
}

/// # Safety
/// `b` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pleth_breaths_get(
    b: *const PlethBreaths,
    index: usize,
    out: *mut PlethBreathInfo,
) -> PlethStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("breaths"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let row = b
            .rows
            .get(index)
            .ok_or_else(|| invalid(format!("index {index} out of range ({} breaths)", b.rows.len())))?;
        let s = &row.stats;
        *out = PlethBreathInfo {
            breath_number: row.breath_number,
            start_time_s: row.start_time_s,
            end_time_s: row.end_time_s,
            native_length: row.native_length,
            duration_s: s.duration_s,
            ti_s: s.ti_s,
            te_s: s.te_s,
            tr_s: s.tr_s,
            pip: s.pip,
            pep: s.pep,
            pause: s.pause,
            penh: s.penh,
            entropy: row.entropy,
        };
        Ok(())
    })
}

/// Copies the zero-padded 400-sample waveform of breath `index` into `dst`.
///
/// # Safety
/// `b` must be a live handle and `dst` valid for 400 writes.
#[no_mangle]
pub unsafe extern "C" fn pleth_breaths_waveform(
    b: *const PlethBreaths,
    index: usize,
    dst: *mut f64,
) -> PlethStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("breaths"))?;
        if dst.is_null() {
            return Err(null("dst"));
        }
        let row = b.rows.get(index).ok_or_else(|| invalid(format!("index {index} out of range")))?;
        debug_assert_eq!(row.waveform.len(), PADDED_LEN);
        ptr::copy_nonoverlapping(row.waveform.as_ptr(), dst, PADDED_LEN);
        Ok(())
    })
}

/// # Safety
/// `b` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pleth_breaths_free(b: *mut PlethBreaths) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Approximate entropy of `samples` with embedding `m` (0..=4) and
/// tolerance `r`.
///
/// # Safety
/// `samples` must be valid for `len` reads and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pleth_approx_entropy(
    samples: *const f64,
    len: usize,
    m: usize,
    r: f64,
    out: *mut f64,
) -> PlethStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if m > MAX_EMBEDDING {
            return Err(invalid(format!("m must be at most {MAX_EMBEDDING}")));
        }
        let s = slice_in(samples, len, "samples")?;
        *out = approx_entropy(s, m, r)?;
        Ok(())
    })
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
///
/// # Safety
/// `a`/`b` must be valid for `na`/`nb` reads; `d` and `p` writable.
#[no_mangle]
pub unsafe extern "C" fn pleth_ks_two_sample(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    d: *mut f64,
    p: *mut f64,
) -> PlethStatus {
    guard(|| {
        if d.is_null() || p.is_null() {
            return Err(null("d/p"));
        }
        let res = ks_two_sample(slice_in(a, na, "a")?, slice_in(b, nb, "b")?)?;
        *d = res.d;
        *p = res.p;
        Ok(())
    })
}

/// Two-sample t-test, Welch unless `pooled`.
///
/// # Safety
/// `a`/`b` must be valid for `na`/`nb` reads; `t`, `df` and `p` writable.
#[no_mangle]
pub unsafe extern "C" fn pleth_t_test(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    pooled: bool,
    t: *mut f64,
    df: *mut f64,
    p: *mut f64,
) -> PlethStatus {
    guard(|| {
        if t.is_null() || df.is_null() || p.is_null() {
            return Err(null("t/df/p"));
        }
        let kind = if pooled { TTestKind::Pooled } else { TTestKind::Welch };
        let res = t_two_sample(slice_in(a, na, "a")?, slice_in(b, nb, "b")?, kind)?;
        *t = res.t;
        *df = res.df;
        *p = res.p;
        Ok(())
    })
}
