//! EDF reading and writing for single-subject plethysmography recordings.
//!
//! Only the plain EDF subset is handled: continuous data records, any number
//! of signals, 16-bit little-endian samples. EDF+ annotations and the 24-bit
//! BDF variant are not supported.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIXED_HEADER_LEN: usize = 256;
pub const SIGNAL_HEADER_LEN: usize = 256;

pub const DEFAULT_CHANNEL_LABEL: &str = "PLETH";

const DIGITAL_MIN: i32 = -32768;
const DIGITAL_MAX: i32 = 32767;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Midactive,
    Midrest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gene {
    Gene59,
    Gene95,
}

impl Activity {
    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Midactive => "midactive",
            Activity::Midrest => "midrest",
        }
    }
}

impl Gene {
    pub fn as_str(self) -> &'static str {
        match self {
            Gene::Gene59 => "gene59",
            Gene::Gene95 => "gene95",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Gene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "midactive" => Ok(Activity::Midactive),
            "midrest" => Ok(Activity::Midrest),
            other => Err(Error::Parameter(format!("unknown activity {other:?}"))),
        }
    }
}

impl FromStr for Gene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gene59" => Ok(Gene::Gene59),
            "gene95" => Ok(Gene::Gene95),
            other => Err(Error::Parameter(format!("unknown gene {other:?}"))),
        }
    }
}

/// Identity of one subject: who it is and which comparison categories it
/// belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubjectLabels {
    pub subject_id: String,
    pub activity: Activity,
    pub gene: Gene,
}

/// One subject's continuous signal in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub labels: SubjectLabels,
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub physical_unit_label: String,
}

impl Recording {
    pub fn new(labels: SubjectLabels, sample_rate_hz: f64, samples: Vec<f64>) -> Result<Self> {
        let rec = Recording {
            labels,
            sample_rate_hz,
            samples,
            physical_unit_label: "ml".to_string(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Parameter(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::insufficient("recording has no samples"));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfSignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
}

impl EdfSignalHeader {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.digital_max <= self.digital_min {
            return Err(format!(
                "digital max {} not above digital min {}",
                self.digital_max, self.digital_min
            ));
        }
        if self.physical_max == self.physical_min {
            return Err("physical max equals physical min".to_string());
        }
        if self.samples_per_record == 0 {
            return Err("zero samples per record".to_string());
        }
        Ok(())
    }

    /// Physical value per digital count.
    pub fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / f64::from(self.digital_max - self.digital_min)
    }

    pub fn to_physical(&self, digital: i32) -> f64 {
        self.physical_min + f64::from(digital - self.digital_min) * self.gain()
    }

    /// Nearest digital code, rounding half away from zero. Returns `None`
    /// when the value falls outside the physical range.
    pub fn to_digital(&self, physical: f64) -> Option<i32> {
        let (lo, hi) = if self.physical_min <= self.physical_max {
            (self.physical_min, self.physical_max)
        } else {
            (self.physical_max, self.physical_min)
        };
        if !(physical >= lo && physical <= hi) {
            return None;
        }
        let code = f64::from(self.digital_min) + (physical - self.physical_min) / self.gain();
        Some((code.round() as i32).clamp(self.digital_min, self.digital_max))
    }
}

/// Parsed file header: the fixed block plus one header per signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start_date: String,
    pub start_time: String,
    pub header_bytes: usize,
    pub data_records: usize,
    pub record_duration_s: f64,
    pub signals: Vec<EdfSignalHeader>,
}

impl EdfHeader {
    pub fn record_len_bytes(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record * 2).sum()
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        let want = label.trim();
        self.signals.iter().position(|s| s.label.trim() == want)
    }

    /// Subject labels encoded by [`serialize_edf`]: the patient field holds
    /// the subject id, the recording field holds `activity=.. gene=..`.
    pub fn subject_labels(&self) -> Option<SubjectLabels> {
        let subject_id = self.patient_id.trim();
        if subject_id.is_empty() {
            return None;
        }
        let mut activity = None;
        let mut gene = None;
        for token in self.recording_id.split_whitespace() {
            if let Some(v) = token.strip_prefix("activity=") {
                activity = v.parse().ok();
            } else if let Some(v) = token.strip_prefix("gene=") {
                gene = v.parse().ok();
            }
        }
        Some(SubjectLabels {
            subject_id: subject_id.to_string(),
            activity: activity?,
            gene: gene?,
        })
    }
}

/// One channel extracted from an EDF file, before subject labels are attached.
#[derive(Debug, Clone)]
pub struct EdfChannel {
    pub header: EdfSignalHeader,
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub labels: Option<SubjectLabels>,
}

impl EdfChannel {
    pub fn into_recording(self, labels: SubjectLabels) -> Result<Recording> {
        let rec = Recording {
            labels,
            sample_rate_hz: self.sample_rate_hz,
            samples: self.samples,
            physical_unit_label: self.header.physical_dimension.trim().to_string(),
        };
        rec.validate()?;
        Ok(rec)
    }
}

struct FieldReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> FieldReader<'a> {
    fn text(&mut self, len: usize) -> Result<&'a str> {
        let start = self.offset;
        let end = start + len;
        let raw = self.bytes.get(start..end).ok_or_else(|| Error::Format {
            offset: start,
            message: format!(
                "header field of {len} bytes runs past end of input ({} bytes)",
                self.bytes.len()
            ),
        })?;
        self.offset = end;
        std::str::from_utf8(raw).map_err(|_| Error::Format {
            offset: start,
            message: "header field is not ASCII".to_string(),
        })
    }

    fn number<T: FromStr>(&mut self, len: usize, what: &str) -> Result<T> {
        let start = self.offset;
        let raw = self.text(len)?.trim();
        raw.parse().map_err(|_| Error::Format {
            offset: start,
            message: format!("invalid {what} {raw:?}"),
        })
    }
}

/// Parses the fixed header and all signal headers.
pub fn parse_header(bytes: &[u8]) -> Result<EdfHeader> {
    let mut r = FieldReader { bytes, offset: 0 };
    let version = r.text(8)?.trim().to_string();
    let patient_id = r.text(80)?.trim_end().to_string();
    let recording_id = r.text(80)?.trim_end().to_string();
    let start_date = r.text(8)?.to_string();
    let start_time = r.text(8)?.to_string();
    let header_bytes_offset = r.offset;
    let header_bytes: usize = r.number(8, "header byte count")?;
    r.text(44)?;
    let records_offset = r.offset;
    let data_records: i64 = r.number(8, "number of data records")?;
    let duration_offset = r.offset;
    let record_duration_s: f64 = r.number(8, "data record duration")?;
    let ns: usize = r.number(4, "number of signals")?;
    debug_assert_eq!(r.offset, FIXED_HEADER_LEN);

    let expected_header = FIXED_HEADER_LEN + ns * SIGNAL_HEADER_LEN;
    if header_bytes != expected_header {
        return Err(Error::Format {
            offset: header_bytes_offset,
            message: format!(
                "header byte count {header_bytes} does not match {ns} signals ({expected_header})"
            ),
        });
    }
    if bytes.len() < expected_header {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!(
                "signal headers need {expected_header} bytes, input has {}",
                bytes.len()
            ),
        });
    }
    if !(record_duration_s.is_finite() && record_duration_s > 0.0) {
        return Err(Error::Format {
            offset: duration_offset,
            message: format!("data record duration {record_duration_s} must be positive"),
        });
    }

    // Field-major layout: all labels, then all transducers, and so on.
    let mut labels = Vec::with_capacity(ns);
    let mut transducers = Vec::with_capacity(ns);
    let mut dims = Vec::with_capacity(ns);
    let mut pmins = Vec::with_capacity(ns);
    let mut pmaxs = Vec::with_capacity(ns);
    let mut dmins = Vec::with_capacity(ns);
    let mut dmaxs = Vec::with_capacity(ns);
    let mut prefilters = Vec::with_capacity(ns);
    let mut sprs = Vec::with_capacity(ns);
    for _ in 0..ns {
        labels.push(r.text(16)?.trim().to_string());
    }
    for _ in 0..ns {
        transducers.push(r.text(80)?.trim().to_string());
    }
    for _ in 0..ns {
        dims.push(r.text(8)?.trim().to_string());
    }
    for _ in 0..ns {
        pmins.push(r.number::<f64>(8, "physical minimum")?);
    }
    for _ in 0..ns {
        pmaxs.push(r.number::<f64>(8, "physical maximum")?);
    }
    for _ in 0..ns {
        dmins.push(r.number::<i32>(8, "digital minimum")?);
    }
    for _ in 0..ns {
        dmaxs.push(r.number::<i32>(8, "digital maximum")?);
    }
    for _ in 0..ns {
        prefilters.push(r.text(80)?.trim().to_string());
    }
    let spr_offset = r.offset;
    for _ in 0..ns {
        sprs.push(r.number::<usize>(8, "samples per record")?);
    }

    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let sig = EdfSignalHeader {
            label: labels[i].clone(),
            transducer: transducers[i].clone(),
            physical_dimension: dims[i].clone(),
            physical_min: pmins[i],
            physical_max: pmaxs[i],
            digital_min: dmins[i],
            digital_max: dmaxs[i],
            prefiltering: prefilters[i].clone(),
            samples_per_record: sprs[i],
        };
        sig.validate().map_err(|message| Error::Format {
            offset: spr_offset + i * 8,
            message: format!("signal {i} ({}): {message}", sig.label),
        })?;
        signals.push(sig);
    }

    let record_len: usize = signals.iter().map(|s| s.samples_per_record * 2).sum();
    let data_records = if data_records < 0 {
        // -1 means "unknown"; infer from the file size.
        if record_len == 0 {
            0
        } else {
            (bytes.len() - expected_header) / record_len
        }
    } else {
        usize::try_from(data_records).map_err(|_| Error::Format {
            offset: records_offset,
            message: "number of data records out of range".to_string(),
        })?
    };

    Ok(EdfHeader {
        version,
        patient_id,
        recording_id,
        start_date,
        start_time,
        header_bytes,
        data_records,
        record_duration_s,
        signals,
    })
}

/// Extracts one channel by label (exact match after trimming whitespace),
/// scaled to physical units.
pub fn read_channel(bytes: &[u8], channel_label: &str) -> Result<EdfChannel> {
    let header = parse_header(bytes)?;
    let idx = header
        .channel_index(channel_label)
        .ok_or_else(|| Error::ChannelNotFound(channel_label.trim().to_string()))?;

    let record_len = header.record_len_bytes();
    let expected = header.header_bytes + header.data_records * record_len;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }

    let sig = &header.signals[idx];
    let channel_offset: usize = header.signals[..idx]
        .iter()
        .map(|s| s.samples_per_record * 2)
        .sum();
    let spr = sig.samples_per_record;
    let gain = sig.gain();
    let mut samples = Vec::with_capacity(header.data_records * spr);
    for rec in 0..header.data_records {
        let start = header.header_bytes + rec * record_len + channel_offset;
        let chunk = &bytes[start..start + spr * 2];
        samples.extend(chunk.chunks_exact(2).map(|b| {
            let d = i32::from(i16::from_le_bytes([b[0], b[1]]));
            sig.physical_min + f64::from(d - sig.digital_min) * gain
        }));
    }

    Ok(EdfChannel {
        sample_rate_hz: spr as f64 / header.record_duration_s,
        labels: header.subject_labels(),
        header: sig.clone(),
        samples,
    })
}

/// Parses a recording whose subject labels are stored in the EDF header, as
/// written by [`serialize_edf`]. Files from other sources should go through
/// [`read_channel`] and [`EdfChannel::into_recording`] with external labels.
pub fn parse_edf(bytes: &[u8], channel_label: &str) -> Result<Recording> {
    let channel = read_channel(bytes, channel_label)?;
    let labels = channel.labels.clone().ok_or_else(|| Error::Format {
        offset: 8,
        message: "header carries no subject/activity/gene labels".to_string(),
    })?;
    channel.into_recording(labels)
}

#[derive(Debug, Clone)]
pub struct SerializeOptions {
    pub channel_label: String,
    /// Physical range to encode; derived from the data when `None`.
    pub physical_range: Option<(f64, f64)>,
}

impl Default for SerializeOptions {
    fn default() -> Self {
        SerializeOptions {
            channel_label: DEFAULT_CHANNEL_LABEL.to_string(),
            physical_range: None,
        }
    }
}

pub fn serialize_edf(recording: &Recording) -> Result<Vec<u8>> {
    serialize_edf_with(recording, &SerializeOptions::default())
}

pub fn serialize_edf_with(recording: &Recording, opts: &SerializeOptions) -> Result<Vec<u8>> {
    recording.validate()?;
    let n = recording.samples.len();

    // The header strings are the bounds; encoding uses their parsed values.
    let (pmin_field, pmax_field) = match opts.physical_range {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::Parameter(format!("invalid physical range [{lo}, {hi}]")));
            }
            (format_field_down(lo)?, format_field_up(hi)?)
        }
        None => auto_range(&recording.samples)?,
    };
    let (pmin, pmax) = (parse_back(&pmin_field), parse_back(&pmax_field));
    let sig = EdfSignalHeader {
        label: opts.channel_label.clone(),
        transducer: String::new(),
        physical_dimension: recording.physical_unit_label.clone(),
        physical_min: pmin,
        physical_max: pmax,
        digital_min: DIGITAL_MIN,
        digital_max: DIGITAL_MAX,
        prefiltering: String::new(),
        samples_per_record: 0,
    };

    let (spr, duration_field) = choose_record_layout(n, recording.sample_rate_hz)?;
    let records = n / spr;

    let mut out = Vec::with_capacity(FIXED_HEADER_LEN + SIGNAL_HEADER_LEN + n * 2);
    let labels = &recording.labels;
    push_field(&mut out, "0", 8)?;
    push_field(&mut out, &labels.subject_id, 80)?;
    push_field(
        &mut out,
        &format!("activity={} gene={}", labels.activity, labels.gene),
        80,
    )?;
    push_field(&mut out, "01.01.00", 8)?;
    push_field(&mut out, "00.00.00", 8)?;
    push_field(&mut out, &(FIXED_HEADER_LEN + SIGNAL_HEADER_LEN).to_string(), 8)?;
    push_field(&mut out, "", 44)?;
    push_field(&mut out, &records.to_string(), 8)?;
    push_field(&mut out, &duration_field, 8)?;
    push_field(&mut out, "1", 4)?;

    push_field(&mut out, &sig.label, 16)?;
    push_field(&mut out, &sig.transducer, 80)?;
    push_field(&mut out, &sig.physical_dimension, 8)?;
    push_field(&mut out, &pmin_field, 8)?;
    push_field(&mut out, &pmax_field, 8)?;
    push_field(&mut out, &DIGITAL_MIN.to_string(), 8)?;
    push_field(&mut out, &DIGITAL_MAX.to_string(), 8)?;
    push_field(&mut out, &sig.prefiltering, 80)?;
    push_field(&mut out, &spr.to_string(), 8)?;
    push_field(&mut out, "", 32)?;
    debug_assert_eq!(out.len(), FIXED_HEADER_LEN + SIGNAL_HEADER_LEN);

    for (index, &value) in recording.samples.iter().enumerate() {
        let code = sig.to_digital(value).ok_or(Error::Range {
            index,
            value,
            min: pmin,
            max: pmax,
        })?;
        out.extend_from_slice(&(code as i16).to_le_bytes());
    }
    Ok(out)
}

fn push_field(out: &mut Vec<u8>, value: &str, width: usize) -> Result<()> {
    if !value.is_ascii() || value.len() > width {
        return Err(Error::Parameter(format!(
            "value {value:?} does not fit a {width}-byte ASCII header field"
        )));
    }
    out.extend_from_slice(value.as_bytes());
    out.extend(std::iter::repeat(b' ').take(width - value.len()));
    Ok(())
}

fn parse_back(field: &str) -> f64 {
    field.trim().parse().expect("formatted header number parses")
}

/// Formats `v` into at most 8 characters, rounding toward -inf so the encoded
/// minimum never exceeds the true one.
fn format_field_down(v: f64) -> Result<String> {
    format_field(v, -1.0)
}

fn format_field_up(v: f64) -> Result<String> {
    format_field(v, 1.0)
}

/// `direction` is -1 to round down, +1 to round up.
fn format_field(v: f64, direction: f64) -> Result<String> {
    for decimals in (0..=7usize).rev() {
        // Already representable: keep it, so re-encoding is idempotent.
        let exact = format!("{v:.decimals$}");
        if exact.len() <= 8 && exact.parse::<f64>() == Ok(v) {
            return Ok(exact);
        }
        let scale = 10f64.powi(decimals as i32);
        let mut units = if direction < 0.0 { (v * scale).floor() } else { (v * scale).ceil() };
        let mut s = format!("{:.decimals$}", units / scale);
        // `v * scale` may itself round the wrong way; step one unit outward.
        if (parse_back(&s) - v) * direction < 0.0 {
            units += direction;
            s = format!("{:.decimals$}", units / scale);
        }
        if s.len() <= 8 {
            return Ok(s);
        }
    }
    Err(Error::Parameter(format!(
        "physical bound {v} cannot be written in 8 characters"
    )))
}

fn auto_range(samples: &[f64]) -> Result<(String, String)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (index, &v) in samples.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Range {
                index,
                value: v,
                min: f64::NEG_INFINITY,
                max: f64::INFINITY,
            });
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo < 1e-6 {
        let pad = hi.abs().max(1.0);
        lo -= pad;
        hi += pad;
    }
    Ok((format_field_down(lo)?, format_field_up(hi)?))
}

/// Picks samples-per-record as the largest divisor of `n` not exceeding one
/// second of data whose record duration is exactly expressible in 8 bytes.
fn choose_record_layout(n: usize, rate: f64) -> Result<(usize, String)> {
    let one_second = rate.floor().max(1.0) as usize;
    // Prefer layouts whose rate reads back bit-exactly.
    for tol in [0.0, 1e-9 * rate] {
        for spr in (1..=one_second.min(n)).rev() {
            if n % spr != 0 {
                continue;
            }
            let duration = spr as f64 / rate;
            for decimals in (0..=7usize).rev() {
                let s = format!("{duration:.decimals$}");
                if s.len() > 8 {
                    continue;
                }
                let back: f64 = s.parse().expect("formatted duration parses");
                if ((spr as f64 / back) - rate).abs() <= tol {
                    return Ok((spr, s));
                }
                break;
            }
        }
    }
    Err(Error::Parameter(format!(
        "no EDF record layout represents {n} samples at {rate} Hz"
    )))
}
