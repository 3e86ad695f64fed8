//! Breath database rows and their CSV form.
//!
//! One row per breath: subject labels, timing, the zero-padded 100 Hz
//! waveform (`w000..w399`), the plethysmography metrics and `E0..E4`.
//! Floats are written with [`fmt_g9`] so output is byte-stable.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::breath_metrics::BreathStats;
use crate::entropy::{EntropySet, MAX_EMBEDDING};
use crate::error::{Error, Result};
use crate::segmentation::{BreathRecord, DECIMATION, PADDED_LEN};
use crate::signal_io::{Activity, Gene, SubjectLabels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Duration,
    Ti,
    Te,
    Tr,
    Pip,
    Pep,
    Pause,
    Penh,
    E0,
    E1,
    E2,
    E3,
    E4,
}

impl Metric {
    pub const ALL: [Metric; 13] = [
        Metric::Duration,
        Metric::Ti,
        Metric::Te,
        Metric::Tr,
        Metric::Pip,
        Metric::Pep,
        Metric::Pause,
        Metric::Penh,
        Metric::E0,
        Metric::E1,
        Metric::E2,
        Metric::E3,
        Metric::E4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Duration => "duration_s",
            Metric::Ti => "Ti",
            Metric::Te => "Te",
            Metric::Tr => "Tr",
            Metric::Pip => "PIP",
            Metric::Pep => "PEP",
            Metric::Pause => "Pause",
            Metric::Penh => "Penh",
            Metric::E0 => "E0",
            Metric::E1 => "E1",
            Metric::E2 => "E2",
            Metric::E3 => "E3",
            Metric::E4 => "E4",
        }
    }

    pub fn value(self, row: &BreathRow) -> f64 {
        let s = &row.stats;
        match self {
            Metric::Duration => s.duration_s,
            Metric::Ti => s.ti_s,
            Metric::Te => s.te_s,
            Metric::Tr => s.tr_s,
            Metric::Pip => s.pip,
            Metric::Pep => s.pep,
            Metric::Pause => s.pause,
            Metric::Penh => s.penh,
            Metric::E0 => row.entropy[0],
            Metric::E1 => row.entropy[1],
            Metric::E2 => row.entropy[2],
            Metric::E3 => row.entropy[3],
            Metric::E4 => row.entropy[4],
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreathRow {
    pub labels: SubjectLabels,
    /// 0-based position of the breath within its subject.
    pub breath_number: usize,
    pub start_time_s: f64,
    pub end_time_s: f64,
    pub native_length: usize,
    pub waveform: Vec<f64>,
    pub stats: BreathStats,
    pub entropy: [f64; MAX_EMBEDDING + 1],
}

impl BreathRow {
    pub fn new(
        breath_number: usize,
        record: BreathRecord,
        stats: BreathStats,
        entropy: &EntropySet,
    ) -> Self {
        BreathRow {
            labels: record.labels,
            breath_number,
            start_time_s: record.start_time_s,
            end_time_s: record.end_time_s,
            native_length: record.native_length,
            waveform: record.waveform_100hz,
            stats,
            entropy: entropy.values,
        }
    }

    pub fn metric(&self, m: Metric) -> f64 {
        m.value(self)
    }

    /// The waveform without its zero padding.
    pub fn unpadded(&self) -> &[f64] {
        let n = self.native_length.div_ceil(DECIMATION).min(PADDED_LEN);
        &self.waveform[..n.min(self.waveform.len())]
    }
}

/// Breaths grouped by subject, each group ordered by breath number.
pub type Cohort = BTreeMap<String, Vec<BreathRow>>;

pub fn group_by_subject(rows: Vec<BreathRow>) -> Cohort {
    let mut cohort = Cohort::new();
    for row in rows {
        cohort
            .entry(row.labels.subject_id.clone())
            .or_default()
            .push(row);
    }
    for rows in cohort.values_mut() {
        rows.sort_by_key(|r| r.breath_number);
    }
    cohort
}

/// `%.9g`-style rendering: nine significant digits, trailing zeros
/// trimmed, `NaN`/`inf`/`-inf` spelled out.
pub fn fmt_g9(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn waveform_column(k: usize) -> String {
    format!("w{k:03}")
}

pub fn header() -> Vec<String> {
    let mut h: Vec<String> = [
        "subject_id",
        "activity",
        "gene",
        "breath_number",
        "start_time_s",
        "end_time_s",
        "native_length",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..PADDED_LEN).map(waveform_column));
    h.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    h
}

pub struct BreathCsvWriter<W: Write> {
    inner: csv::Writer<W>,
    record: Vec<String>,
}

impl<W: Write> BreathCsvWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(header())?;
        Ok(BreathCsvWriter {
            inner,
            record: Vec::with_capacity(7 + PADDED_LEN + Metric::ALL.len()),
        })
    }

    pub fn write(&mut self, row: &BreathRow) -> Result<()> {
        let r = &mut self.record;
        r.clear();
        r.push(row.labels.subject_id.clone());
        r.push(row.labels.activity.to_string());
        r.push(row.labels.gene.to_string());
        r.push(row.breath_number.to_string());
        r.push(fmt_g9(row.start_time_s));
        r.push(fmt_g9(row.end_time_s));
        r.push(row.native_length.to_string());
        r.extend(row.waveform.iter().map(|&v| fmt_g9(v)));
        r.extend(Metric::ALL.iter().map(|&m| fmt_g9(row.metric(m))));
        self.inner.write_record(&*r)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))
    }
}

pub fn write_breaths<W: Write>(rows: &[BreathRow], out: W) -> Result<W> {
    let mut w = BreathCsvWriter::new(out)?;
    for row in rows {
        w.write(row)?;
    }
    w.finish()
}

struct Ctx<'a> {
    source: &'a str,
    line: u64,
}

fn parse_field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, cx: &Ctx) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.trim().parse().map_err(|_| Error::Parse {
        path: cx.source.to_string(),
        line: cx.line,
        message: format!("invalid {name} {raw:?}"),
    })
}

fn parse_float(rec: &csv::StringRecord, idx: usize, name: &str, cx: &Ctx) -> Result<f64> {
    match rec.get(idx).map(str::trim) {
        Some("NaN") => Ok(f64::NAN),
        _ => parse_field(rec, idx, name, cx),
    }
}

/// Reads a breath database written by [`write_breaths`]; `source` names
/// the input in errors.
pub fn read_breaths<R: Read>(input: R, source: &str) -> Result<Vec<BreathRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let expected = header();
    let found = reader.headers()?.clone();
    if found.len() != expected.len() || found.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: format!(
                "breath database header mismatch: expected {} columns starting with {:?}",
                expected.len(),
                &expected[..7]
            ),
        });
    }
    let wave0 = 7;
    let metric0 = wave0 + PADDED_LEN;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let cx = Ctx {
            source,
            line: rec.position().map_or(0, |p| p.line()),
        };
        let labels = SubjectLabels {
            subject_id: rec[0].to_string(),
            activity: parse_field::<Activity>(&rec, 1, "activity", &cx)?,
            gene: parse_field::<Gene>(&rec, 2, "gene", &cx)?,
        };
        let mut waveform = Vec::with_capacity(PADDED_LEN);
        for k in 0..PADDED_LEN {
            waveform.push(parse_float(&rec, wave0 + k, &expected[wave0 + k], &cx)?);
        }
        let mut m = [0.0; 13];
        for (k, slot) in m.iter_mut().enumerate() {
            *slot = parse_float(&rec, metric0 + k, &expected[metric0 + k], &cx)?;
        }
        let penh_signed = if m[4] != 0.0 {
            m[5] / m[4] * m[6]
        } else {
            f64::NAN
        };
        rows.push(BreathRow {
            labels,
            breath_number: parse_field(&rec, 3, "breath_number", &cx)?,
            start_time_s: parse_float(&rec, 4, "start_time_s", &cx)?,
            end_time_s: parse_float(&rec, 5, "end_time_s", &cx)?,
            native_length: parse_field(&rec, 6, "native_length", &cx)?,
            waveform,
            stats: BreathStats {
                duration_s: m[0],
                ti_s: m[1],
                te_s: m[2],
                tr_s: m[3],
                pip: m[4],
                pep: m[5],
                pause: m[6],
                penh: m[7],
                penh_signed,
            },
            entropy: [m[8], m[9], m[10], m[11], m[12]],
        });
    }
    Ok(rows)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sample_row(subject: &str, n: usize) -> BreathRow {
        let mut waveform = vec![0.0; PADDED_LEN];
        for (k, v) in waveform.iter_mut().take(50).enumerate() {
            *v = (k as f64 * 0.3).sin();
        }
        BreathRow {
            labels: SubjectLabels {
                subject_id: subject.into(),
                activity: Activity::Midrest,
                gene: Gene::Gene95,
            },
            breath_number: n,
            start_time_s: 0.5 * n as f64,
            end_time_s: 0.5 * n as f64 + 0.5,
            native_length: 500,
            waveform,
            stats: BreathStats {
                duration_s: 0.5,
                ti_s: 0.2,
                te_s: 0.3,
                tr_s: 0.1,
                pip: -1.0,
                pep: 1.25,
                pause: 2.0,
                penh: 2.5,
                penh_signed: -2.5,
            },
            entropy: [0.1, 0.2, 0.3, 0.4, f64::NAN],
        }
    }

    #[test]
    fn g9_formatting() {
        assert_eq!(fmt_g9(0.0), "0");
        assert_eq!(fmt_g9(1.0), "1");
        assert_eq!(fmt_g9(-0.5), "-0.5");
        assert_eq!(fmt_g9(0.1 + 0.2), "0.3");
        assert_eq!(fmt_g9(123456789.0), "123456789");
        assert_eq!(fmt_g9(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_g9(0.0001), "0.0001");
        assert_eq!(fmt_g9(0.00001234), "1.234e-05");
        assert_eq!(fmt_g9(std::f64::consts::PI), "3.14159265");
        assert_eq!(fmt_g9(f64::NAN), "NaN");
        assert_eq!(fmt_g9(f64::NEG_INFINITY), "-inf");
        // Rounding that carries into the next decade.
        assert_eq!(fmt_g9(9.9999999999), "10");
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![sample_row("a", 0), sample_row("a", 1)];
        let bytes = write_breaths(&rows, Vec::new()).unwrap();
        let back = read_breaths(bytes.as_slice(), "db.csv").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].breath_number, 1);
        assert_eq!(back[0].labels, rows[0].labels);
        assert!(back[0].entropy[4].is_nan());
        assert_eq!(back[0].stats.penh_signed, -2.5);
        for (a, b) in back[0].waveform.iter().zip(&rows[0].waveform) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
        }
        // Second pass is byte-identical.
        assert_eq!(write_breaths(&back, Vec::new()).unwrap(), bytes);
    }

    #[test]
    fn bad_field_reports_line() {
        let mut bytes = write_breaths(&[sample_row("a", 0)], Vec::new()).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        let broken = text.replacen("midrest", "asleep", 1);
        bytes = broken.into_bytes();
        match read_breaths(bytes.as_slice(), "db.csv") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("activity"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn metric_names_parse() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("penh".parse::<Metric>().is_ok());
        assert!(matches!("nope".parse::<Metric>(), Err(Error::Usage(_))));
    }
}
