//! CSV tables, plot data and the run manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::database::{fmt_g9, Metric};
use crate::error::{Error, Result};
use crate::sigh_analysis::{PositionAggregate, SighSequence};
use crate::stats_compare::{format_p5, ComparisonRow, Histogram};

pub const COMPARISON_COLUMNS: [&str; 18] = [
    "metric_name",
    "comparison_type",
    "phase",
    "cat1_label",
    "cat2_label",
    "cat1_mean",
    "cat1_std",
    "cat2_mean",
    "cat2_std",
    "means_difference",
    "p_value",
    "sigh_impact",
    "p_value_5dp",
    "sigh_impact_signed",
    "test",
    "statistic",
    "cat1_n",
    "cat2_n",
];

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARISON_COLUMNS)?;
    for r in rows {
        let (impact, signed) = r
            .sigh_impact
            .map_or((String::new(), String::new()), |s| (fmt_g9(s.abs), fmt_g9(s.signed)));
        w.write_record([
            r.metric_name.clone(),
            r.comparison_type.to_string(),
            r.phase.to_string(),
            r.cat1_label.clone(),
            r.cat2_label.clone(),
            fmt_g9(r.cat1.mean),
            fmt_g9(r.cat1.std),
            fmt_g9(r.cat2.mean),
            fmt_g9(r.cat2.std),
            fmt_g9(r.means_difference),
            fmt_g9(r.p_value),
            impact,
            format_p5(r.p_value),
            signed,
            r.test.as_str().to_string(),
            fmt_g9(r.statistic),
            r.cat1.n.to_string(),
            r.cat2.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramEntry {
    pub metric: Metric,
    pub category: String,
    pub histogram: Histogram,
}

pub fn write_histograms_csv<W: Write>(entries: &[HistogramEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "category", "bin", "lower", "upper", "count"])?;
    for e in entries {
        let h = &e.histogram;
        for (k, count) in h.counts.iter().enumerate() {
            w.write_record([
                e.metric.name().to_string(),
                e.category.clone(),
                k.to_string(),
                fmt_g9(h.edges[k]),
                fmt_g9(h.edges[k + 1]),
                count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per metric and position; empty statistics where no breath
/// contributes.
pub fn write_positions_csv<W: Write>(entries: &[(Metric, Vec<PositionAggregate>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "metric",
        "position",
        "n",
        "median",
        "q1",
        "q3",
        "whisker_low",
        "whisker_high",
        "outliers",
    ])?;
    for (metric, aggs) in entries {
        for a in aggs {
            let mut rec = vec![metric.name().to_string(), a.position.to_string()];
            match &a.stats {
                Some(b) => {
                    rec.push(b.n.to_string());
                    rec.extend([b.median, b.q1, b.q3, b.whisker_low, b.whisker_high].map(fmt_g9));
                    rec.push(b.outliers.iter().map(|&v| fmt_g9(v)).collect::<Vec<_>>().join(";"));
                }
                None => {
                    rec.push("0".into());
                    rec.extend(std::iter::repeat(String::new()).take(6));
                }
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sequences_csv<W: Write>(sequences: &[SighSequence], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["subject_id", "activity", "gene", "sigh_breath_number", "excluded", "overlaps"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=crate::sigh_analysis::SEQUENCE_LEN).map(|p| format!("pos{p:02}")));
    w.write_record(&header)?;
    for s in sequences {
        let mut rec = vec![
            s.labels.subject_id.clone(),
            s.labels.activity.to_string(),
            s.labels.gene.to_string(),
            s.sigh_breath_number.to_string(),
            s.excluded.to_string(),
            s.overlaps.to_string(),
        ];
        // A trailing `*` marks a neighbour that is itself a sigh.
        rec.extend(s.slots.iter().zip(&s.neighbor_sighs).map(|(slot, &sigh)| match slot {
            Some(n) if sigh => format!("{n}*"),
            Some(n) => n.to_string(),
            None => String::new(),
        }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn digest_reader<R: Read>(mut input: R) -> io::Result<(u64, String)> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = input.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    let hex = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok((total, hex))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let file = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    let (bytes, sha256) = digest_reader(BufReader::new(file)).map_err(|e| Error::from(e).in_file(path))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        bytes,
        sha256,
    })
}

/// Reproducibility record of one command. Contains no timestamps, so equal
/// runs produce equal manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: Vec<FileDigest>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub counters: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool: "pleth",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            inputs: Vec::new(),
            parameters: BTreeMap::new(),
            counters: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Records a parameter; each name may be set once.
    pub fn param(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).expect("serializable parameter");
        let prev = self.parameters.insert(name.to_string(), v);
        assert!(prev.is_none(), "parameter {name} recorded twice");
        self
    }

    pub fn counter(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).expect("serializable counter");
        self.counters.insert(name.to_string(), v);
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::from(e).in_file(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats_compare::{ComparisonType, Phase, TTestKind, TestKind};

    #[test]
    fn comparison_columns_and_p5() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [101.0, 102.0, 103.0, 104.0];
        let mut row = ComparisonRow::new(
            "Ti",
            ComparisonType::Genetic,
            Phase::PostSigh,
            ("gene59", &a),
            ("gene95", &b),
            TestKind::T,
            TTestKind::Welch,
        )
        .unwrap();
        row.sigh_impact = Some(crate::stats_compare::sigh_impact(0.32, 0.07).unwrap());
        let mut out = Vec::new();
        write_comparison_csv(&[row], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), COMPARISON_COLUMNS.join(","));
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&fields[..5], ["Ti", "genetic", "post_sigh", "gene59", "gene95"]);
        assert_eq!(fields[9], "-100");
        assert_eq!(fields[11], "0.25");
        assert_eq!(fields[12], "0.00000");
        assert_eq!(fields[14], "t");
    }

    #[test]
    fn digest_of_known_input() {
        let (n, hex) = digest_reader("abc".as_bytes()).unwrap();
        assert_eq!(n, 3);
        assert_eq!(
            hex,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    #[should_panic(expected = "recorded twice")]
    fn parameter_recorded_once() {
        let mut m = RunManifest::new("x");
        m.param("a", 1).param("a", 2);
    }
}
