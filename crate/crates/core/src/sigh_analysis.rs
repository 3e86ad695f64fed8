//! Sigh detection, ±10-breath sequences and pre/post-sigh comparisons.
//!
//! A sigh is a breath inside a configured rest window whose PEP reaches the
//! subject's threshold and whose duration passes the duration filter.
//! Sequences hold 21 slots: positions 1–10 precede the sigh, 11 is the sigh,
//! 12–21 follow it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::database::{BreathRow, Cohort, Metric};
use crate::error::{Error, Result};
use crate::signal_io::{Activity, Gene, SubjectLabels};
use crate::stats_compare::{
    box_stats, sigh_impact, BoxStats, ComparisonRow, ComparisonType, Phase, TTestKind, TestKind,
};

pub const DEFAULT_SIGH_DURATION_MIN_S: f64 = 1.1;
pub const CONTEXT: usize = 10;
pub const SEQUENCE_LEN: usize = 2 * CONTEXT + 1;
/// 0-based slot of the sigh.
pub const SIGH_SLOT: usize = CONTEXT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectRestConfig {
    pub subject_id: String,
    pub pep_threshold: f64,
    /// Inclusive 0-based breath-number ranges.
    #[serde(default)]
    pub windows: Vec<[usize; 2]>,
    /// Half-open `[start, end)` ranges in seconds, matched on breath start
    /// time.
    #[serde(default)]
    pub windows_s: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestWindowConfig {
    pub subjects: Vec<SubjectRestConfig>,
}

impl RestWindowConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RestWindowConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("rest config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in &self.subjects {
            if !seen.insert(s.subject_id.as_str()) {
                return Err(Error::Config(format!(
                    "subject {} listed twice in rest config",
                    s.subject_id
                )));
            }
            if !(s.pep_threshold > 0.0 && s.pep_threshold.is_finite()) {
                return Err(Error::Config(format!(
                    "subject {}: pep_threshold must be positive",
                    s.subject_id
                )));
            }
            if s.windows.is_empty() && s.windows_s.is_empty() {
                return Err(Error::Config(format!(
                    "subject {}: no rest windows",
                    s.subject_id
                )));
            }
            let mut w = s.windows.clone();
            w.sort_unstable();
            for pair in &w {
                if pair[0] >= pair[1] {
                    return Err(Error::Config(format!(
                        "subject {}: window {:?} needs start < end",
                        s.subject_id, pair
                    )));
                }
            }
            if w.windows(2).any(|p| p[1][0] <= p[0][1]) {
                return Err(Error::Config(format!(
                    "subject {}: breath windows overlap",
                    s.subject_id
                )));
            }
            let mut ws = s.windows_s.clone();
            ws.sort_by(|a, b| a[0].total_cmp(&b[0]));
            for pair in &ws {
                if !(pair[0] >= 0.0 && pair[0] < pair[1]) {
                    return Err(Error::Config(format!(
                        "subject {}: window {:?} s needs 0 <= start < end",
                        s.subject_id, pair
                    )));
                }
            }
            if ws.windows(2).any(|p| p[1][0] < p[0][1]) {
                return Err(Error::Config(format!(
                    "subject {}: time windows overlap",
                    s.subject_id
                )));
            }
        }
        Ok(())
    }
}

/// Breath numbers (indices into `breaths`) inside a rest window with
/// `PEP >= pep_threshold`.
pub fn detect_sighs(breaths: &[BreathRow], cfg: &SubjectRestConfig) -> Result<Vec<usize>> {
    let n = breaths.len();
    for w in &cfg.windows {
        if w[1] >= n {
            return Err(Error::Config(format!(
                "subject {}: window {:?} outside the {n} recorded breaths",
                cfg.subject_id, w
            )));
        }
    }
    let last_start = breaths.last().map_or(0.0, |b| b.start_time_s);
    for w in &cfg.windows_s {
        if w[0] > last_start {
            return Err(Error::Config(format!(
                "subject {}: window {:?} s starts after the last breath",
                cfg.subject_id, w
            )));
        }
    }
    let in_rest = |i: usize, b: &BreathRow| {
        cfg.windows.iter().any(|w| w[0] <= i && i <= w[1])
            || cfg
                .windows_s
                .iter()
                .any(|w| w[0] <= b.start_time_s && b.start_time_s < w[1])
    };
    Ok(breaths
        .iter()
        .enumerate()
        .filter(|&(i, b)| in_rest(i, b) && b.stats.pep >= cfg.pep_threshold)
        .map(|(i, _)| i)
        .collect())
}

/// Keeps candidates with `duration_s >= min_duration_s`.
pub fn duration_filter(candidates: &[usize], breaths: &[BreathRow], min_duration_s: f64) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&i| breaths[i].stats.duration_s >= min_duration_s)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SighSequence {
    pub labels: SubjectLabels,
    pub sigh_breath_number: usize,
    /// Breath numbers by position; `None` past the recording edge.
    pub slots: [Option<usize>; SEQUENCE_LEN],
    /// Slots (other than the centre) that hold another sigh.
    pub neighbor_sighs: [bool; SEQUENCE_LEN],
    /// Shares breaths with another sequence of the same subject.
    pub overlaps: bool,
    pub excluded: bool,
}

impl SighSequence {
    /// Breath numbers at 1-based positions `positions`.
    pub fn breaths_at<I>(&self, positions: I) -> impl Iterator<Item = usize> + '_
    where
        I: IntoIterator<Item = usize>,
        I::IntoIter: 'static,
    {
        positions
            .into_iter()
            .filter_map(move |p| self.slots.get(p - 1).copied().flatten())
    }
}

/// Sequences for one subject. `n_context` (at most 10) limits how many
/// neighbours are filled on each side.
pub fn build_sequences(
    labels: &SubjectLabels,
    breath_count: usize,
    sighs: &[usize],
    n_context: usize,
) -> Vec<SighSequence> {
    let n_context = n_context.min(CONTEXT);
    let sigh_set: BTreeSet<usize> = sighs.iter().copied().collect();
    sigh_set
        .iter()
        .map(|&centre| {
            let mut slots = [None; SEQUENCE_LEN];
            let mut neighbor_sighs = [false; SEQUENCE_LEN];
            for (k, slot) in slots.iter_mut().enumerate() {
                let offset = k as isize - SIGH_SLOT as isize;
                if offset.unsigned_abs() > n_context {
                    continue;
                }
                let b = centre as isize + offset;
                if b >= 0 && (b as usize) < breath_count {
                    *slot = Some(b as usize);
                    neighbor_sighs[k] = offset != 0 && sigh_set.contains(&(b as usize));
                }
            }
            let overlaps = sigh_set
                .iter()
                .any(|&o| o != centre && o.abs_diff(centre) <= 2 * n_context);
            SighSequence {
                labels: labels.clone(),
                sigh_breath_number: centre,
                slots,
                neighbor_sighs,
                overlaps,
                excluded: false,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExclusionOutcome {
    pub excluded: usize,
    /// Listed pairs that matched no sequence.
    pub unmatched: Vec<(String, usize)>,
}

/// Applies an exclusion CSV (`subject_id,sigh_breath_number,reason`).
/// `source` names the file in errors.
pub fn apply_exclusions<R: Read>(
    sequences: &mut [SighSequence],
    input: R,
    source: &str,
) -> Result<ExclusionOutcome> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut listed: Vec<(String, usize)> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) || rec.get(0).is_some_and(|f| f.starts_with('#')) {
            continue;
        }
        if k == 0 && rec.get(0) == Some("subject_id") {
            if rec.get(1) != Some("sigh_breath_number") {
                return Err(parse_err(
                    line,
                    "header must be subject_id,sigh_breath_number,reason".into(),
                ));
            }
            continue;
        }
        if rec.len() < 2 || rec.len() > 3 {
            return Err(parse_err(
                line,
                format!("expected 2 or 3 fields, found {}", rec.len()),
            ));
        }
        let subject = rec[0].to_string();
        if subject.is_empty() {
            return Err(parse_err(line, "empty subject_id".into()));
        }
        let number: usize = rec[1]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid sigh_breath_number {:?}", &rec[1])))?;
        listed.push((subject, number));
    }

    let mut outcome = ExclusionOutcome::default();
    for (subject, number) in listed {
        let mut hit = false;
        for seq in sequences.iter_mut() {
            if seq.labels.subject_id == subject && seq.sigh_breath_number == number {
                if !seq.excluded {
                    outcome.excluded += 1;
                }
                seq.excluded = true;
                hit = true;
            }
        }
        if !hit {
            warn!("exclusion ({subject}, {number}) matches no sigh sequence");
            outcome.unmatched.push((subject, number));
        }
    }
    Ok(outcome)
}

fn lookup<'a>(cohort: &'a Cohort, subject: &str, n: usize) -> &'a BreathRow {
    &cohort[subject][n]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionAggregate {
    /// 1-based position; 11 is the sigh.
    pub position: usize,
    /// `None` when no sequence has a defined value at this position.
    pub stats: Option<BoxStats>,
}

/// Box statistics per position over all non-excluded sequences. NaN metric
/// values are skipped.
pub fn position_aggregates(
    sequences: &[SighSequence],
    cohort: &Cohort,
    metric: Metric,
) -> Result<Vec<PositionAggregate>> {
    let active: Vec<&SighSequence> = sequences.iter().filter(|s| !s.excluded).collect();
    if active.is_empty() {
        return Err(Error::insufficient(
            "no sigh sequences left for position aggregates",
        ));
    }
    (1..=SEQUENCE_LEN)
        .map(|position| {
            let values: Vec<f64> = active
                .iter()
                .flat_map(|s| {
                    s.breaths_at([position])
                        .map(|n| lookup(cohort, &s.labels.subject_id, n).metric(metric))
                })
                .filter(|v| !v.is_nan())
                .collect();
            let stats = if values.is_empty() {
                None
            } else {
                Some(box_stats(&values)?)
            };
            Ok(PositionAggregate { position, stats })
        })
        .collect()
}

fn category_labels(ct: ComparisonType) -> (&'static str, &'static str) {
    match ct {
        ComparisonType::Activity => (Activity::Midactive.as_str(), Activity::Midrest.as_str()),
        ComparisonType::Genetic => (Gene::Gene59.as_str(), Gene::Gene95.as_str()),
    }
}

/// Category label of a subject under a comparison type.
pub fn category_of(labels: &SubjectLabels, ct: ComparisonType) -> &'static str {
    match ct {
        ComparisonType::Activity => labels.activity.as_str(),
        ComparisonType::Genetic => labels.gene.as_str(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrePostOptions {
    /// Neighbours used on each side, 1..=10.
    pub context_depth: usize,
    pub t_kind: TTestKind,
}

impl Default for PrePostOptions {
    fn default() -> Self {
        PrePostOptions {
            context_depth: CONTEXT,
            t_kind: TTestKind::Welch,
        }
    }
}

/// Metric values for positions `positions`, split by category.
fn pools(
    sequences: &[SighSequence],
    cohort: &Cohort,
    metric: Metric,
    ct: ComparisonType,
    positions: std::ops::RangeInclusive<usize>,
) -> BTreeMap<&'static str, Vec<f64>> {
    let mut out: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for s in sequences.iter().filter(|s| !s.excluded) {
        let cat = category_of(&s.labels, ct);
        let pool = out.entry(cat).or_default();
        for n in s.breaths_at(positions.clone()) {
            let v = lookup(cohort, &s.labels.subject_id, n).metric(metric);
            if !v.is_nan() {
                pool.push(v);
            }
        }
    }
    out
}

/// Pre- and post-sigh comparison rows; the post row carries the sigh
/// impact.
pub fn pre_post_compare(
    sequences: &[SighSequence],
    cohort: &Cohort,
    metric: Metric,
    ct: ComparisonType,
    opts: &PrePostOptions,
) -> Result<[ComparisonRow; 2]> {
    let d = opts.context_depth;
    if !(1..=CONTEXT).contains(&d) {
        return Err(Error::Parameter(format!(
            "context depth must be in 1..={CONTEXT}, got {d}"
        )));
    }
    let (l1, l2) = category_labels(ct);
    let phase_row = |phase: Phase, positions: std::ops::RangeInclusive<usize>| {
        let pools = pools(sequences, cohort, metric, ct, positions);
        let get = |label: &str| -> Result<&[f64]> {
            let v = pools.get(label).map_or(&[][..], |v| v.as_slice());
            if v.len() < 2 {
                return Err(Error::insufficient(format!(
                    "{phase} pool for {label} has {} {metric} value(s); need at least 2",
                    v.len()
                )));
            }
            Ok(v)
        };
        ComparisonRow::new(
            metric.name(),
            ct,
            phase,
            (l1, get(l1)?),
            (l2, get(l2)?),
            TestKind::T,
            opts.t_kind,
        )
    };
    let pre = phase_row(Phase::PreSigh, SIGH_SLOT + 1 - d..=SIGH_SLOT)?;
    let mut post = phase_row(Phase::PostSigh, SIGH_SLOT + 2..=SIGH_SLOT + 1 + d)?;
    post.sigh_impact = Some(sigh_impact(pre.p_value, post.p_value)?);
    Ok([pre, post])
}
