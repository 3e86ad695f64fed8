//! Breath segmentation on a centered signal.
//!
//! Inhalation starts where the signal turns negative and expiration starts
//! where it turns positive. Each pair of consecutive negative-going crossings
//! bounds one candidate breath. Noise near zero produces extra crossings;
//! those candidates are recognised by two univariate thresholds (too short,
//! or too shallow) and their leading division is removed, folding them into
//! the breath before.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal_io::SubjectLabels;

pub const DECIMATION: usize = 10;
pub const PADDED_LEN: usize = 400;

pub const DEFAULT_DURATION_MIN_S: f64 = 0.15;
pub const DEFAULT_MIN_DEV_STD_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Crossings {
    pub neg: Vec<usize>,
    pub pos: Vec<usize>,
}

/// `neg` holds every `i` with `s[i-1] >= 0 && s[i] < 0`, `pos` every `i` with
/// `s[i-1] <= 0 && s[i] > 0`.
pub fn find_crossings(s: &[f64]) -> Crossings {
    let mut out = Crossings::default();
    for (i, w) in s.windows(2).enumerate() {
        if w[0] >= 0.0 && w[1] < 0.0 {
            out.neg.push(i + 1);
        } else if w[0] <= 0.0 && w[1] > 0.0 {
            out.pos.push(i + 1);
        }
    }
    out
}

/// Sample indices of one breath: inspiration is `[start, insp_end)`,
/// expiration `[insp_end, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Candidate {
    pub start: usize,
    pub insp_end: usize,
    pub end: usize,
}

impl Candidate {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assembled {
    pub candidates: Vec<Candidate>,
    /// Neg-to-neg spans without an interior positive crossing. Their samples
    /// are absorbed by the preceding candidate when there is one.
    pub dropped: usize,
}

pub fn assemble_candidates(neg: &[usize], pos: &[usize]) -> Assembled {
    let mut out = Assembled::default();
    let mut p = 0;
    for w in neg.windows(2) {
        let (start, end) = (w[0], w[1]);
        while p < pos.len() && pos[p] <= start {
            p += 1;
        }
        if p < pos.len() && pos[p] < end {
            out.candidates.push(Candidate {
                start,
                insp_end: pos[p],
                end,
            });
        } else {
            out.dropped += 1;
            if let Some(last) = out.candidates.last_mut() {
                last.end = end;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreathAnomalyFeatures {
    pub duration_s: f64,
    pub min_deviation: f64,
}

pub fn anomaly_features(c: &Candidate, s: &[f64], rate_hz: f64) -> BreathAnomalyFeatures {
    BreathAnomalyFeatures {
        duration_s: c.len() as f64 / rate_hz,
        min_deviation: s[c.start..c.end]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnomalyThresholds {
    pub duration_min_s: f64,
    pub min_dev_max: f64,
}

impl AnomalyThresholds {
    pub fn is_nominal(&self, f: &BreathAnomalyFeatures) -> bool {
        f.duration_s >= self.duration_min_s && f.min_deviation <= self.min_dev_max
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rejection {
    pub kept: Vec<Candidate>,
    /// Candidates whose leading division was removed, as they were before
    /// merging.
    pub removed: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    cand: Candidate,
    min_dev: f64,
}

impl Segment {
    fn features(&self, rate_hz: f64) -> BreathAnomalyFeatures {
        BreathAnomalyFeatures {
            duration_s: self.cand.len() as f64 / rate_hz,
            min_deviation: self.min_dev,
        }
    }

    /// Joins `next` onto the end of `self`. The merged inspiration ends where
    /// the deeper of the two parts ended its own.
    fn absorb(&mut self, next: &Segment) {
        if next.min_dev < self.min_dev {
            self.cand.insp_end = next.cand.insp_end;
            self.min_dev = next.min_dev;
        }
        self.cand.end = next.cand.end;
    }
}

/// Removes anomalous divisions until every remaining candidate is nominal.
///
/// An anomalous candidate is merged into its predecessor (its start division
/// is the spurious one); an anomalous run at the very beginning is merged
/// forward into the first nominal candidate instead. Merged candidates are
/// re-evaluated until nothing changes. If only a single anomalous candidate
/// remains it is discarded.
pub fn reject_anomalies(
    candidates: &[Candidate],
    s: &[f64],
    rate_hz: f64,
    thresholds: &AnomalyThresholds,
) -> Rejection {
    let mut segs: Vec<Segment> = candidates
        .iter()
        .map(|c| Segment {
            cand: *c,
            min_dev: anomaly_features(c, s, rate_hz).min_deviation,
        })
        .collect();
    let mut removed = Vec::new();

    loop {
        let nominal: Vec<bool> = segs
            .iter()
            .map(|g| thresholds.is_nominal(&g.features(rate_hz)))
            .collect();
        if nominal.iter().all(|&ok| ok) {
            break;
        }
        if segs.len() == 1 {
            removed.push(segs[0].cand);
            segs.clear();
            break;
        }
        let mut next: Vec<Segment> = Vec::with_capacity(segs.len());
        let mut pending: Option<Segment> = None;
        for (seg, ok) in segs.iter().zip(&nominal) {
            if !ok {
                removed.push(seg.cand);
                match next.last_mut() {
                    Some(last) => last.absorb(seg),
                    None => match pending.as_mut() {
                        Some(p) => p.absorb(seg),
                        None => pending = Some(*seg),
                    },
                }
                continue;
            }
            match pending.take() {
                Some(mut p) => {
                    p.absorb(seg);
                    next.push(p);
                }
                None => next.push(*seg),
            }
        }
        if let Some(p) = pending {
            next.push(p);
        }
        segs = next;
    }

    Rejection {
        kept: segs.into_iter().map(|g| g.cand).collect(),
        removed,
    }
}

/// How to bring a breath from the native rate down by [`DECIMATION`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Downsample {
    /// Keep every tenth sample.
    #[default]
    Decimate,
    /// Average each block of ten samples (a crude anti-alias filter).
    BlockMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreathRecord {
    pub labels: SubjectLabels,
    pub start_index: usize,
    pub insp_end_index: usize,
    pub end_index: usize,
    pub start_time_s: f64,
    pub end_time_s: f64,
    /// Downsampled breath, zero-padded (or truncated) to [`PADDED_LEN`].
    pub waveform_100hz: Vec<f64>,
    pub native_length: usize,
}

impl BreathRecord {
    /// Number of downsampled samples that carry signal, before padding.
    pub fn unpadded_len(&self) -> usize {
        self.native_length.div_ceil(DECIMATION).min(PADDED_LEN)
    }

    pub fn unpadded(&self) -> &[f64] {
        &self.waveform_100hz[..self.unpadded_len()]
    }

    pub fn candidate(&self) -> Candidate {
        Candidate {
            start: self.start_index,
            insp_end: self.insp_end_index,
            end: self.end_index,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Database {
    pub breaths: Vec<BreathRecord>,
    /// Breaths longer than `PADDED_LEN * DECIMATION` native samples.
    pub truncated: usize,
}

pub fn build_database(
    kept: &[Candidate],
    s: &[f64],
    rate_hz: f64,
    labels: &SubjectLabels,
    mode: Downsample,
) -> Result<Database> {
    if kept.is_empty() {
        return Err(Error::insufficient("no breaths survived segmentation"));
    }
    let mut db = Database {
        breaths: Vec::with_capacity(kept.len()),
        truncated: 0,
    };
    for c in kept {
        let native = &s[c.start..c.end];
        let full = native.len().div_ceil(DECIMATION);
        if full > PADDED_LEN {
            db.truncated += 1;
        }
        let mut waveform = vec![0.0; PADDED_LEN];
        for (k, slot) in waveform.iter_mut().enumerate().take(full.min(PADDED_LEN)) {
            *slot = match mode {
                Downsample::Decimate => native[k * DECIMATION],
                Downsample::BlockMean => {
                    let block = &native[k * DECIMATION..((k + 1) * DECIMATION).min(native.len())];
                    block.iter().sum::<f64>() / block.len() as f64
                }
            };
        }
        db.breaths.push(BreathRecord {
            labels: labels.clone(),
            start_index: c.start,
            insp_end_index: c.insp_end,
            end_index: c.end,
            start_time_s: c.start as f64 / rate_hz,
            end_time_s: c.end as f64 / rate_hz,
            waveform_100hz: waveform,
            native_length: c.len(),
        });
    }
    if db.truncated > 0 {
        log::warn!(
            "{}: {} breaths longer than {} samples were truncated",
            labels.subject_id,
            db.truncated,
            PADDED_LEN * DECIMATION
        );
    }
    Ok(db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MinDeviationRule {
    /// `min_dev_max = -fraction * std(signal)`.
    StdFraction(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentationConfig {
    pub duration_min_s: f64,
    pub min_deviation: MinDeviationRule,
    pub downsample: Downsample,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            duration_min_s: DEFAULT_DURATION_MIN_S,
            min_deviation: MinDeviationRule::StdFraction(DEFAULT_MIN_DEV_STD_FRACTION),
            downsample: Downsample::Decimate,
        }
    }
}

impl SegmentationConfig {
    pub fn thresholds_for(&self, s: &[f64]) -> AnomalyThresholds {
        let min_dev_max = match self.min_deviation {
            MinDeviationRule::Absolute(v) => v,
            MinDeviationRule::StdFraction(f) => {
                let n = s.len().max(1) as f64;
                let mean = s.iter().sum::<f64>() / n;
                let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                -f * var.sqrt()
            }
        };
        AnomalyThresholds {
            duration_min_s: self.duration_min_s,
            min_dev_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub kept: Vec<Candidate>,
    pub candidates: usize,
    pub dropped: usize,
    pub removed: usize,
    pub thresholds: AnomalyThresholds,
}

/// Crossings, candidate assembly and anomaly rejection in one call.
///
/// Recording edges: a signal that starts below zero opens a division at
/// sample 0, as if it sat at baseline before the recording began. The end of
/// the signal closes a trailing span only if that span already holds a
/// positive crossing, so a recording cut during inspiration loses its last
/// partial breath.
pub fn segment(s: &[f64], rate_hz: f64, config: &SegmentationConfig) -> Segmentation {
    let thresholds = config.thresholds_for(s);
    let mut crossings = find_crossings(s);
    if s.first().is_some_and(|&v| v < 0.0) {
        crossings.neg.insert(0, 0);
    }
    if let Some(&last) = crossings.neg.last() {
        if crossings.pos.last().is_some_and(|&p| p > last) {
            crossings.neg.push(s.len());
        }
    }
    let assembled = assemble_candidates(&crossings.neg, &crossings.pos);
    let rejection = reject_anomalies(&assembled.candidates, s, rate_hz, &thresholds);
    Segmentation {
        candidates: assembled.candidates.len(),
        dropped: assembled.dropped,
        removed: rejection.removed.len(),
        kept: rejection.kept,
        thresholds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{Activity, Gene};
    use std::f64::consts::PI;

    fn labels() -> SubjectLabels {
        SubjectLabels {
            subject_id: "r".into(),
            activity: Activity::Midactive,
            gene: Gene::Gene59,
        }
    }

    #[test]
    fn sine_crossings() {
        // -sin(2 pi t) over 2 s, plus one extra sample so t = 2 is included.
        let s: Vec<f64> = (0..=2000)
            .map(|i| -(2.0 * PI * i as f64 / 1000.0).sin())
            .collect();
        let c = find_crossings(&s);
        assert_eq!(c.neg, vec![1, 1001]);
        assert_eq!(c.pos, vec![501, 1501]);
    }

    #[test]
    fn recording_edges() {
        let loose = SegmentationConfig {
            duration_min_s: 0.0,
            min_deviation: MinDeviationRule::Absolute(0.0),
            ..Default::default()
        };
        let s = [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0];
        let seg = segment(&s, 10.0, &loose);
        let spans: Vec<(usize, usize, usize)> =
            seg.kept.iter().map(|c| (c.start, c.insp_end, c.end)).collect();
        assert_eq!(spans, vec![(0, 3, 6), (6, 8, 10)]);

        // Cut during inspiration: the partial breath is not closed.
        let s = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let seg = segment(&s, 10.0, &loose);
        assert_eq!(seg.kept.len(), 1);
        assert_eq!(seg.kept[0].end, 5);
    }

    #[test]
    fn positive_signal_has_no_negative_crossing() {
        let c = find_crossings(&[1.0, 2.0, 0.5, 3.0]);
        assert!(c.neg.is_empty());
    }

    #[test]
    fn assembly_examples() {
        let a = assemble_candidates(&[0, 1000], &[500]);
        assert_eq!(
            a.candidates,
            vec![Candidate {
                start: 0,
                insp_end: 500,
                end: 1000
            }]
        );
        let b = assemble_candidates(&[0, 1000], &[]);
        assert!(b.candidates.is_empty());
        assert_eq!(b.dropped, 1);
    }

    #[test]
    fn span_without_positive_crossing_is_absorbed() {
        let a = assemble_candidates(&[0, 100, 150], &[50]);
        assert_eq!(
            a.candidates,
            vec![Candidate {
                start: 0,
                insp_end: 50,
                end: 150
            }]
        );
        assert_eq!(a.dropped, 1);
    }

    #[test]
    fn features_of_sine_breath() {
        let s: Vec<f64> = (0..1000)
            .map(|i| -(2.0 * PI * i as f64 / 1000.0).sin())
            .collect();
        let c = Candidate {
            start: 0,
            insp_end: 500,
            end: 1000,
        };
        let f = anomaly_features(&c, &s, 1000.0);
        assert_eq!(f.duration_s, 1.0);
        assert_eq!(f.min_deviation, -1.0);

        let blip = Candidate {
            start: 10,
            insp_end: 20,
            end: 40,
        };
        assert!((anomaly_features(&blip, &s, 1000.0).duration_s - 0.03).abs() < 1e-15);
    }

    /// One deep 1 s breath followed by a 20 ms shallow blip.
    #[test]
    fn blip_is_merged() {
        let mut s: Vec<f64> = (0..1000)
            .map(|i| -(2.0 * PI * i as f64 / 1000.0).sin())
            .collect();
        s.extend((0..20).map(|i| if i < 10 { -0.01 } else { 0.01 }));
        let cands = [
            Candidate {
                start: 0,
                insp_end: 500,
                end: 1000,
            },
            Candidate {
                start: 1000,
                insp_end: 1010,
                end: 1020,
            },
        ];
        let th = AnomalyThresholds {
            duration_min_s: 0.15,
            min_dev_max: -0.05,
        };
        let r = reject_anomalies(&cands, &s, 1000.0, &th);
        assert_eq!(
            r.kept,
            vec![Candidate {
                start: 0,
                insp_end: 500,
                end: 1020
            }]
        );
        assert_eq!(r.removed.len(), 1);
    }

    #[test]
    fn leading_blip_merges_forward() {
        let mut s = vec![-0.01; 5];
        s.extend(vec![0.01; 5]);
        s.extend((0..1000).map(|i| -(2.0 * PI * i as f64 / 1000.0).sin()));
        let cands = [
            Candidate {
                start: 0,
                insp_end: 5,
                end: 10,
            },
            Candidate {
                start: 10,
                insp_end: 510,
                end: 1010,
            },
        ];
        let th = AnomalyThresholds {
            duration_min_s: 0.15,
            min_dev_max: -0.05,
        };
        let r = reject_anomalies(&cands, &s, 1000.0, &th);
        assert_eq!(
            r.kept,
            vec![Candidate {
                start: 0,
                insp_end: 510,
                end: 1010
            }]
        );
    }

    #[test]
    fn vacuous_thresholds_keep_everything() {
        let s = vec![0.5; 100];
        let cands: Vec<Candidate> = (0..10)
            .map(|k| Candidate {
                start: k * 10,
                insp_end: k * 10 + 5,
                end: k * 10 + 10,
            })
            .collect();
        let th = AnomalyThresholds {
            duration_min_s: 0.0,
            min_dev_max: f64::INFINITY,
        };
        let r = reject_anomalies(&cands, &s, 1000.0, &th);
        assert_eq!(r.kept, cands);
        assert!(r.removed.is_empty());
    }

    #[test]
    fn lone_anomaly_is_discarded() {
        let s = vec![-0.001; 10];
        let cands = [Candidate {
            start: 0,
            insp_end: 5,
            end: 10,
        }];
        let th = AnomalyThresholds {
            duration_min_s: 0.15,
            min_dev_max: -0.05,
        };
        let r = reject_anomalies(&cands, &s, 1000.0, &th);
        assert!(r.kept.is_empty());
        assert_eq!(r.removed.len(), 1);
    }

    fn one_breath(native_length: usize) -> Database {
        let s: Vec<f64> = (0..native_length).map(|i| i as f64 + 1.0).collect();
        let c = Candidate {
            start: 0,
            insp_end: native_length / 2,
            end: native_length,
        };
        build_database(&[c], &s, 1000.0, &labels(), Downsample::Decimate).unwrap()
    }

    #[test]
    fn padding_to_400() {
        let db = one_breath(1000);
        let b = &db.breaths[0];
        assert_eq!(b.waveform_100hz.len(), 400);
        assert_eq!(b.unpadded_len(), 100);
        assert!(b.waveform_100hz[..100].iter().all(|&v| v != 0.0));
        assert!(b.waveform_100hz[100..].iter().all(|&v| v == 0.0));
        assert_eq!(b.waveform_100hz[3], 31.0);
        assert_eq!(db.truncated, 0);
    }

    #[test]
    fn exact_fit_and_truncation() {
        let db = one_breath(4000);
        assert!(db.breaths[0].waveform_100hz.iter().all(|&v| v != 0.0));
        assert_eq!(db.truncated, 0);

        let db = one_breath(4500);
        assert_eq!(db.breaths[0].waveform_100hz.len(), 400);
        assert_eq!(db.breaths[0].waveform_100hz[399], 3991.0);
        assert_eq!(db.truncated, 1);
    }

    #[test]
    fn empty_database_is_an_error() {
        assert!(matches!(
            build_database(&[], &[0.0], 1000.0, &labels(), Downsample::Decimate),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn block_mean_downsampling() {
        let s: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let c = Candidate {
            start: 0,
            insp_end: 10,
            end: 25,
        };
        let db = build_database(&[c], &s, 1000.0, &labels(), Downsample::BlockMean).unwrap();
        assert_eq!(&db.breaths[0].waveform_100hz[..4], &[4.5, 14.5, 22.0, 0.0]);
    }
}
