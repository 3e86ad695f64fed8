//! Per-recording processing: impulse filter, centering, segmentation,
//! metrics and entropy.

use rayon::prelude::*;
use serde::Serialize;

use crate::breath_metrics::compute_stats;
use crate::database::BreathRow;
use crate::entropy::{entropy_set, EntropySet, MAX_EMBEDDING};
use crate::error::{Error, Result};
use crate::preprocess::{center_in_place, sap_filter_in_place, SapOptions};
use crate::segmentation::{build_database, segment, SegmentationConfig};
use crate::signal_io::Recording;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PipelineConfig {
    pub sap: SapOptions,
    pub segmentation: SegmentationConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RecordingCounters {
    pub subject_id: String,
    pub samples: usize,
    pub sample_rate_hz: f64,
    pub sap_replacements: usize,
    pub derivative_mean: f64,
    pub derivative_std: f64,
    pub signal_mean_removed: f64,
    pub min_dev_max: f64,
    pub candidates: usize,
    pub dropped_spans: usize,
    pub merged_divisions: usize,
    pub breaths_kept: usize,
    pub truncated_waveforms: usize,
    pub degenerate_entropy: usize,
    /// Breaths too short for entropy; their `E0..E4` are NaN.
    pub entropy_skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub rows: Vec<BreathRow>,
    pub counters: RecordingCounters,
}

/// Runs the full per-recording pipeline. The recording's samples are
/// filtered and centered in place and then dropped.
pub fn process_recording(mut rec: Recording, config: &PipelineConfig) -> Result<Processed> {
    rec.validate()?;
    let rate = rec.sample_rate_hz;
    let s = &mut rec.samples;
    let (sap_replacements, derivative) = sap_filter_in_place(s, &config.sap)?;
    let signal_mean_removed = center_in_place(s)?;
    let seg = segment(s, rate, &config.segmentation);
    let db = build_database(
        &seg.kept,
        s,
        rate,
        &rec.labels,
        config.segmentation.downsample,
    )?;

    let s: &[f64] = s;
    let computed: Vec<_> = db
        .breaths
        .par_iter()
        .map(|b| {
            let stats = compute_stats(&b.candidate(), s, rate);
            let entropy = match entropy_set(b) {
                Ok(e) => Ok(e),
                Err(Error::InsufficientData(_)) => Err(()),
                Err(e) => return Err(e),
            };
            Ok((stats, entropy))
        })
        .collect::<Result<_>>()?;

    let mut counters = RecordingCounters {
        subject_id: rec.labels.subject_id.clone(),
        samples: s.len(),
        sample_rate_hz: rate,
        sap_replacements,
        derivative_mean: derivative.mean,
        derivative_std: derivative.std,
        signal_mean_removed,
        min_dev_max: seg.thresholds.min_dev_max,
        candidates: seg.candidates,
        dropped_spans: seg.dropped,
        merged_divisions: seg.removed,
        breaths_kept: seg.kept.len(),
        truncated_waveforms: db.truncated,
        ..Default::default()
    };
    let skipped = EntropySet {
        values: [f64::NAN; MAX_EMBEDDING + 1],
        r_used: f64::NAN,
        n_used: 0,
        degenerate: false,
    };
    let rows = db
        .breaths
        .into_iter()
        .zip(computed)
        .enumerate()
        .map(|(k, (record, (stats, entropy)))| {
            let entropy = match entropy {
                Ok(e) => {
                    counters.degenerate_entropy += usize::from(e.degenerate);
                    e
                }
                Err(()) => {
                    counters.entropy_skipped += 1;
                    skipped
                }
            };
            BreathRow::new(k, record, stats, &entropy)
        })
        .collect();
    Ok(Processed { rows, counters })
}
