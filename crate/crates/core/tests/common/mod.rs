#![allow(dead_code)]

pub mod oracles;

use pleth_core::preprocess::{center_in_place, sap_filter_in_place, SapOptions};
use pleth_core::segmentation::{segment, Segmentation, SegmentationConfig};
use pleth_core::synth::{generate, noise_std_for_snr, GroundTruth, ImpulsePolarity, SynthProfile};

pub struct BoundaryScore {
    pub matched: usize,
    pub detected: usize,
    pub truth: usize,
}

impl BoundaryScore {
    pub fn precision(&self) -> f64 {
        self.matched as f64 / self.detected.max(1) as f64
    }

    pub fn recall(&self) -> f64 {
        self.matched as f64 / self.truth.max(1) as f64
    }
}

/// One-to-one matching of two sorted index lists within `tol` samples.
pub fn match_boundaries(detected: &[usize], truth: &[usize], tol: usize) -> BoundaryScore {
    let (mut i, mut j, mut matched) = (0, 0, 0);
    while i < detected.len() && j < truth.len() {
        if detected[i].abs_diff(truth[j]) <= tol {
            matched += 1;
            i += 1;
            j += 1;
        } else if detected[i] < truth[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    BoundaryScore {
        matched,
        detected: detected.len(),
        truth: truth.len(),
    }
}

/// Ten minutes at 1000 Hz, 20 dB SNR, 50 positive impulses.
pub fn noisy_profile(seed: u64) -> SynthProfile {
    let mut p = SynthProfile {
        seed,
        duration_s: 600.0,
        impulse_count: 50,
        impulse_magnitude: 100.0,
        impulse_polarity: ImpulsePolarity::Positive,
        ..Default::default()
    };
    p.noise_std = noise_std_for_snr(&p, 20.0).unwrap();
    p
}

pub fn run_front_end(samples: &mut [f64], rate: f64, config: &SegmentationConfig) -> Segmentation {
    sap_filter_in_place(samples, &SapOptions::default()).unwrap();
    center_in_place(samples).unwrap();
    segment(samples, rate, config)
}

pub fn segmentation_score(profile: &SynthProfile, config: &SegmentationConfig) -> (BoundaryScore, GroundTruth) {
    let (mut rec, truth) = generate(profile).unwrap();
    let seg = run_front_end(&mut rec.samples, rec.sample_rate_hz, config);
    let detected: Vec<usize> = seg.kept.iter().map(|c| c.start).collect();
    let expected: Vec<usize> = truth.breaths.iter().map(|b| b.start_index).collect();
    let tol = (0.020 * profile.sample_rate_hz).round() as usize;
    (match_boundaries(&detected, &expected, tol), truth)
}
