//! Impulse ("salt-and-pepper") removal, mean-centering and derivative
//! diagnostics.
//!
//! The impulse filter is a conditional moving average: first differences are
//! summarised once (mean and population standard deviation), then every
//! sample whose difference exceeds `mean + threshold * std` is replaced by the
//! average of the samples two positions on either side. Only upward jumps are
//! tested unless [`SapOptions::symmetric`] is set, so downward impulses of
//! the same size survive the default configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAP_THRESHOLD: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

/// Statistics of `s[i] - s[i-1]` over the whole signal. `std` is the
/// population standard deviation.
pub fn derivative_stats(s: &[f64]) -> Result<DerivativeStats> {
    if s.len() < 2 {
        return Err(Error::insufficient(format!(
            "derivative statistics need at least 2 samples, got {}",
            s.len()
        )));
    }
    let n = s.len() - 1;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for w in s.windows(2) {
        let d = w[1] - w[0];
        sum += d;
        min = min.min(d);
        max = max.max(d);
    }
    let mean = sum / n as f64;
    let var = s
        .windows(2)
        .map(|w| {
            let e = (w[1] - w[0]) - mean;
            e * e
        })
        .sum::<f64>()
        / n as f64;
    Ok(DerivativeStats {
        // Rounding can push the mean a hair outside [min, max] on constant
        // differences.
        mean: mean.clamp(min, max),
        std: var.sqrt(),
        min,
        max,
        n,
    })
}

/// Which difference is tested before replacing sample `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SapAlignment {
    /// Test the jump into the sample, `s[i] - s[i-1]`. A lone upward spike is
    /// then replaced by the average of its neighbours two samples away.
    #[default]
    Incoming,
    /// Test `s[i+1] - s[i]` while replacing `s[i]`, the index pairing exactly
    /// as it is usually written down. This replaces the sample in front of a
    /// spike and leaves the spike itself in place.
    Outgoing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SapOptions {
    pub threshold: f64,
    /// Test `|d - mean| >= threshold * std` instead of the one-sided
    /// `d >= mean + threshold * std`.
    pub symmetric: bool,
    pub alignment: SapAlignment,
}

impl Default for SapOptions {
    fn default() -> Self {
        SapOptions {
            threshold: DEFAULT_SAP_THRESHOLD,
            symmetric: false,
            alignment: SapAlignment::Incoming,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SapOutcome {
    pub signal: Vec<f64>,
    /// Samples whose value changed.
    pub replacements: usize,
    pub derivative: DerivativeStats,
}

pub fn sap_filter(s: &[f64], opts: &SapOptions) -> Result<SapOutcome> {
    let mut signal = s.to_vec();
    let (replacements, derivative) = sap_filter_in_place(&mut signal, opts)?;
    Ok(SapOutcome {
        signal,
        replacements,
        derivative,
    })
}

/// In-place variant of [`sap_filter`]; returns the replacement count.
///
/// The loop visits `i = 2 ..= len - 3` so both `i - 2` and `i + 2` exist.
/// Differences are taken from the unmodified input, while each replacement
/// reads the already-updated neighbours.
pub fn sap_filter_in_place(s: &mut [f64], opts: &SapOptions) -> Result<(usize, DerivativeStats)> {
    if s.len() < 5 {
        return Err(Error::insufficient(format!(
            "impulse filter needs at least 5 samples, got {}",
            s.len()
        )));
    }
    if !(opts.threshold > 0.0) {
        return Err(Error::Parameter(format!(
            "impulse filter threshold must be positive, got {}",
            opts.threshold
        )));
    }
    let stats = derivative_stats(s)?;
    let limit = opts.threshold * stats.std;
    let fires = |d: f64| {
        if opts.symmetric {
            (d - stats.mean).abs() >= limit
        } else {
            d >= stats.mean + limit
        }
    };

    let n = s.len();
    // Differences come from the input, but s[i-1] may already be rewritten
    // by the time we reach i, so carry its original value forward.
    let mut prev_orig = s[1];
    let mut replacements = 0;
    for i in 2..=n - 3 {
        let orig = s[i];
        let d = match opts.alignment {
            SapAlignment::Incoming => orig - prev_orig,
            SapAlignment::Outgoing => s[i + 1] - orig,
        };
        prev_orig = orig;
        if fires(d) {
            let v = 0.5 * (s[i - 2] + s[i + 2]);
            if v != orig {
                replacements += 1;
            }
            s[i] = v;
        }
    }
    Ok((replacements, stats))
}

/// Subtracts the mean. Returns the centered copy and the mean removed.
pub fn center(s: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut out = s.to_vec();
    let mean = center_in_place(&mut out)?;
    Ok((out, mean))
}

pub fn center_in_place(s: &mut [f64]) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::insufficient("cannot center an empty signal"));
    }
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    s.iter_mut().for_each(|v| *v -= mean);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_derivative() {
        let d = derivative_stats(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!((d.mean, d.std, d.min, d.max, d.n), (1.0, 0.0, 1.0, 1.0, 3));
    }

    #[test]
    fn constant_derivative() {
        let d = derivative_stats(&[4.0; 10]).unwrap();
        assert_eq!((d.mean, d.std), (0.0, 0.0));
    }

    #[test]
    fn derivative_needs_two_samples() {
        assert!(matches!(
            derivative_stats(&[1.0]),
            Err(Error::InsufficientData(_))
        ));
    }

    /// Hand trace on nine samples with a +100 spike at index 4:
    /// d = [0,0,0,100,-100,0,0,0], mean = 0, std = sqrt(20000/8) = 50,
    /// limit = 450 at the default threshold. That never fires, so this
    /// fixture uses threshold 1.5 (limit 75): only d[4] = s4 - s3 = 100
    /// qualifies, and s4 <- (s2 + s6) / 2 = 0.
    #[test]
    fn spike_trace() {
        let s = [0.0, 0.0, 0.0, 0.0, 100.0, 0.0, 0.0, 0.0, 0.0];
        let opts = SapOptions {
            threshold: 1.5,
            ..Default::default()
        };
        let out = sap_filter(&s, &opts).unwrap();
        assert_eq!(out.signal, vec![0.0; 9]);
        assert_eq!(out.replacements, 1);
        assert_eq!(out.derivative.std, 50.0);

        // Idempotent on the flattened output.
        let again = sap_filter(&out.signal, &opts).unwrap();
        assert_eq!(again.replacements, 0);
    }

    #[test]
    fn spike_on_long_flat_signal_default_threshold() {
        // With 200 samples std = 100 * sqrt(2 / 199) ~ 10.0, limit ~ 90.
        let mut s = vec![3.0; 200];
        s[80] = 103.0;
        let out = sap_filter(&s, &SapOptions::default()).unwrap();
        assert_eq!(out.signal, vec![3.0; 200]);
        assert_eq!(out.replacements, 1);
    }

    #[test]
    fn outgoing_alignment_misses_the_spike() {
        let s = [0.0, 0.0, 0.0, 0.0, 100.0, 0.0, 0.0, 0.0, 0.0];
        let opts = SapOptions {
            threshold: 1.5,
            alignment: SapAlignment::Outgoing,
            ..Default::default()
        };
        // Fires at i = 3 (d[4] >= limit) and rewrites s3 with (s1 + s5) / 2,
        // which is already 0.
        let out = sap_filter(&s, &opts).unwrap();
        assert_eq!(out.signal, s.to_vec());
        assert_eq!(out.replacements, 0);
    }

    #[test]
    fn one_sided_keeps_negative_spike() {
        let mut s = vec![0.0; 9];
        s[4] = -100.0;
        let opts = SapOptions {
            threshold: 1.5,
            ..Default::default()
        };
        assert_eq!(sap_filter(&s, &opts).unwrap().signal, s);
        let sym = SapOptions {
            symmetric: true,
            ..opts
        };
        assert_eq!(sap_filter(&s, &sym).unwrap().signal, vec![0.0; 9]);
    }

    #[test]
    fn huge_threshold_is_identity() {
        let s: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let out = sap_filter(
            &s,
            &SapOptions {
                threshold: 1e9,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.signal, s);
        assert_eq!(out.replacements, 0);
    }

    #[test]
    fn smooth_sine_untouched() {
        let s: Vec<f64> = (0..5000)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 1000.0).sin())
            .collect();
        let out = sap_filter(&s, &SapOptions::default()).unwrap();
        assert_eq!(out.replacements, 0);
        assert_eq!(out.signal, s);
    }

    #[test]
    fn filter_input_checks() {
        assert!(matches!(
            sap_filter(&[0.0; 4], &SapOptions::default()),
            Err(Error::InsufficientData(_))
        ));
        let bad = SapOptions {
            threshold: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            sap_filter(&[0.0; 9], &bad),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn center_examples() {
        assert_eq!(center(&[1.0, 1.0, 1.0]).unwrap().0, vec![0.0; 3]);
        assert_eq!(center(&[0.0, 2.0]).unwrap().0, vec![-1.0, 1.0]);
        assert!(matches!(center(&[]), Err(Error::InsufficientData(_))));
    }
}
