//! Approximate entropy (ApEn) of breath waveforms.
//!
//! For a sequence of length `N` and template length `k`, `C_i^k` is the share
//! of the `N - k + 1` templates within Chebyshev distance `r` of template `i`
//! (itself included), and `Phi^k = mean_i ln C_i^k`. Then
//! `ApEn(m, r) = Phi^m - Phi^(m+1)`, in nats. Length-0 templates match
//! everything, so `Phi^0 = 0` and `ApEn(0, r) = -Phi^1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::segmentation::BreathRecord;

pub const MAX_EMBEDDING: usize = 4;
pub const RADIUS_STD_FACTOR: f64 = 0.2;
/// Shortest unpadded waveform that supports embedding dimension 4.
pub const MIN_ENTROPY_SAMPLES: usize = MAX_EMBEDDING + 2;

/// `ApEn(m, r)` for `m = 0 ..= max_m`.
pub fn approx_entropy_profile(s: &[f64], max_m: usize, r: f64) -> Result<Vec<f64>> {
    check_args(s, max_m, r)?;
    let phi = phi_values(s, max_m + 1, r);
    Ok((0..=max_m).map(|m| phi[m] - phi[m + 1]).collect())
}

pub fn approx_entropy(s: &[f64], m: usize, r: f64) -> Result<f64> {
    check_args(s, m, r)?;
    let phi = phi_values(s, m + 1, r);
    Ok(phi[m] - phi[m + 1])
}

fn check_args(s: &[f64], m: usize, r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Parameter(format!("radius must be positive, got {r}")));
    }
    if s.len() < m + 2 {
        return Err(Error::insufficient(format!(
            "approximate entropy with m = {m} needs at least {} samples, got {}",
            m + 2,
            s.len()
        )));
    }
    Ok(())
}

/// `Phi^k` for `k = 0 ..= max_len`. One sweep over template pairs: the
/// length of the leading run of matching positions tells, for every `k` at
/// once, whether the length-`k` templates match.
fn phi_values(s: &[f64], max_len: usize, r: f64) -> Vec<f64> {
    let n = s.len();
    // counts[k - 1][i]: matches of the length-k template starting at i.
    let mut counts = vec![vec![0u32; n]; max_len];
    for i in 0..n {
        for j in i..n {
            let limit = max_len.min(n - j);
            let mut run = 0;
            while run < limit && (s[i + run] - s[j + run]).abs() <= r {
                run += 1;
            }
            for row in counts.iter_mut().take(run) {
                row[i] += 1;
                if j != i {
                    row[j] += 1;
                }
            }
        }
    }
    let mut phi = Vec::with_capacity(max_len + 1);
    phi.push(0.0);
    for (k, row) in (1..=max_len).zip(&counts) {
        let templates = n - k + 1;
        let denom = templates as f64;
        let sum: f64 = row[..templates]
            .iter()
            .map(|&c| (f64::from(c) / denom).ln())
            .sum();
        phi.push(sum / denom);
    }
    phi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropySet {
    /// `ApEn(m, 0.2 * std)` for `m = 0..=4`.
    pub values: [f64; MAX_EMBEDDING + 1],
    pub r_used: f64,
    pub n_used: usize,
    /// Flat waveform: zero std, all values reported as 0.
    pub degenerate: bool,
}

/// Entropy set for an arbitrary (unpadded) sequence, with
/// `r = 0.2 * population std`.
pub fn entropy_set_of(s: &[f64]) -> Result<EntropySet> {
    if s.len() < MIN_ENTROPY_SAMPLES {
        return Err(Error::insufficient(format!(
            "entropy needs {MIN_ENTROPY_SAMPLES} downsampled samples, got {}",
            s.len()
        )));
    }
    if s.iter().all(|&v| v == s[0]) {
        return Ok(EntropySet {
            values: [0.0; MAX_EMBEDDING + 1],
            r_used: 0.0,
            n_used: s.len(),
            degenerate: true,
        });
    }
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let std = (s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let r = RADIUS_STD_FACTOR * std;
    let profile = approx_entropy_profile(s, MAX_EMBEDDING, r)?;
    let mut values = [0.0; MAX_EMBEDDING + 1];
    values.copy_from_slice(&profile);
    Ok(EntropySet {
        values,
        r_used: r,
        n_used: s.len(),
        degenerate: false,
    })
}

/// Entropy of the breath's downsampled waveform, zero padding excluded.
pub fn entropy_set(breath: &BreathRecord) -> Result<EntropySet> {
    entropy_set_of(breath.unpadded())
}
