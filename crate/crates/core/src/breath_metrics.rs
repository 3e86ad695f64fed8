//! Per-breath plethysmography metrics.
//!
//! On a centered flow signal inspiration is negative and expiration positive:
//!
//! * `Ti`, `Te`: inspiration and expiration durations.
//! * `PIP`: signal minimum during inspiration; `PEP`: maximum during expiration.
//! * `Tr`: relaxation time, from expiration start until the signal, searched
//!   from the `PEP` sample onward, first falls to 36% of `PEP`. Linearly
//!   interpolated between the bracketing samples; `Te` if it never gets there.
//! * `Pause = (Te - Tr) / Tr`.
//! * `Penh = |PEP| / |PIP| * Pause`. The signed ratio `PEP / PIP * Pause` is
//!   kept as `penh_signed`; with `PIP < 0` it has the opposite sign.

use serde::Serialize;

use crate::segmentation::Candidate;

pub const RELAXATION_LEVEL: f64 = 0.36;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreathStats {
    pub duration_s: f64,
    pub ti_s: f64,
    pub te_s: f64,
    pub tr_s: f64,
    pub pip: f64,
    pub pep: f64,
    /// NaN when `Tr == 0`.
    pub pause: f64,
    /// NaN when `Pause` is NaN or `PIP == 0`.
    pub penh: f64,
    pub penh_signed: f64,
}

impl BreathStats {
    pub fn pause_defined(&self) -> bool {
        self.pause.is_finite()
    }

    pub fn penh_defined(&self) -> bool {
        self.penh.is_finite()
    }
}

/// Computes all metrics for the breath `c` over the native-rate signal `s`.
///
/// Panics if the candidate indices are out of bounds or unordered.
pub fn compute_stats(c: &Candidate, s: &[f64], rate_hz: f64) -> BreathStats {
    assert!(
        c.start < c.insp_end && c.insp_end < c.end && c.end <= s.len(),
        "invalid breath bounds {c:?} for {} samples",
        s.len()
    );
    let ti = (c.insp_end - c.start) as f64 / rate_hz;
    let te = (c.end - c.insp_end) as f64 / rate_hz;

    let pip = s[c.start..c.insp_end]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    // First maximum wins on ties.
    let (peak_off, pep) = s[c.insp_end..c.end]
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });

    let tr = relaxation_time(&s[c.insp_end..c.end], peak_off, pep, rate_hz).unwrap_or(te);

    let pause = if tr > 0.0 { (te - tr) / tr } else { f64::NAN };
    let penh = if pip != 0.0 {
        pep.abs() / pip.abs() * pause
    } else {
        f64::NAN
    };
    let penh_signed = if pip != 0.0 { pep / pip * pause } else { f64::NAN };

    BreathStats {
        duration_s: (c.end - c.start) as f64 / rate_hz,
        ti_s: ti,
        te_s: te,
        tr_s: tr,
        pip,
        pep,
        pause,
        penh,
        penh_signed,
    }
}

/// Time from the start of `exp` until it first drops to
/// `RELAXATION_LEVEL * pep` at or after `peak`.
fn relaxation_time(exp: &[f64], peak: usize, pep: f64, rate_hz: f64) -> Option<f64> {
    let level = RELAXATION_LEVEL * pep;
    let j = peak + exp[peak..].iter().position(|&v| v <= level)?;
    let pos = if j == peak {
        j as f64
    } else {
        let (a, b) = (exp[j - 1], exp[j]);
        (j - 1) as f64 + (a - level) / (a - b)
    };
    Some(pos / rate_hz)
}
