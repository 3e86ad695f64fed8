//! Synthetic plethysmography recordings with exact ground truth.
//!
//! Each breath of duration `T` is rendered as
//!
//! * inspiration, `0 <= u < Ti`: `-A sin(pi u / Ti)`;
//! * expiration rise, `0 <= v < tp`: `P sin(pi v / (2 tp))`;
//! * expiration decay, `tp <= v < Te`:
//!   `P (exp(-(v - tp) / tau) - c) / (1 - c)` with `c = exp(-(Te - tp) / tau)`,
//!   so the lobe reaches zero exactly at the end of the breath.
//!
//! `P` is chosen so expired and inspired areas match and every breath has
//! zero mean. Closed forms follow: `PIP = -A`, `PEP = P`,
//! `Tr = tp - tau ln(0.36 + 0.64 c)`.
//!
//! Random draws come from independent ChaCha streams per feature class
//! (timing, amplitude, impulses, noise, sniffing), so e.g. adding impulses
//! leaves breath timing and noise untouched.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::breath_metrics::RELAXATION_LEVEL;
use crate::error::{Error, Result};
use crate::signal_io::{Activity, Gene, Recording, SubjectLabels};

const STREAM_TIMING: u64 = 1;
const STREAM_AMPLITUDE: u64 = 2;
const STREAM_IMPULSE: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_SNIFF: u64 = 5;

/// Minimum spacing between injected impulses, in samples.
pub const IMPULSE_SPACING: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SniffBurst {
    pub start_s: f64,
    pub len_s: f64,
    pub freq_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestWindow {
    pub start_s: f64,
    pub end_s: f64,
    /// Multiplies the breathing rate (below 1 slows breathing).
    #[serde(default = "one")]
    pub rate_scale: f64,
    #[serde(default = "one")]
    pub amplitude_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpulsePolarity {
    #[default]
    Both,
    Positive,
    Negative,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthProfile {
    pub seed: u64,
    pub subject_id: String,
    pub activity: Activity,
    pub gene: Gene,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    /// Breaths per second.
    pub base_rate_hz: f64,
    /// Uniform relative jitter of each breath period.
    pub rate_jitter: f64,
    pub inspiration_fraction: f64,
    /// Inspiratory peak magnitude.
    pub amplitude: f64,
    pub amplitude_jitter: f64,
    /// Position of the expiratory peak as a fraction of `Te`.
    pub expiration_peak_fraction: f64,
    /// `(Te - tp) / tau`: how many time constants the decay spans.
    pub expiration_decay_ratio: f64,
    /// Each time marks the first breath starting at or after it as a sigh.
    pub sigh_times: Vec<f64>,
    pub sigh_amplitude_factor: f64,
    pub sigh_duration_factor: f64,
    pub sniff_bursts: Vec<SniffBurst>,
    pub sniff_amplitude_factor: f64,
    pub impulse_count: usize,
    pub impulse_magnitude: f64,
    pub impulse_polarity: ImpulsePolarity,
    pub noise_std: f64,
    pub rest_windows: Vec<RestWindow>,
}

impl Default for SynthProfile {
    fn default() -> Self {
        SynthProfile {
            seed: 0,
            subject_id: "synth".into(),
            activity: Activity::Midactive,
            gene: Gene::Gene59,
            sample_rate_hz: 1000.0,
            duration_s: 60.0,
            base_rate_hz: 2.0,
            rate_jitter: 0.1,
            inspiration_fraction: 0.4,
            amplitude: 1.0,
            amplitude_jitter: 0.1,
            expiration_peak_fraction: 0.2,
            expiration_decay_ratio: 3.0,
            sigh_times: Vec::new(),
            sigh_amplitude_factor: 3.0,
            sigh_duration_factor: 2.5,
            sniff_bursts: Vec::new(),
            sniff_amplitude_factor: 0.4,
            impulse_count: 0,
            impulse_magnitude: 0.0,
            impulse_polarity: ImpulsePolarity::Both,
            noise_std: 0.0,
            rest_windows: Vec::new(),
        }
    }
}

fn require(ok: bool, field: &'static str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Profile {
            field,
            message: message.into(),
        })
    }
}

impl SynthProfile {
    pub fn labels(&self) -> SubjectLabels {
        SubjectLabels {
            subject_id: self.subject_id.clone(),
            activity: self.activity,
            gene: self.gene,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        require(!self.subject_id.trim().is_empty(), "subject_id", "must not be empty")?;
        require(pos(self.sample_rate_hz), "sample_rate_hz", "must be positive")?;
        require(pos(self.duration_s), "duration_s", "must be positive")?;
        require(pos(self.base_rate_hz), "base_rate_hz", "must be positive")?;
        require(
            (0.0..1.0).contains(&self.rate_jitter),
            "rate_jitter",
            "must be in [0, 1)",
        )?;
        require(
            self.inspiration_fraction > 0.0 && self.inspiration_fraction < 1.0,
            "inspiration_fraction",
            "must be in (0, 1)",
        )?;
        require(pos(self.amplitude), "amplitude", "must be positive")?;
        require(
            (0.0..1.0).contains(&self.amplitude_jitter),
            "amplitude_jitter",
            "must be in [0, 1)",
        )?;
        require(
            self.expiration_peak_fraction > 0.0 && self.expiration_peak_fraction < 1.0,
            "expiration_peak_fraction",
            "must be in (0, 1)",
        )?;
        require(
            pos(self.expiration_decay_ratio),
            "expiration_decay_ratio",
            "must be positive",
        )?;
        require(
            pos(self.sigh_amplitude_factor),
            "sigh_amplitude_factor",
            "must be positive",
        )?;
        require(
            pos(self.sigh_duration_factor),
            "sigh_duration_factor",
            "must be positive",
        )?;
        require(
            self.sigh_times.iter().all(|t| t.is_finite() && *t >= 0.0),
            "sigh_times",
            "must be non-negative",
        )?;
        require(
            pos(self.sniff_amplitude_factor),
            "sniff_amplitude_factor",
            "must be positive",
        )?;
        for b in &self.sniff_bursts {
            require(
                b.start_s >= 0.0 && pos(b.len_s) && pos(b.freq_hz),
                "sniff_bursts",
                format!("invalid burst {b:?}"),
            )?;
        }
        require(
            self.impulse_magnitude.is_finite() && self.impulse_magnitude >= 0.0,
            "impulse_magnitude",
            "must be non-negative",
        )?;
        require(
            self.noise_std.is_finite() && self.noise_std >= 0.0,
            "noise_std",
            "must be non-negative",
        )?;
        for w in &self.rest_windows {
            require(
                w.start_s >= 0.0 && w.end_s > w.start_s && pos(w.rate_scale) && pos(w.amplitude_scale),
                "rest_windows",
                format!("invalid window {w:?}"),
            )?;
        }
        let n = self.sample_count();
        require(
            self.impulse_count == 0 || self.impulse_count * IMPULSE_SPACING * 2 < n,
            "impulse_count",
            "too many impulses for the recording length",
        )?;
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    fn rest_at(&self, t: f64) -> Option<&RestWindow> {
        self.rest_windows
            .iter()
            .find(|w| t >= w.start_s && t < w.end_s)
    }

    fn sniff_at(&self, t: f64) -> Option<&SniffBurst> {
        self.sniff_bursts
            .iter()
            .find(|b| t >= b.start_s && t < b.start_s + b.len_s)
    }
}

/// Ground truth for one rendered breath. Times are in seconds from the start
/// of the recording; `*_index` are the first samples at or after those times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueBreath {
    pub start_s: f64,
    pub insp_end_s: f64,
    pub end_s: f64,
    pub start_index: usize,
    pub insp_end_index: usize,
    pub end_index: usize,
    pub is_sigh: bool,
    pub is_sniff: bool,
    pub in_rest: bool,
    pub ti_s: f64,
    pub te_s: f64,
    pub tr_s: f64,
    pub pip: f64,
    pub pep: f64,
    pub pause: f64,
    pub penh: f64,
    /// Expiratory peak offset and decay constant, for rendering.
    #[serde(skip)]
    shape: LobeShape,
}

impl TrueBreath {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Noise-free value `t` seconds into the recording, if `t` lies in this
    /// breath.
    pub fn value_at(&self, t: f64) -> f64 {
        let u = t - self.start_s;
        if u < 0.0 || u >= self.duration_s() {
            return 0.0;
        }
        self.shape.value(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct LobeShape {
    ti: f64,
    te: f64,
    a: f64,
    p: f64,
    tp: f64,
    tau: f64,
    c: f64,
}

impl LobeShape {
    fn new(ti: f64, te: f64, a: f64, peak_fraction: f64, decay_ratio: f64) -> Self {
        let tp = peak_fraction * te;
        let d = te - tp;
        let tau = d / decay_ratio;
        let c = (-decay_ratio).exp();
        let insp_area = 2.0 * a * ti / PI;
        let exp_unit_area = 2.0 * tp / PI + (tau * (1.0 - c) - c * d) / (1.0 - c);
        LobeShape {
            ti,
            te,
            a,
            p: insp_area / exp_unit_area,
            tp,
            tau,
            c,
        }
    }

    fn value(&self, u: f64) -> f64 {
        if u < self.ti {
            -self.a * (PI * u / self.ti).sin()
        } else {
            let v = u - self.ti;
            if v < self.tp {
                self.p * (0.5 * PI * v / self.tp).sin()
            } else {
                self.p * ((-(v - self.tp) / self.tau).exp() - self.c) / (1.0 - self.c)
            }
        }
    }

    fn tr(&self) -> f64 {
        self.tp - self.tau * (RELAXATION_LEVEL + (1.0 - RELAXATION_LEVEL) * self.c).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GroundTruth {
    pub breaths: Vec<TrueBreath>,
    pub impulse_indices: Vec<usize>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn first_index_at(t: f64, rate: f64) -> usize {
    // Guard against t * rate landing a hair above an integer.
    let x = t * rate;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Breath timing, amplitudes and closed-form metrics, without rendering.
pub fn breath_plan(profile: &SynthProfile) -> Result<Vec<TrueBreath>> {
    profile.validate()?;
    let mut timing = stream(profile.seed, STREAM_TIMING);
    let mut amp_rng = stream(profile.seed, STREAM_AMPLITUDE);
    let mut sniff_rng = stream(profile.seed, STREAM_SNIFF);
    let rate = profile.sample_rate_hz;
    let mut sighs: Vec<f64> = profile.sigh_times.clone();
    sighs.sort_by(f64::total_cmp);
    let mut next_sigh = 0;

    let mut breaths = Vec::new();
    let mut t = 0.0;
    loop {
        let rest = profile.rest_at(t);
        let sniff = profile.sniff_at(t);
        let is_sigh = next_sigh < sighs.len() && sighs[next_sigh] <= t;
        if is_sigh {
            next_sigh += 1;
            // Sighs planted in the same breath collapse into one.
            while next_sigh < sighs.len() && sighs[next_sigh] <= t {
                next_sigh += 1;
            }
        }

        let (mut period, mut amp) = match (sniff, is_sigh) {
            (Some(b), false) => {
                let jitter = sniff_rng.gen_range(-1.0..=1.0) * profile.rate_jitter;
                (
                    (1.0 + jitter) / b.freq_hz,
                    profile.amplitude * profile.sniff_amplitude_factor,
                )
            }
            _ => {
                let breath_rate = profile.base_rate_hz * rest.map_or(1.0, |w| w.rate_scale);
                let jitter = timing.gen_range(-1.0..=1.0) * profile.rate_jitter;
                (
                    (1.0 + jitter) / breath_rate,
                    profile.amplitude * rest.map_or(1.0, |w| w.amplitude_scale),
                )
            }
        };
        amp *= 1.0 + amp_rng.gen_range(-1.0..=1.0) * profile.amplitude_jitter;
        if is_sigh {
            period *= profile.sigh_duration_factor;
            amp *= profile.sigh_amplitude_factor;
        }
        if t + period > profile.duration_s {
            break;
        }

        let ti = profile.inspiration_fraction * period;
        let te = period - ti;
        let shape = LobeShape::new(
            ti,
            te,
            amp,
            profile.expiration_peak_fraction,
            profile.expiration_decay_ratio,
        );
        let tr = shape.tr();
        let pause = (te - tr) / tr;
        breaths.push(TrueBreath {
            start_s: t,
            insp_end_s: t + ti,
            end_s: t + period,
            start_index: first_index_at(t, rate),
            insp_end_index: first_index_at(t + ti, rate),
            end_index: first_index_at(t + period, rate),
            is_sigh,
            is_sniff: sniff.is_some() && !is_sigh,
            in_rest: rest.is_some(),
            ti_s: ti,
            te_s: te,
            tr_s: tr,
            pip: -amp,
            pep: shape.p,
            pause,
            penh: shape.p / amp * pause,
            shape,
        });
        t += period;
    }
    Ok(breaths)
}

/// Noise-free, impulse-free signal for a breath plan.
pub fn render_clean(profile: &SynthProfile, breaths: &[TrueBreath]) -> Vec<f64> {
    let n = profile.sample_count();
    let rate = profile.sample_rate_hz;
    let mut samples = vec![0.0; n];
    for b in breaths {
        let end = b.end_index.min(n);
        for (k, slot) in samples.iter_mut().enumerate().take(end).skip(b.start_index) {
            *slot = b.shape.value(k as f64 / rate - b.start_s);
        }
    }
    samples
}

/// Root mean square of the clean rendering.
pub fn clean_rms(profile: &SynthProfile) -> Result<f64> {
    let plan = breath_plan(profile)?;
    let s = render_clean(profile, &plan);
    Ok((s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt())
}

/// Noise standard deviation giving `snr_db` relative to the clean signal
/// power.
pub fn noise_std_for_snr(profile: &SynthProfile, snr_db: f64) -> Result<f64> {
    Ok(clean_rms(profile)? / 10f64.powf(snr_db / 20.0))
}

fn impulse_positions(profile: &SynthProfile, n: usize) -> Vec<usize> {
    let mut rng = stream(profile.seed, STREAM_IMPULSE);
    let margin = IMPULSE_SPACING;
    let mut picked: Vec<usize> = Vec::with_capacity(profile.impulse_count);
    while picked.len() < profile.impulse_count {
        let k = rng.gen_range(margin..n - margin);
        if picked.iter().all(|&p| p.abs_diff(k) >= IMPULSE_SPACING) {
            picked.push(k);
        }
    }
    picked.sort_unstable();
    picked
}

pub fn generate(profile: &SynthProfile) -> Result<(Recording, GroundTruth)> {
    let breaths = breath_plan(profile)?;
    let mut samples = render_clean(profile, &breaths);
    let n = samples.len();

    if profile.noise_std > 0.0 {
        let mut rng = stream(profile.seed, STREAM_NOISE);
        let normal = Normal::new(0.0, profile.noise_std).expect("validated noise std");
        for v in samples.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    let impulse_indices = impulse_positions(profile, n);
    let mut polarity_rng = stream(profile.seed, STREAM_IMPULSE ^ 0x100);
    for &k in &impulse_indices {
        let sign = match profile.impulse_polarity {
            ImpulsePolarity::Positive => 1.0,
            ImpulsePolarity::Negative => -1.0,
            ImpulsePolarity::Both => {
                if polarity_rng.gen_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        samples[k] += sign * profile.impulse_magnitude;
    }

    let recording = Recording::new(profile.labels(), profile.sample_rate_hz, samples)?;
    Ok((
        recording,
        GroundTruth {
            breaths,
            impulse_indices,
        },
    ))
}

/// Writes one ground-truth row per breath.
pub fn write_truth_csv<W: Write>(truth: &GroundTruth, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in &truth.breaths {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}
