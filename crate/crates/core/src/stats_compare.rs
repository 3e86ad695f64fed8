//! Two-sample tests and distribution summaries.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 divisor); 0 for a single value.
    pub std: f64,
    pub n: usize,
    /// Set when `n == 1` and `std` is not an estimate.
    pub single: bool,
}

pub fn summarize(samples: &[f64]) -> Result<Summary> {
    if samples.is_empty() {
        return Err(Error::insufficient("cannot summarize an empty sample"));
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Summary {
        mean,
        std,
        n,
        single: n == 1,
    })
}

fn sorted(samples: &[f64], what: &str) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::insufficient(format!("{what} is empty")));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::Parameter(format!("{what} contains NaN")));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
///
/// `D` comes from a merge sweep over both sorted samples; tied values are
/// consumed together so each ECDF is evaluated right after a jump. The
/// p-value is the Kolmogorov survival function at
/// `(sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) * D`, `ne = na nb / (na + nb)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let a = sorted(a, "first sample")?;
    let b = sorted(b, "second sample")?;
    let d = ks_sweep(&a, &b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ne = na * nb / (na + nb);
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    Ok(KsResult {
        d,
        p: kolmogorov_sf(lambda).clamp(0.0, 1.0),
    })
}

fn ks_sweep(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// `P(K > lambda)` for the Kolmogorov distribution. The alternating series
/// `2 sum (-1)^(k-1) exp(-2 k^2 lambda^2)` is used for `lambda >= 1`; below
/// that it converges slowly and the equivalent theta-function form of the
/// CDF is summed instead.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    const TERM_EPS: f64 = 1e-16;
    if lambda >= 1.0 {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = f64::from(k);
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            if term < TERM_EPS {
                break;
            }
            sign = -sign;
        }
        2.0 * sum
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let odd = f64::from(2 * k - 1);
            let term = (-odd * odd * PI * PI / (8.0 * lambda * lambda)).exp();
            sum += term;
            if term < TERM_EPS {
                break;
            }
        }
        1.0 - (2.0 * PI).sqrt() / lambda * sum
    }
}

/// Exact permutation p-value `P(D >= d_obs)` for two samples without ties,
/// by counting monotone lattice paths that stay strictly inside the band.
/// Counts are exact while `C(na + nb, na) < 2^53` (e.g. both sizes <= 25).
pub fn ks_exact_p(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a, "first sample")?;
    let b = sorted(b, "second sample")?;
    let (m, n) = (a.len(), b.len());

    // Integer form of D: max |i n - j m| over the sweep.
    let (mut i, mut j) = (0, 0);
    let mut d_int: i64 = 0;
    while i < m && j < n {
        let x = a[i].min(b[j]);
        while i < m && a[i] <= x {
            i += 1;
        }
        while j < n && b[j] <= x {
            j += 1;
        }
        d_int = d_int.max((i as i64 * n as i64 - j as i64 * m as i64).abs());
    }

    let inside = |i: usize, j: usize| (i as i64 * n as i64 - j as i64 * m as i64).abs() < d_int;
    let mut row = vec![0.0f64; n + 1];
    for i in 0..=m {
        for j in 0..=n {
            row[j] = if i == 0 && j == 0 {
                1.0
            } else if !inside(i, j) {
                0.0
            } else {
                let up = if i > 0 { row[j] } else { 0.0 };
                let left = if j > 0 { row[j - 1] } else { 0.0 };
                up + left
            };
        }
    }
    let total = binomial(m + n, m);
    Ok((1.0 - row[n] / total).clamp(0.0, 1.0))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    #[default]
    Welch,
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sided two-sample t-test. The p-value is
/// `I_{df / (df + t^2)}(df / 2, 1 / 2)`.
pub fn t_two_sample(a: &[f64], b: &[f64], kind: TTestKind) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::insufficient(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let sa = summarize(a)?;
    let sb = summarize(b)?;
    let (na, nb) = (sa.n as f64, sb.n as f64);
    let (va, vb) = (sa.std * sa.std, sb.std * sb.std);
    let diff = sa.mean - sb.mean;

    let (se2, df) = match kind {
        TTestKind::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = if se2 > 0.0 {
                se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0))
            } else {
                na + nb - 2.0
            };
            (se2, df)
        }
        TTestKind::Pooled => {
            let df = na + nb - 2.0;
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            (sp2 * (1.0 / na + 1.0 / nb), df)
        }
    };

    if se2 == 0.0 {
        return Ok(if diff == 0.0 {
            TTestResult { t: 0.0, df, p: 1.0 }
        } else {
            TTestResult {
                t: diff.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = diff / se2.sqrt();
    Ok(TTestResult {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(0.5 * df, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SighImpact {
    pub abs: f64,
    /// `p_pre - p_post`.
    pub signed: f64,
}

pub fn sigh_impact(p_pre: f64, p_post: f64) -> Result<SighImpact> {
    for p in [p_pre, p_post] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parameter(format!("p-value {p} outside [0, 1]")));
        }
    }
    let signed = p_pre - p_post;
    Ok(SighImpact {
        abs: signed.abs(),
        signed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `counts.len() + 1` edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins spanning the sample range (±0.5 around a constant
/// sample).
pub fn histogram(samples: &[f64], bin_count: usize) -> Result<Histogram> {
    let v = sorted(samples, "histogram sample")?;
    histogram_with_range(&v, bin_count, v[0], v[v.len() - 1])
}

/// Equal-width bins over `[lo, hi]`, e.g. shared by two categories. Every
/// sample must lie inside the range.
pub fn histogram_with_range(samples: &[f64], bin_count: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if bin_count == 0 {
        return Err(Error::Parameter("histogram needs at least one bin".into()));
    }
    if samples.is_empty() {
        return Err(Error::insufficient("histogram sample is empty"));
    }
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    if !(lo < hi) || samples.iter().any(|x| !(lo..=hi).contains(x)) {
        return Err(Error::Parameter(format!(
            "histogram samples must lie in [{lo}, {hi}]"
        )));
    }
    let width = (hi - lo) / bin_count as f64;
    let edges = (0..=bin_count)
        .map(|k| if k == bin_count { hi } else { lo + k as f64 * width })
        .collect();
    let mut counts = vec![0; bin_count];
    for &x in samples {
        let k = (((x - lo) / (hi - lo)) * bin_count as f64).floor() as usize;
        counts[k.min(bin_count - 1)] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme values inside `[q1 - 1.5 IQR, q3 + 1.5 IQR]`.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile (`(n - 1) p` positioning) of sorted data.
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn box_stats(samples: &[f64]) -> Result<BoxStats> {
    let v = sorted(samples, "box-plot sample")?;
    let q1 = quantile_sorted(&v, 0.25);
    let median = quantile_sorted(&v, 0.5);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || v.iter().copied().filter(|&x| x >= fence_lo && x <= fence_hi);
    let whisker_low = inside().next().unwrap_or(q1);
    let whisker_high = inside().last().unwrap_or(q3);
    let outliers = v
        .iter()
        .copied()
        .filter(|&x| x < fence_lo || x > fence_hi)
        .collect();
    Ok(BoxStats {
        n: v.len(),
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparisonType {
    Activity,
    Genetic,
}

impl ComparisonType {
    pub fn as_str(self) -> &'static str {
        match self {
            ComparisonType::Activity => "activity",
            ComparisonType::Genetic => "genetic",
        }
    }
}

impl fmt::Display for ComparisonType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComparisonType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "activity" => Ok(ComparisonType::Activity),
            "genetic" | "gene" => Ok(ComparisonType::Genetic),
            other => Err(Error::Usage(format!(
                "unknown comparison {other:?} (expected activity or genetic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Phase {
    #[serde(rename = "pre_sigh")]
    PreSigh,
    #[serde(rename = "post_sigh")]
    PostSigh,
    #[serde(rename = "global")]
    Global,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreSigh => "pre_sigh",
            Phase::PostSigh => "post_sigh",
            Phase::Global => "global",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Ks,
    T,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Ks => "ks",
            TestKind::T => "t",
        }
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ks" => Ok(TestKind::Ks),
            "t" => Ok(TestKind::T),
            other => Err(Error::Usage(format!(
                "unknown test {other:?} (expected ks or t)"
            ))),
        }
    }
}

/// One line of a category comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric_name: String,
    pub comparison_type: ComparisonType,
    pub phase: Phase,
    pub cat1_label: String,
    pub cat2_label: String,
    pub cat1: Summary,
    pub cat2: Summary,
    pub means_difference: f64,
    pub p_value: f64,
    pub sigh_impact: Option<SighImpact>,
    pub test: TestKind,
    /// `D` for the KS test, `t` for the t-test.
    pub statistic: f64,
}

impl ComparisonRow {
    pub fn new(
        metric_name: &str,
        comparison_type: ComparisonType,
        phase: Phase,
        (cat1_label, cat1_values): (&str, &[f64]),
        (cat2_label, cat2_values): (&str, &[f64]),
        test: TestKind,
        t_kind: TTestKind,
    ) -> Result<Self> {
        let cat1 = summarize(cat1_values)?;
        let cat2 = summarize(cat2_values)?;
        let (statistic, p_value) = match test {
            TestKind::Ks => {
                let r = ks_two_sample(cat1_values, cat2_values)?;
                (r.d, r.p)
            }
            TestKind::T => {
                let r = t_two_sample(cat1_values, cat2_values, t_kind)?;
                (r.t, r.p)
            }
        };
        Ok(ComparisonRow {
            metric_name: metric_name.to_string(),
            comparison_type,
            phase,
            cat1_label: cat1_label.to_string(),
            cat2_label: cat2_label.to_string(),
            means_difference: cat1.mean - cat2.mean,
            cat1,
            cat2,
            p_value,
            sigh_impact: None,
            test,
            statistic,
        })
    }
}

/// p-value rendered at five decimals, the reporting precision of the tables.
pub fn format_p5(p: f64) -> String {
    format!("{p:.5}")
}
