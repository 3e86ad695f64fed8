//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without the libtest harness so the lines always print.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::oracles::*;
use common::{match_boundaries, noisy_profile, segmentation_score};
use pleth_core::breath_metrics::{compute_stats, RELAXATION_LEVEL};
use pleth_core::commands::{cmd_ingest, compare_rows, sigh_stage, IngestOptions, BREATHS_FILE};
use pleth_core::database::{group_by_subject, BreathRow, Metric};
use pleth_core::entropy::{approx_entropy, entropy_set_of};
use pleth_core::pipeline::{process_recording, PipelineConfig};
use pleth_core::preprocess::{derivative_stats, sap_filter, SapOptions};
use pleth_core::reports::{digest_file, write_comparison_csv, COMPARISON_COLUMNS};
use pleth_core::segmentation::{segment, SegmentationConfig};
use pleth_core::sigh_analysis::{
    position_aggregates, RestWindowConfig, SubjectRestConfig, DEFAULT_SIGH_DURATION_MIN_S, SIGH_SLOT,
};
use pleth_core::signal_io::{serialize_edf, Activity, Gene, DEFAULT_CHANNEL_LABEL};
use pleth_core::stats_compare::{
    format_p5, ks_exact_p, ks_two_sample, t_two_sample, ComparisonType, TTestKind, TestKind,
};
use pleth_core::synth::{generate, noise_std_for_snr, ImpulsePolarity, SniffBurst, SynthProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn rows_of(profile: &SynthProfile) -> Vec<BreathRow> {
    let (rec, _) = generate(profile).unwrap();
    process_recording(rec, &PipelineConfig::default()).unwrap().rows
}

fn pop_std(s: &[f64]) -> f64 {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// ApEn kernel against the brute-force oracle.
fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let len = rng.gen_range(5..=50);
        let m = rng.gen_range(0..=4usize.min(len - 2));
        let s: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = 0.2 * pop_std(&s);
        let fast = approx_entropy(&s, m, r).map_err(|e| e.to_string())?;
        worst = worst.max((fast - apen_brute(&s, m, r)).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && elapsed < Duration::from_secs(30),
        format!("500 sequences, max |diff| {worst:.2e}, {}", secs(elapsed)),
    )
}

/// EntropySet is unchanged by scaling the waveform.
fn criterion_2() -> Outcome {
    let mut p = SynthProfile {
        seed: 2,
        duration_s: 80.0,
        ..Default::default()
    };
    p.noise_std = noise_std_for_snr(&p, 20.0).unwrap();
    let rows = rows_of(&p);
    if rows.len() < 100 {
        return Err(format!("only {} breaths generated", rows.len()));
    }
    let mut worst: f64 = 0.0;
    for row in &rows[..100] {
        let s = row.unpadded();
        let base = entropy_set_of(s).map_err(|e| e.to_string())?;
        if base.degenerate {
            return Err("degenerate breath in fixture".into());
        }
        for c in [0.1, 3.0, 100.0] {
            let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
            let other = entropy_set_of(&scaled).map_err(|e| e.to_string())?;
            for (a, b) in base.values.iter().zip(&other.values) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(worst <= 1e-9, format!("100 breaths x 3 scales, max |diff| {worst:.2e}"))
}

/// Boundary precision and recall on the noisy 10-minute recording.
fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (score, _) = segmentation_score(&noisy_profile(0), &SegmentationConfig::default());
    let elapsed = start.elapsed();
    check(
        score.precision() >= 0.99 && score.recall() >= 0.99 && elapsed < Duration::from_secs(60),
        format!(
            "precision {:.4}, recall {:.4} ({} detected, {} true), {}",
            score.precision(),
            score.recall(),
            score.detected,
            score.truth,
            secs(elapsed)
        ),
    )
}

/// Impulse replacement against the same recording rendered without them.
fn criterion_4() -> Outcome {
    let with = noisy_profile(4);
    let without = SynthProfile {
        impulse_count: 0,
        ..with.clone()
    };
    let (dirty, truth) = generate(&with).unwrap();
    let (clean, _) = generate(&without).unwrap();
    let s = &dirty.samples;
    let d = derivative_stats(s).map_err(|e| e.to_string())?;
    let bar = d.mean + 9.0 * d.std;
    if truth.impulse_indices.len() != 50 {
        return Err(format!("{} impulses planted", truth.impulse_indices.len()));
    }
    if let Some(&i) = truth.impulse_indices.iter().find(|&&i| s[i] - s[i - 1] < bar) {
        return Err(format!("impulse at {i} below mean + 9 std"));
    }
    let out = sap_filter(s, &SapOptions::default()).map_err(|e| e.to_string())?;
    let is_impulse = {
        let mut v = vec![false; s.len()];
        truth.impulse_indices.iter().for_each(|&i| v[i] = true);
        v
    };
    let replaced = truth.impulse_indices.iter().filter(|&&i| out.signal[i] != s[i]).count();
    let altered = (0..s.len()).filter(|&i| !is_impulse[i] && out.signal[i] != s[i]).count();
    let clean_n = s.len() - truth.impulse_indices.len();
    let residual = truth
        .impulse_indices
        .iter()
        .map(|&i| (out.signal[i] - clean.samples[i]).abs())
        .fold(0.0, f64::max);
    let replaced_frac = replaced as f64 / 50.0;
    let altered_frac = altered as f64 / clean_n as f64;
    check(
        replaced_frac >= 0.96 && altered_frac <= 0.001,
        format!(
            "{replaced}/50 impulses replaced, {altered}/{clean_n} clean samples altered ({:.4}%), max residual {residual:.3}",
            100.0 * altered_frac
        ),
    )
}

/// Closed-form metrics on a sine train and a piecewise-linear train, both
/// segmented by the real pipeline.
fn criterion_5() -> Outcome {
    let rate = 1000.0;
    let period = 1000;
    let two_samples = 2.0 / rate;
    let mut failures = Vec::new();

    // -sin: inspiration is the first half-period, expiration the second.
    let sine: Vec<f64> = (0..5 * period)
        .map(|i| -(2.0 * PI * i as f64 / period as f64).sin())
        .collect();
    let seg = segment(&sine, rate, &SegmentationConfig::default());
    if seg.kept.len() != 5 {
        failures.push(format!("sine: {} breaths", seg.kept.len()));
    }
    // Expiration is -sin on [0.5, 1) s; it falls back to 0.36 at
    // 1 - asin(0.36) / 2pi.
    let tr_sine = 0.5 - RELAXATION_LEVEL.asin() / (2.0 * PI);
    for c in &seg.kept {
        let st = compute_stats(c, &sine, rate);
        let times = [(st.ti_s, 0.5), (st.te_s, 0.5), (st.tr_s, tr_sine), (st.duration_s, 1.0)];
        if times.iter().any(|(got, want)| (got - want).abs() > two_samples) {
            failures.push(format!("sine times {times:?}"));
        }
        if (st.pip + 1.0).abs() > 1e-9 || (st.pep - 1.0).abs() > 1e-9 {
            failures.push(format!("sine amplitudes {} {}", st.pip, st.pep));
        }
        if (st.penh - st.pep.abs() / st.pip.abs() * st.pause).abs() > 1e-9 {
            failures.push("sine penh identity".into());
        }
    }

    // Triangular inspiration to -A, jump to +P, linear decay to 0. The
    // triangle is sampled at bin centres so every inspiratory sample is
    // strictly negative and the odd length puts one sample on the apex.
    let (ni, ne, a, p) = (401usize, 600usize, 1.5, 2.0);
    let mut lin = Vec::new();
    for _ in 0..5 {
        lin.extend((0..ni).map(|k| -a * (1.0 - (2.0 * (k as f64 + 0.5) / ni as f64 - 1.0).abs())));
        lin.extend((0..ne).map(|k| p * (1.0 - k as f64 / ne as f64)));
    }
    let seg = segment(&lin, rate, &SegmentationConfig::default());
    if seg.kept.len() != 5 {
        failures.push(format!("linear: {} breaths", seg.kept.len()));
    }
    let (ti, te) = (ni as f64 / rate, ne as f64 / rate);
    let tr = (1.0 - RELAXATION_LEVEL) * te;
    let pause = (te - tr) / tr;
    for c in &seg.kept {
        let st = compute_stats(c, &lin, rate);
        let times = [(st.ti_s, ti), (st.te_s, te), (st.tr_s, tr)];
        if times.iter().any(|(got, want)| (got - want).abs() > two_samples) {
            failures.push(format!("linear times {times:?}"));
        }
        let ratios = [
            (st.pip, -a),
            (st.pep, p),
            (st.pause, 0.5625),
            (st.pause, pause),
            (st.penh, p / a * 0.5625),
        ];
        if ratios.iter().any(|(got, want)| (got - want).abs() > 1e-9) {
            failures.push(format!("linear values {ratios:?}"));
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "sine and piecewise-linear trains match closed forms; Pause = 0.5625".into()
        } else {
            failures.join("; ")
        },
    )
}

/// KS and t-test oracles.
fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_d: f64 = 0.0;
    for _ in 0..200 {
        let (na, nb) = (rng.gen_range(1..=60), rng.gen_range(1..=60));
        let a: Vec<f64> = (0..na).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(-1.5..2.5)).collect();
        let d = ks_two_sample(&a, &b).unwrap().d;
        worst_d = worst_d.max((d - ks_d_brute(&a, &b)).abs());
    }
    let mut worst_exact: f64 = 0.0;
    for k in 0..30 {
        let (m, n) = if k == 0 { (12, 12) } else { (rng.gen_range(1..=8), rng.gen_range(1..=8)) };
        let a: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..1.3)).collect();
        let fast = ks_exact_p(&a, &b).unwrap();
        worst_exact = worst_exact.max((fast - ks_exact_enumerate(&a, &b)).abs());
    }
    let welch = t_two_sample(&T_FIXTURE_A, &T_FIXTURE_B, TTestKind::Welch).unwrap();
    let pooled = t_two_sample(&T_FIXTURE_A, &T_FIXTURE_B, TTestKind::Pooled).unwrap();
    let worst_t = [
        (welch.t, T_FIXTURE_WELCH.0),
        (welch.df, T_FIXTURE_WELCH.1),
        (welch.p, T_FIXTURE_WELCH.2),
        (pooled.t, T_FIXTURE_POOLED.0),
        (pooled.df, T_FIXTURE_POOLED.1),
        (pooled.p, T_FIXTURE_POOLED.2),
    ]
    .iter()
    .map(|(g, w)| (g - w).abs())
    .fold(0.0, f64::max);
    let same: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..1.0)).collect();
    let ks_same = ks_two_sample(&same, &same).unwrap();
    let t_same = t_two_sample(&same, &same, TTestKind::Welch).unwrap();
    let identical = ks_same.d == 0.0 && ks_same.p == 1.0 && t_same.t == 0.0 && t_same.p == 1.0;
    check(
        worst_d <= 1e-15 && worst_exact <= 1e-10 && worst_t <= 1e-10 && identical,
        format!(
            "D max diff {worst_d:.1e}, exact p max diff {worst_exact:.1e}, t fixture max diff {worst_t:.1e}, a = b -> (D={}, p={}) and (t={}, p={})",
            ks_same.d, ks_same.p, t_same.t, t_same.p
        ),
    )
}

fn cohort_profile(seed: u64, subject: String, gene: Gene, rate_hz: f64, duration_s: f64, sample_rate: f64) -> SynthProfile {
    let mut p = SynthProfile {
        seed,
        subject_id: subject,
        gene,
        sample_rate_hz: sample_rate,
        base_rate_hz: rate_hz,
        duration_s,
        ..Default::default()
    };
    p.noise_std = noise_std_for_snr(&p, 30.0).unwrap();
    p
}

/// Large cohorts with a 30% duration shift print p as 0.00000; A/A cohorts
/// stay calibrated.
fn criterion_7() -> Outcome {
    let start = Instant::now();
    // 10 subjects per category; category B breathes 30% slower.
    let profiles: Vec<SynthProfile> = (0..20u64)
        .map(|k| {
            let (gene, rate, dur) = if k < 10 {
                (Gene::Gene59, 2.0, 5200.0)
            } else {
                (Gene::Gene95, 2.0 / 1.3, 6800.0)
            };
            cohort_profile(700 + k, format!("s{k:02}"), gene, rate, dur, 200.0)
        })
        .collect();
    let rows: Vec<BreathRow> = profiles.iter().flat_map(rows_of).collect();
    let n59 = rows.iter().filter(|r| r.labels.gene == Gene::Gene59).count();
    let n95 = rows.len() - n59;
    let (table, _) = compare_rows(&rows, ComparisonType::Genetic, TestKind::Ks, TTestKind::Welch, 50)
        .map_err(|e| e.to_string())?;
    drop(rows);
    let mut csv = Vec::new();
    write_comparison_csv(&table, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let p5_col = COMPARISON_COLUMNS.iter().position(|c| *c == "p_value_5dp").unwrap();
    let duration_line = text
        .lines()
        .find(|l| l.starts_with(&format!("{},", Metric::Duration.name())))
        .ok_or("no duration row")?;
    let printed = duration_line.split(',').nth(p5_col).unwrap_or("").to_string();
    let duration_row = table.iter().find(|r| r.metric_name == Metric::Duration.name()).unwrap();

    // A/A: two independent cohorts from one generator, 50 seeds.
    let calibrated = (0..50u64)
        .into_par_iter()
        .filter(|&seed| {
            let a = rows_of(&cohort_profile(10_000 + 2 * seed, "a".into(), Gene::Gene59, 2.0, 500.0, 1000.0));
            let b = rows_of(&cohort_profile(10_001 + 2 * seed, "b".into(), Gene::Gene59, 2.0, 500.0, 1000.0));
            let da: Vec<f64> = a.iter().map(|r| r.stats.duration_s).collect();
            let db: Vec<f64> = b.iter().map(|r| r.stats.duration_s).collect();
            ks_two_sample(&da, &db).unwrap().p > 0.01
        })
        .count();
    let elapsed = start.elapsed();
    check(
        n59 >= 100_000 && n95 >= 100_000 && printed == "0.00000" && calibrated >= 45,
        format!(
            "cohorts {n59} vs {n95} breaths, D {:.4}, p printed {printed:?} (format_p5 {}); A/A p > 0.01 in {calibrated}/50; {}",
            duration_row.statistic,
            format_p5(duration_row.p_value),
            secs(elapsed)
        ),
    )
}

/// Four subjects with ten planted sighs each.
fn criterion_8() -> Outcome {
    let mut cohort_rows = Vec::new();
    let mut config = RestWindowConfig::default();
    let mut truth_sighs: Vec<(String, Vec<usize>)> = Vec::new();
    for k in 0..4u64 {
        let subject = format!("rat{k}");
        let mut p = SynthProfile {
            seed: 800 + k,
            subject_id: subject.clone(),
            activity: if k % 2 == 0 { Activity::Midrest } else { Activity::Midactive },
            gene: if k < 2 { Gene::Gene59 } else { Gene::Gene95 },
            duration_s: 300.0,
            sigh_times: (0..10).map(|j| 20.0 + 26.0 * j as f64).collect(),
            sniff_bursts: vec![
                SniffBurst {
                    start_s: 33.0,
                    len_s: 2.0,
                    freq_hz: 8.0,
                },
                SniffBurst {
                    start_s: 150.0,
                    len_s: 3.0,
                    freq_hz: 10.0,
                },
            ],
            ..Default::default()
        };
        p.noise_std = noise_std_for_snr(&p, 25.0).unwrap();
        let (rec, truth) = generate(&p).unwrap();
        let mut peps: Vec<f64> = truth.breaths.iter().filter(|b| !b.is_sigh).map(|b| b.pep).collect();
        peps.sort_by(f64::total_cmp);
        let baseline = peps[peps.len() / 2];
        config.subjects.push(SubjectRestConfig {
            subject_id: subject.clone(),
            pep_threshold: 2.0 * baseline,
            windows: Vec::new(),
            windows_s: vec![[0.0, p.duration_s]],
        });
        let starts: Vec<usize> = truth.breaths.iter().filter(|b| b.is_sigh).map(|b| b.start_index).collect();
        truth_sighs.push((subject, starts));
        cohort_rows.extend(process_recording(rec, &PipelineConfig::default()).map_err(|e| e.to_string())?.rows);
    }
    let planted: usize = truth_sighs.iter().map(|(_, v)| v.len()).sum();
    let cohort = group_by_subject(cohort_rows);
    let stage = sigh_stage(&cohort, &config, DEFAULT_SIGH_DURATION_MIN_S, None).map_err(|e| e.to_string())?;

    let (mut matched, mut detected) = (0, 0);
    for (subject, starts) in &truth_sighs {
        let mut found: Vec<usize> = stage
            .sequences
            .iter()
            .filter(|s| &s.labels.subject_id == subject)
            .map(|s| (cohort[subject][s.sigh_breath_number].start_time_s * 1000.0).round() as usize)
            .collect();
        found.sort_unstable();
        let score = match_boundaries(&found, starts, 20);
        matched += score.matched;
        detected += score.detected;
    }
    let precision = matched as f64 / detected.max(1) as f64;
    let recall = matched as f64 / planted as f64;

    let aggs = position_aggregates(&stage.sequences, &cohort, Metric::E4).map_err(|e| e.to_string())?;
    let median = |pos: usize| aggs[pos - 1].stats.as_ref().map(|b| b.median);
    let sigh_median = median(SIGH_SLOT + 1).ok_or("no sigh E4")?;
    let pre: Vec<f64> = (1..=SIGH_SLOT).filter_map(median).collect();
    let pre_mean = pre.iter().sum::<f64>() / pre.len() as f64;
    check(
        planted == 40 && precision >= 0.95 && recall >= 0.95 && sigh_median < pre_mean,
        format!(
            "{planted} planted, {} candidates, {detected} kept after duration filter, precision {precision:.3}, recall {recall:.3}; E4 median at 11 {sigh_median:.4} vs mean of 1-10 medians {pre_mean:.4}",
            stage.candidates
        ),
    )
}

/// 10^8-sample ingest: wall time and byte-identical re-run.
fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let edf = dir.path().join("big.edf");
    let mut p = SynthProfile {
        seed: 9,
        subject_id: "big".into(),
        duration_s: 100_000.0,
        impulse_count: 500,
        impulse_magnitude: 100.0,
        impulse_polarity: ImpulsePolarity::Positive,
        ..Default::default()
    };
    p.noise_std = noise_std_for_snr(&p, 20.0).unwrap();
    {
        let (rec, _) = generate(&p).unwrap();
        if rec.samples.len() != 100_000_000 {
            return Err(format!("{} samples generated", rec.samples.len()));
        }
        std::fs::write(&edf, serialize_edf(&rec).unwrap()).map_err(|e| e.to_string())?;
    }
    let out = dir.path().join("out");
    let opts = IngestOptions {
        inputs: vec![edf],
        labels: None,
        out_dir: out.clone(),
        channel_label: DEFAULT_CHANNEL_LABEL.into(),
        pipeline: PipelineConfig::default(),
    };
    let mut runs = Vec::new();
    for _ in 0..2 {
        let start = Instant::now();
        let report = cmd_ingest(&opts).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let db = digest_file(&out.join(BREATHS_FILE)).map_err(|e| e.to_string())?;
        let manifest = std::fs::read(out.join("ingest_manifest.json")).map_err(|e| e.to_string())?;
        runs.push((elapsed, report.breaths, db, manifest));
    }
    let identical = runs[0].2 == runs[1].2 && runs[0].3 == runs[1].3;
    let slowest = runs.iter().map(|r| r.0).max().unwrap();
    check(
        identical && slowest <= Duration::from_secs(300),
        format!(
            "{} breaths, database {} bytes sha256 {}..., runs {} and {}, identical {identical}",
            runs[0].1,
            runs[0].2.bytes,
            &runs[0].2.sha256[..12],
            secs(runs[0].0),
            secs(runs[1].0)
        ),
    )
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "ApEn oracle equivalence", criterion_1),
        (2, "ApEn scale invariance", criterion_2),
        (3, "segmentation accuracy", criterion_3),
        (4, "SAP filter efficacy", criterion_4),
        (5, "metric correctness", criterion_5),
        (6, "KS and t-test oracles", criterion_6),
        (7, "large-cohort p reporting and A/A calibration", criterion_7),
        (8, "sigh pipeline", criterion_8),
        (9, "ingest determinism and throughput", criterion_9),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {n} PASS: {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL: {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
