//! The `ingest`, `compare`, `sigh` and `synth` commands, independent of
//! argument parsing.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Deserialize;

use crate::breath_metrics::RELAXATION_LEVEL;
use crate::database::{group_by_subject, read_breaths, write_breaths, BreathRow, Cohort, Metric};
use crate::entropy::{MAX_EMBEDDING, RADIUS_STD_FACTOR};
use crate::error::{Error, Result};
use crate::pipeline::{process_recording, PipelineConfig, Processed, RecordingCounters};
use crate::reports::{
    digest_file, write_comparison_csv, write_histograms_csv, write_positions_csv,
    write_sequences_csv, FileDigest, HistogramEntry, RunManifest,
};
use crate::segmentation::{MinDeviationRule, DECIMATION, PADDED_LEN};
use crate::sigh_analysis::{
    apply_exclusions, build_sequences, category_of, detect_sighs, duration_filter,
    position_aggregates, pre_post_compare, PrePostOptions, RestWindowConfig, SighSequence, CONTEXT,
};
use crate::signal_io::{parse_edf, read_channel, serialize_edf, Activity, Gene, SubjectLabels};
use crate::stats_compare::{
    histogram_with_range, ComparisonRow, ComparisonType, Phase, TTestKind, TestKind,
};
use crate::synth::{generate, write_truth_csv, SynthProfile};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::from(e).in_file(path))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))
}

fn finish(w: BufWriter<File>, path: &Path) -> Result<FileDigest> {
    w.into_inner()
        .map_err(|e| Error::from(e.into_error()).in_file(path))?
        .sync_all()
        .map_err(|e| Error::from(e).in_file(path))?;
    digest_file(path)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))
}

fn min_dev_rule_text(rule: MinDeviationRule) -> String {
    match rule {
        MinDeviationRule::StdFraction(f) => format!("-{f}*std"),
        MinDeviationRule::Absolute(v) => v.to_string(),
    }
}

#[derive(Debug, Deserialize)]
struct LabelLine {
    file: String,
    subject_id: String,
    activity: String,
    gene: String,
}

/// Reads `file,subject_id,activity,gene`. Keys are the file entries as
/// written.
pub fn read_labels_csv(path: &Path) -> Result<HashMap<String, SubjectLabels>> {
    let source = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::from(e).in_file(path))?;
    let headers = reader.headers().map_err(|e| Error::from(e).in_file(path))?.clone();
    let mut out = HashMap::new();
    for rec in reader.records() {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: source.clone(),
            line,
            message,
        };
        let raw = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = raw.position().map_or(0, |p| p.line());
        let rec: LabelLine = raw
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let labels = SubjectLabels {
            subject_id: rec.subject_id,
            activity: rec
                .activity
                .parse::<Activity>()
                .map_err(|e| parse_err(line, e.to_string()))?,
            gene: rec
                .gene
                .parse::<Gene>()
                .map_err(|e| parse_err(line, e.to_string()))?,
        };
        if out.insert(rec.file.clone(), labels).is_some() {
            return Err(parse_err(line, format!("file {} listed twice", rec.file)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub inputs: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub channel_label: String,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub breaths: usize,
    pub recordings: Vec<RecordingCounters>,
    pub database: PathBuf,
    pub manifest: PathBuf,
}

pub const BREATHS_FILE: &str = "breaths.csv";

fn load_and_process(
    path: &Path,
    labels: Option<&SubjectLabels>,
    channel: &str,
    config: &PipelineConfig,
) -> Result<(FileDigest, Processed)> {
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    let (n, sha256) = crate::reports::digest_reader(bytes.as_slice())?;
    let digest = FileDigest {
        path: path.display().to_string(),
        bytes: n,
        sha256,
    };
    let recording = match labels {
        Some(l) => read_channel(&bytes, channel).and_then(|c| c.into_recording(l.clone())),
        None => parse_edf(&bytes, channel),
    }
    .map_err(|e| e.in_file(path))?;
    drop(bytes);
    let processed = process_recording(recording, config).map_err(|e| e.in_file(path))?;
    Ok((digest, processed))
}

pub fn cmd_ingest(opts: &IngestOptions) -> Result<IngestReport> {
    if opts.inputs.is_empty() {
        return Err(Error::Usage("ingest needs at least one EDF file".into()));
    }
    let label_map = match &opts.labels {
        Some(p) => Some(read_labels_csv(p)?),
        None => None,
    };
    let lookup = |p: &Path| -> Option<&SubjectLabels> {
        let map = label_map.as_ref()?;
        map.get(&p.display().to_string()).or_else(|| {
            p.file_name()
                .and_then(|f| map.get(f.to_string_lossy().as_ref()))
        })
    };

    let results: Vec<(FileDigest, Processed)> = opts
        .inputs
        .par_iter()
        .map(|p| load_and_process(p, lookup(p), &opts.channel_label, &opts.pipeline))
        .collect::<Result<_>>()?;

    let mut owners: BTreeMap<&str, &str> = BTreeMap::new();
    for (digest, processed) in &results {
        let id = processed.counters.subject_id.as_str();
        if let Some(first) = owners.insert(id, &digest.path) {
            return Err(Error::Config(format!(
                "subject {id} appears in both {first} and {}",
                digest.path
            )));
        }
    }

    ensure_dir(&opts.out_dir)?;
    let db_path = opts.out_dir.join(BREATHS_FILE);
    let mut w = crate::database::BreathCsvWriter::new(create(&db_path)?)
        .map_err(|e| e.in_file(&db_path))?;
    let mut total = 0;
    for (_, processed) in &results {
        for row in &processed.rows {
            w.write(row).map_err(|e| e.in_file(&db_path))?;
        }
        total += processed.rows.len();
    }
    let out_digest = finish(w.finish()?, &db_path)?;

    let cfg = &opts.pipeline;
    let mut m = RunManifest::new("ingest");
    m.inputs = results.iter().map(|(d, _)| d.clone()).collect();
    if let Some(p) = &opts.labels {
        m.inputs.push(digest_file(p)?);
    }
    m.param("channel_label", &opts.channel_label)
        .param("sap_threshold", cfg.sap.threshold)
        .param("sap_symmetric", cfg.sap.symmetric)
        .param("sap_alignment", cfg.sap.alignment)
        .param("duration_min_s", cfg.segmentation.duration_min_s)
        .param("min_dev_max", min_dev_rule_text(cfg.segmentation.min_deviation))
        .param("downsample", cfg.segmentation.downsample)
        .param("decimation", DECIMATION)
        .param("padded_len", PADDED_LEN)
        .param("relaxation_level", RELAXATION_LEVEL)
        .param("apen_max_m", MAX_EMBEDDING)
        .param("apen_radius_std_factor", RADIUS_STD_FACTOR);
    let sum = |f: fn(&RecordingCounters) -> usize| results.iter().map(|(_, p)| f(&p.counters)).sum::<usize>();
    m.counter("recordings", results.len())
        .counter("breaths_kept", total)
        .counter("breaths_removed", sum(|c| c.merged_divisions))
        .counter("spans_dropped", sum(|c| c.dropped_spans))
        .counter("sap_replacements", sum(|c| c.sap_replacements))
        .counter("truncated_waveforms", sum(|c| c.truncated_waveforms))
        .counter("degenerate_entropy", sum(|c| c.degenerate_entropy))
        .counter("entropy_skipped", sum(|c| c.entropy_skipped))
        .counter(
            "per_recording",
            results.iter().map(|(_, p)| &p.counters).collect::<Vec<_>>(),
        );
    m.outputs.push(out_digest);
    let manifest = opts.out_dir.join("ingest_manifest.json");
    m.write(&manifest)?;
    info!("ingested {} recordings, {total} breaths", results.len());

    Ok(IngestReport {
        breaths: total,
        recordings: results.into_iter().map(|(_, p)| p.counters).collect(),
        database: db_path,
        manifest,
    })
}

pub fn load_database(path: &Path) -> Result<Vec<BreathRow>> {
    let file = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    read_breaths(std::io::BufReader::new(file), &path.display().to_string())
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub database: PathBuf,
    pub comparison: ComparisonType,
    pub test: TestKind,
    pub t_kind: TTestKind,
    pub bins: usize,
    pub out_dir: PathBuf,
}

fn category_pair(ct: ComparisonType) -> [&'static str; 2] {
    match ct {
        ComparisonType::Activity => [Activity::Midactive.as_str(), Activity::Midrest.as_str()],
        ComparisonType::Genetic => [Gene::Gene59.as_str(), Gene::Gene95.as_str()],
    }
}

/// Global comparison rows (one per metric) and shared-range histograms.
pub fn compare_rows(
    rows: &[BreathRow],
    ct: ComparisonType,
    test: TestKind,
    t_kind: TTestKind,
    bins: usize,
) -> Result<(Vec<ComparisonRow>, Vec<HistogramEntry>)> {
    let cats = category_pair(ct);
    let per_metric: Vec<(ComparisonRow, Vec<HistogramEntry>)> = Metric::ALL
        .par_iter()
        .map(|&metric| {
            let mut pools: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for r in rows {
                let v = r.metric(metric);
                if v.is_nan() {
                    continue;
                }
                let c = category_of(&r.labels, ct);
                pools[usize::from(c == cats[1])].push(v);
            }
            for (pool, cat) in pools.iter().zip(cats) {
                if pool.is_empty() {
                    return Err(Error::insufficient(format!(
                        "no {metric} values for category {cat}"
                    )));
                }
            }
            let row = ComparisonRow::new(
                metric.name(),
                ct,
                Phase::Global,
                (cats[0], &pools[0]),
                (cats[1], &pools[1]),
                test,
                t_kind,
            )?;
            let all = pools.iter().flatten().copied();
            let lo = all.clone().fold(f64::INFINITY, f64::min);
            let hi = all.fold(f64::NEG_INFINITY, f64::max);
            let hists = pools
                .iter()
                .zip(cats)
                .map(|(pool, cat)| {
                    Ok(HistogramEntry {
                        metric,
                        category: cat.to_string(),
                        histogram: histogram_with_range(pool, bins, lo, hi)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((row, hists))
        })
        .collect::<Result<_>>()?;
    let mut table = Vec::with_capacity(per_metric.len());
    let mut hists = Vec::new();
    for (row, h) in per_metric {
        table.push(row);
        hists.extend(h);
    }
    Ok((table, hists))
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub rows: Vec<ComparisonRow>,
    pub table: PathBuf,
    pub histograms: PathBuf,
}

pub fn cmd_compare(opts: &CompareOptions) -> Result<CompareReport> {
    let rows = load_database(&opts.database)?;
    let (table, hists) = compare_rows(&rows, opts.comparison, opts.test, opts.t_kind, opts.bins)?;
    ensure_dir(&opts.out_dir)?;
    let ct = opts.comparison.as_str();
    let table_path = opts.out_dir.join(format!("comparison_{ct}.csv"));
    let mut w = create(&table_path)?;
    write_comparison_csv(&table, &mut w)?;
    let table_digest = finish(w, &table_path)?;
    let hist_path = opts.out_dir.join(format!("histograms_{ct}.csv"));
    let mut w = create(&hist_path)?;
    write_histograms_csv(&hists, &mut w)?;
    let hist_digest = finish(w, &hist_path)?;

    let mut m = RunManifest::new("compare");
    m.inputs.push(digest_file(&opts.database)?);
    m.param("comparison", ct)
        .param("test", opts.test)
        .param("t_test_kind", t_kind_name(opts.t_kind))
        .param("bins", opts.bins);
    m.counter("breaths", rows.len())
        .counter("metrics", table.len());
    m.outputs = vec![table_digest, hist_digest];
    m.write(&opts.out_dir.join(format!("compare_{ct}_manifest.json")))?;
    Ok(CompareReport {
        rows: table,
        table: table_path,
        histograms: hist_path,
    })
}

fn t_kind_name(k: TTestKind) -> &'static str {
    match k {
        TTestKind::Welch => "welch",
        TTestKind::Pooled => "pooled",
    }
}

#[derive(Debug, Clone)]
pub struct SighOptions {
    pub database: PathBuf,
    pub rest_config: PathBuf,
    pub exclusions: Option<PathBuf>,
    pub sigh_duration_min_s: f64,
    pub context_depth: usize,
    pub t_kind: TTestKind,
    pub out_dir: PathBuf,
}

/// Detection through exclusions, shared by the command and tests.
#[derive(Debug, Clone, Default)]
pub struct SighStage {
    pub candidates: usize,
    pub sequences: Vec<SighSequence>,
    pub excluded: usize,
    pub unmatched_exclusions: usize,
}

pub fn sigh_stage(
    cohort: &Cohort,
    config: &RestWindowConfig,
    sigh_duration_min_s: f64,
    exclusions: Option<(&str, &str)>,
) -> Result<SighStage> {
    for s in &config.subjects {
        if !cohort.contains_key(&s.subject_id) {
            return Err(Error::Config(format!(
                "rest config names unknown subject {}",
                s.subject_id
            )));
        }
    }
    let by_id: BTreeMap<&str, _> = config
        .subjects
        .iter()
        .map(|s| (s.subject_id.as_str(), s))
        .collect();
    let mut stage = SighStage::default();
    for (id, breaths) in cohort {
        let Some(cfg) = by_id.get(id.as_str()) else {
            warn!("subject {id} has no rest windows; skipped for sigh analysis");
            continue;
        };
        let candidates = detect_sighs(breaths, cfg)?;
        stage.candidates += candidates.len();
        let sighs = duration_filter(&candidates, breaths, sigh_duration_min_s);
        stage
            .sequences
            .extend(build_sequences(&breaths[0].labels, breaths.len(), &sighs, CONTEXT));
    }
    if let Some((text, source)) = exclusions {
        let out = apply_exclusions(&mut stage.sequences, text.as_bytes(), source)?;
        stage.excluded = out.excluded;
        stage.unmatched_exclusions = out.unmatched.len();
    }
    Ok(stage)
}

const BREATH_TABLE_METRICS: [Metric; 8] = [
    Metric::Duration,
    Metric::Ti,
    Metric::Te,
    Metric::Tr,
    Metric::Pip,
    Metric::Pep,
    Metric::Pause,
    Metric::Penh,
];
const ENTROPY_TABLE_METRICS: [Metric; 5] = [Metric::E0, Metric::E1, Metric::E2, Metric::E3, Metric::E4];

pub fn sigh_tables(
    stage: &SighStage,
    cohort: &Cohort,
    opts: &PrePostOptions,
) -> Result<[Vec<ComparisonRow>; 2]> {
    let table = |metrics: &[Metric]| -> Result<Vec<ComparisonRow>> {
        let mut rows = Vec::new();
        for &metric in metrics {
            for ct in [ComparisonType::Genetic, ComparisonType::Activity] {
                rows.extend(pre_post_compare(&stage.sequences, cohort, metric, ct, opts)?);
            }
        }
        Ok(rows)
    };
    Ok([table(&BREATH_TABLE_METRICS)?, table(&ENTROPY_TABLE_METRICS)?])
}

#[derive(Debug, Clone)]
pub struct SighReport {
    pub stage: SighStage,
    pub breath_table: Vec<ComparisonRow>,
    pub entropy_table: Vec<ComparisonRow>,
}

pub fn cmd_sigh(opts: &SighOptions) -> Result<SighReport> {
    let cohort = group_by_subject(load_database(&opts.database)?);
    let config = RestWindowConfig::from_json(&read_text(&opts.rest_config)?)
        .map_err(|e| e.in_file(&opts.rest_config))?;
    let exclusion_text = match &opts.exclusions {
        Some(p) => Some((read_text(p)?, p.display().to_string())),
        None => None,
    };
    let stage = sigh_stage(
        &cohort,
        &config,
        opts.sigh_duration_min_s,
        exclusion_text.as_ref().map(|(t, s)| (t.as_str(), s.as_str())),
    )?;
    let pp = PrePostOptions {
        context_depth: opts.context_depth,
        t_kind: opts.t_kind,
    };

    let (positions, [breath_table, entropy_table]) = if stage.sequences.is_empty() {
        warn!("no sighs detected; writing empty tables");
        (Vec::new(), [Vec::new(), Vec::new()])
    } else {
        let positions = Metric::ALL
            .iter()
            .map(|&m| Ok((m, position_aggregates(&stage.sequences, &cohort, m)?)))
            .collect::<Result<Vec<_>>>()?;
        (positions, sigh_tables(&stage, &cohort, &pp)?)
    };

    ensure_dir(&opts.out_dir)?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let path = opts.out_dir.join(name);
        let mut w = create(&path)?;
        f(&mut w)?;
        outputs.push(finish(w, &path)?);
        Ok(())
    };
    emit("sigh_sequences.csv", &|w| write_sequences_csv(&stage.sequences, w))?;
    emit("sigh_positions.csv", &|w| write_positions_csv(&positions, w))?;
    emit("sigh_table_breath.csv", &|w| write_comparison_csv(&breath_table, w))?;
    emit("sigh_table_entropy.csv", &|w| write_comparison_csv(&entropy_table, w))?;

    let mut m = RunManifest::new("sigh");
    m.inputs.push(digest_file(&opts.database)?);
    m.inputs.push(digest_file(&opts.rest_config)?);
    if let Some(p) = &opts.exclusions {
        m.inputs.push(digest_file(p)?);
    }
    m.param("sigh_duration_min_s", opts.sigh_duration_min_s)
        .param("context_depth", opts.context_depth)
        .param("sequence_context", CONTEXT)
        .param("t_test_kind", t_kind_name(opts.t_kind))
        .param(
            "pep_thresholds",
            config
                .subjects
                .iter()
                .map(|s| (s.subject_id.clone(), s.pep_threshold))
                .collect::<BTreeMap<_, _>>(),
        );
    let excluded_all = stage.sequences.iter().filter(|s| s.excluded).count();
    m.counter("sigh_candidates", stage.candidates)
        .counter("sighs_detected", stage.sequences.len())
        .counter("sighs_excluded", excluded_all)
        .counter("unmatched_exclusions", stage.unmatched_exclusions);
    m.outputs = outputs;
    m.write(&opts.out_dir.join("sigh_manifest.json"))?;
    Ok(SighReport {
        stage,
        breath_table,
        entropy_table,
    })
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub profile: PathBuf,
    pub edf_out: PathBuf,
    pub truth_out: Option<PathBuf>,
}

pub fn cmd_synth(opts: &SynthOptions) -> Result<()> {
    let profile: SynthProfile = serde_json::from_str(&read_text(&opts.profile)?)
        .map_err(|e| Error::Config(format!("profile: {e}")).in_file(&opts.profile))?;
    let (rec, truth) = generate(&profile)?;
    let bytes = serialize_edf(&rec)?;
    fs::write(&opts.edf_out, bytes).map_err(|e| Error::from(e).in_file(&opts.edf_out))?;
    if let Some(p) = &opts.truth_out {
        let mut w = create(p)?;
        write_truth_csv(&truth, &mut w)?;
        w.flush().map_err(|e| Error::from(e).in_file(p))?;
    }
    Ok(())
}

/// Writes a breath database directly, for callers that already hold rows.
pub fn write_database(rows: &[BreathRow], path: &Path) -> Result<FileDigest> {
    let w = write_breaths(rows, create(path)?)?;
    finish(w, path)
}
