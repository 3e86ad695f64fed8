use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pleth_core::commands::{
    cmd_compare, cmd_ingest, cmd_sigh, cmd_synth, CompareOptions, IngestOptions, SighOptions,
    SynthOptions,
};
use pleth_core::error::{Error, Result};
use pleth_core::pipeline::PipelineConfig;
use pleth_core::preprocess::{SapAlignment, SapOptions, DEFAULT_SAP_THRESHOLD};
use pleth_core::segmentation::{
    Downsample, MinDeviationRule, SegmentationConfig, DEFAULT_DURATION_MIN_S,
    DEFAULT_MIN_DEV_STD_FRACTION,
};
use pleth_core::sigh_analysis::{CONTEXT, DEFAULT_SIGH_DURATION_MIN_S};
use pleth_core::signal_io::DEFAULT_CHANNEL_LABEL;
use pleth_core::stats_compare::{ComparisonType, TTestKind, TestKind};

/// Whole-body plethysmography breath analysis.
#[derive(Parser)]
#[command(name = "pleth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment EDF recordings into a breath database.
    Ingest(IngestArgs),
    /// Compare breath metrics between two categories.
    Compare(CompareArgs),
    /// Pre/post-sigh sequence analysis.
    Sigh(SighArgs),
    /// Write a synthetic recording from a JSON profile.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// EDF files, one subject each.
    files: Vec<PathBuf>,
    /// CSV with columns file,subject_id,activity,gene for files whose
    /// headers do not carry labels.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = DEFAULT_CHANNEL_LABEL)]
    channel_label: String,
    #[arg(long, default_value_t = DEFAULT_SAP_THRESHOLD)]
    sap_threshold: f64,
    /// Flag derivative outliers in both directions.
    #[arg(long)]
    sap_symmetric: bool,
    /// `incoming` tests s[i] - s[i-1]; `outgoing` tests s[i+1] - s[i].
    #[arg(long, default_value = "incoming")]
    sap_alignment: String,
    #[arg(long, default_value_t = DEFAULT_DURATION_MIN_S)]
    duration_min: f64,
    /// Absolute level (e.g. -0.3) or a multiple of the signal std (e.g.
    /// 0.5std, meaning -0.5 * std).
    #[arg(long, allow_hyphen_values = true)]
    min_dev_max: Option<String>,
    /// `decimate` or `block-mean`.
    #[arg(long, default_value = "decimate")]
    downsample: String,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    database: PathBuf,
    /// `activity` or `genetic`.
    #[arg(long)]
    comparison: String,
    /// `ks` or `t`.
    #[arg(long, default_value = "ks")]
    test: String,
    /// Pooled-variance t-test instead of Welch.
    #[arg(long)]
    pooled: bool,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SighArgs {
    #[arg(long)]
    database: PathBuf,
    #[arg(long)]
    rest_config: PathBuf,
    /// CSV with columns subject_id,sigh_breath_number,reason.
    #[arg(long)]
    exclusions: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SIGH_DURATION_MIN_S)]
    sigh_duration_min: f64,
    /// Neighbours per side pooled in the pre/post comparison.
    #[arg(long, default_value_t = CONTEXT)]
    context_depth: usize,
    #[arg(long)]
    pooled: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth CSV, one row per breath.
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn parse_min_dev(text: Option<&str>) -> Result<MinDeviationRule> {
    let Some(text) = text else {
        return Ok(MinDeviationRule::StdFraction(DEFAULT_MIN_DEV_STD_FRACTION));
    };
    let bad = || Error::Usage(format!("invalid --min-dev-max {text:?}"));
    match text.strip_suffix("std") {
        Some(f) => {
            let f: f64 = f.trim().parse().map_err(|_| bad())?;
            if f < 0.0 {
                return Err(bad());
            }
            Ok(MinDeviationRule::StdFraction(f))
        }
        None => Ok(MinDeviationRule::Absolute(text.parse().map_err(|_| bad())?)),
    }
}

fn t_kind(pooled: bool) -> TTestKind {
    if pooled {
        TTestKind::Pooled
    } else {
        TTestKind::Welch
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => {
            let alignment = match a.sap_alignment.as_str() {
                "incoming" => SapAlignment::Incoming,
                "outgoing" => SapAlignment::Outgoing,
                other => return Err(Error::Usage(format!("unknown --sap-alignment {other:?}"))),
            };
            let downsample = match a.downsample.as_str() {
                "decimate" => Downsample::Decimate,
                "block-mean" => Downsample::BlockMean,
                other => return Err(Error::Usage(format!("unknown --downsample {other:?}"))),
            };
            if !(a.sap_threshold > 0.0) {
                return Err(Error::Usage("--sap-threshold must be positive".into()));
            }
            if !(a.duration_min >= 0.0) {
                return Err(Error::Usage("--duration-min must be non-negative".into()));
            }
            let report = cmd_ingest(&IngestOptions {
                inputs: a.files,
                labels: a.labels,
                out_dir: a.out_dir,
                channel_label: a.channel_label,
                pipeline: PipelineConfig {
                    sap: SapOptions {
                        threshold: a.sap_threshold,
                        symmetric: a.sap_symmetric,
                        alignment,
                    },
                    segmentation: SegmentationConfig {
                        duration_min_s: a.duration_min,
                        min_deviation: parse_min_dev(a.min_dev_max.as_deref())?,
                        downsample,
                    },
                },
            })?;
            println!("{} breaths -> {}", report.breaths, report.database.display());
        }
        Command::Compare(a) => {
            if a.bins == 0 {
                return Err(Error::Usage("--bins must be at least 1".into()));
            }
            let report = cmd_compare(&CompareOptions {
                database: a.database,
                comparison: a.comparison.parse::<ComparisonType>()?,
                test: a.test.parse::<TestKind>()?,
                t_kind: t_kind(a.pooled),
                bins: a.bins,
                out_dir: a.out_dir,
            })?;
            println!("{} rows -> {}", report.rows.len(), report.table.display());
        }
        Command::Sigh(a) => {
            if !(1..=CONTEXT).contains(&a.context_depth) {
                return Err(Error::Usage(format!("--context-depth must be in 1..={CONTEXT}")));
            }
            let report = cmd_sigh(&SighOptions {
                database: a.database,
                rest_config: a.rest_config,
                exclusions: a.exclusions,
                sigh_duration_min_s: a.sigh_duration_min,
                context_depth: a.context_depth,
                t_kind: t_kind(a.pooled),
                out_dir: a.out_dir,
            })?;
            println!(
                "{} sigh sequences ({} excluded)",
                report.stage.sequences.len(),
                report.stage.sequences.iter().filter(|s| s.excluded).count()
            );
        }
        Command::Synth(a) => cmd_synth(&SynthOptions {
            profile: a.profile,
            edf_out: a.out,
            truth_out: a.truth,
        })?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
