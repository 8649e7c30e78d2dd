//! Command implementations behind the `clinagent` binary.

pub mod config;
pub mod render;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clinagent_core::backend::{Backend, Router};
use clinagent_core::domain::ValidationError;
use clinagent_core::evalkit::{
    emit_table, evaluate, load_dataset, read_records, read_transcript, sample, write_entries_csv, ClockMode,
    DatasetError, DatasetKind, Entry, EvalReport, EvalSettings, SampleError, TranscriptError,
};
use clinagent_core::medagents::MedAgentsOptions;
use thiserror::Error;

use config::{ClockSetting, ConfigError, Overrides, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dataset {path}: {source}")]
    Dataset { path: PathBuf, source: DatasetError },
    #[error("dataset {path}: {source}")]
    Sample { path: PathBuf, source: SampleError },
    #[error("{path}: {invalid} invalid record(s)")]
    InvalidRecords { path: PathBuf, invalid: usize },
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Dataset { .. } | Self::Sample { .. } | Self::InvalidRecords { .. } => EXIT_INPUT,
            Self::Transcript(TranscriptError::Io { .. }) => EXIT_FAILURE,
            Self::Transcript(_) => EXIT_INPUT,
            Self::Io { .. } | Self::Other(_) => EXIT_FAILURE,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(format!("cannot write {}", path.display())))
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(io_err("cannot write output"))
}

#[derive(Debug)]
pub struct RunSummary {
    pub report: EvalReport,
    pub output_dir: PathBuf,
}

fn build_router(config: &RunConfig) -> Result<Router, CliError> {
    let mut backends: Vec<Arc<dyn Backend>> = Vec::new();
    for (i, spec) in config.backends.iter().enumerate() {
        backends.push(spec.build().map_err(|e| ConfigError::Invalid {
            field: format!("backends[{i}]"),
            message: e.to_string(),
        })?);
    }
    Router::new(config.route.clone(), backends).map_err(|e| {
        CliError::Config(ConfigError::Invalid {
            field: "route".into(),
            message: e.to_string(),
        })
    })
}

/// `run <config>`: evaluates the configured pipeline and writes the config
/// snapshot, reports and transcripts to the output directory.
pub fn cmd_run(config_path: &Path, overrides: &Overrides, out: &mut dyn Write) -> Result<RunSummary, CliError> {
    let (mut config, snapshot) = RunConfig::load(config_path)?;
    config.apply(overrides);
    config.validate()?;

    let dataset_path = config.dataset.path.clone();
    let entries = load_dataset(&dataset_path, config.dataset.kind).map_err(|source| CliError::Dataset {
        path: dataset_path.clone(),
        source,
    })?;
    let n = config.n_sample.unwrap_or(entries.len());
    let entries: Vec<Entry> = sample(&entries, n, config.seeds.sample).map_err(|source| CliError::Sample {
        path: dataset_path.clone(),
        source,
    })?;
    if entries.len() < config.k_folds {
        return Err(ConfigError::Invalid {
            field: "k_folds".into(),
            message: format!("{} folds requested for {} entries", config.k_folds, entries.len()),
        }
        .into());
    }

    let router = build_router(&config)?;
    let clock = match config.clock {
        ClockSetting::Real => ClockMode::Real,
        ClockSetting::Simulated => ClockMode::Simulated,
        ClockSetting::Auto if config.all_scripted() => ClockMode::Simulated,
        ClockSetting::Auto => ClockMode::Real,
    };

    let output_dir = config.output_dir.clone();
    fs::create_dir_all(&output_dir).map_err(io_err(format!("cannot create {}", output_dir.display())))?;
    write_file(&output_dir.join("config.toml"), snapshot.as_bytes())?;

    let mut settings = EvalSettings::new(config.pipeline, config.dataset_name());
    settings.k_folds = config.k_folds;
    settings.fold_seed = config.seeds.fold;
    settings.workers = config.workers;
    settings.clock = clock;
    settings.medagents = MedAgentsOptions {
        max_iters: config.max_iters,
        ..Default::default()
    };
    settings.max_turns = config.max_turns;
    settings.transcript_root = Some(output_dir.join("transcripts"));

    let mut report = evaluate(&entries, &router, &settings).map_err(|e| CliError::Other(e.to_string()))?;
    for entry in &mut report.entries {
        if let Some(rel) = &entry.transcript {
            entry.transcript = Some(format!("transcripts/{rel}"));
        }
    }

    let (table, csv) = emit_table(std::slice::from_ref(&report));
    write_file(&output_dir.join("report.csv"), csv.as_bytes())?;
    write_file(&output_dir.join("table.txt"), table.as_bytes())?;
    let mut entries_csv = Vec::new();
    write_entries_csv(&report, &mut entries_csv).map_err(|e| CliError::Other(e.to_string()))?;
    write_file(&output_dir.join("entries.csv"), &entries_csv)?;
    let json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
    write_file(&output_dir.join("report.json"), &json)?;

    write_out(out, &table)?;
    write_out(
        out,
        &format!(
            "\n{} entries, {} failed, clock {}\noutput written to {}\n",
            report.n_entries,
            report.failed_count,
            match clock {
                ClockMode::Real => "real",
                ClockMode::Simulated => "simulated",
            },
            output_dir.display()
        ),
    )?;
    Ok(RunSummary { report, output_dir })
}

/// `replay <path>`: renders a persisted transcript.
pub fn cmd_replay(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let transcript = read_transcript(path)?;
    write_out(out, &render::render(&transcript))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationSummary {
    pub entries: usize,
    pub invalid: Vec<String>,
    pub leaking: Vec<String>,
    /// Option count (MCQ) or candidate count (clinical) histogram.
    pub histogram: BTreeMap<usize, usize>,
}

/// `validate <path> --kind`: reports entry count, option or candidate count
/// histogram and every invalid record; fails if any record is invalid.
pub fn cmd_validate(path: &Path, kind: DatasetKind, out: &mut dyn Write) -> Result<ValidationSummary, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Dataset {
        path: path.to_path_buf(),
        source: DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let mut summary = ValidationSummary {
        entries: 0,
        invalid: Vec::new(),
        leaking: Vec::new(),
        histogram: BTreeMap::new(),
    };
    let mut ids = std::collections::HashSet::new();
    for read in read_records(&text, kind) {
        match read.result {
            Ok(entry) => {
                if !ids.insert(entry.id().to_string()) {
                    summary
                        .invalid
                        .push(format!("record {} (line {}): duplicate id `{}`", read.record, read.line, entry.id()));
                    continue;
                }
                summary.entries += 1;
                let count = match &entry {
                    Entry::Mcq(item) => item.options.len(),
                    Entry::Clinical(case) => case.candidates.len(),
                };
                *summary.histogram.entry(count).or_default() += 1;
            }
            Err(err) => {
                if let clinagent_core::evalkit::RecordError::Invalid(ValidationError::DiagnosisLeakage { id, field }) =
                    &err
                {
                    summary.leaking.push(format!("{id} ({field})"));
                }
                summary.invalid.push(format!("record {} (line {}): {err}", read.record, read.line));
            }
        }
    }

    let mut report = format!("{} entries\n", summary.entries);
    let what = match kind {
        DatasetKind::Mcq => "option counts",
        DatasetKind::Clinical => "candidate counts",
    };
    let histogram: Vec<String> = summary.histogram.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    report.push_str(&format!("{what}: {}\n", if histogram.is_empty() { "-".into() } else { histogram.join(", ") }));
    if kind == DatasetKind::Clinical {
        if summary.leaking.is_empty() {
            report.push_str("leakage check: ok\n");
        } else {
            report.push_str(&format!("leakage check: gold diagnosis visible in {}\n", summary.leaking.join(", ")));
        }
    }
    for problem in &summary.invalid {
        report.push_str(&format!("invalid: {problem}\n"));
    }
    write_out(out, &report)?;

    if summary.entries == 0 && summary.invalid.is_empty() {
        return Err(CliError::Dataset {
            path: path.to_path_buf(),
            source: DatasetError::EmptyDataset,
        });
    }
    if !summary.invalid.is_empty() {
        return Err(CliError::InvalidRecords {
            path: path.to_path_buf(),
            invalid: summary.invalid.len(),
        });
    }
    Ok(summary)
}
