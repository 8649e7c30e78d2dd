use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::{DatasetKind, Entry};
use super::folds::{aggregate, split_folds, FoldError};
use super::transcript::{persist_transcript, transcript_relpath};
use crate::agentclinic::{run_encounter, DEFAULT_MAX_TURNS};
use crate::backend::{Clock, ManualClock, Router, Session, SystemClock};
use crate::cod::{diagnose, CodOptions};
use crate::domain::{Role, Transcript, Verdict};
use crate::medagents::{run_medagents, MedAgentsOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Cod,
    MedAgents,
    AgentClinic,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cod => "cod",
            Self::MedAgents => "medagents",
            Self::AgentClinic => "agentclinic",
        }
    }

    pub fn dataset_kind(self) -> DatasetKind {
        match self {
            Self::MedAgents => DatasetKind::Mcq,
            Self::Cod | Self::AgentClinic => DatasetKind::Clinical,
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::Cod, Self::MedAgents, Self::AgentClinic]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown pipeline `{s}` (expected cod, medagents or agentclinic)"))
    }
}

/// Time source for each entry's session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Wall clock; runtimes are real.
    #[default]
    Real,
    /// A fresh simulated clock per entry; runtimes are the sum of declared
    /// backend latencies and backoffs, and therefore reproducible.
    Simulated,
}

#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub pipeline: Pipeline,
    pub dataset_name: String,
    pub k_folds: usize,
    pub fold_seed: u64,
    pub workers: usize,
    pub clock: ClockMode,
    pub cod: CodOptions,
    pub medagents: MedAgentsOptions,
    pub max_turns: usize,
    /// When set, each entry's transcript is written below this directory.
    pub transcript_root: Option<PathBuf>,
}

impl EvalSettings {
    pub fn new(pipeline: Pipeline, dataset_name: impl Into<String>) -> Self {
        Self {
            pipeline,
            dataset_name: dataset_name.into(),
            k_folds: 3,
            fold_seed: 0,
            workers: 1,
            clock: ClockMode::default(),
            cod: CodOptions::default(),
            medagents: MedAgentsOptions::default(),
            max_turns: DEFAULT_MAX_TURNS,
            transcript_root: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("pipeline {pipeline} needs {expected} entries, entry `{id}` is {found}")]
    KindMismatch {
        pipeline: Pipeline,
        expected: DatasetKind,
        found: DatasetKind,
        id: String,
    },
    #[error(transparent)]
    Folds(#[from] FoldError),
    #[error("workers must be at least 1")]
    NoWorkers,
    #[error("cannot write transcript for `{id}`: {source}")]
    Transcript { id: String, source: std::io::Error },
}

/// Result of running one entry through a pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryOutcome {
    pub verdict: Verdict,
    pub runtime_seconds: f64,
    /// The pipeline aborted; the verdict is INCORRECT.
    pub error: Option<String>,
    pub calls: usize,
    pub transcript: Transcript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub id: String,
    /// 1-based fold number.
    pub fold: usize,
    pub verdict: Verdict,
    pub runtime_seconds: f64,
    pub failed: bool,
    pub error: Option<String>,
    pub calls: usize,
    /// Transcript location relative to the transcript root.
    pub transcript: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub pipeline: String,
    pub route: String,
    pub dataset: String,
    pub std_convention: &'static str,
    pub n_entries: usize,
    pub k_folds: usize,
    pub fold_seed: u64,
    pub fold_sizes: Vec<usize>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_runtime_seconds: f64,
    /// Correct entries over all entries; equals `mean_accuracy` when folds
    /// are equal-sized.
    pub overall_accuracy: f64,
    pub failed_count: usize,
    pub entries: Vec<EntryRecord>,
}

/// Runs one entry. Never fails: pipeline errors become a failed INCORRECT
/// outcome with the error noted in the transcript.
pub fn run_entry(entry: &Entry, router: &Router, settings: &EvalSettings) -> EntryOutcome {
    let clock: Arc<dyn Clock> = match settings.clock {
        ClockMode::Real => Arc::new(SystemClock::new()),
        ClockMode::Simulated => Arc::new(ManualClock::new()),
    };
    let mut session = Session::new(router, entry.id(), clock);
    let result: Result<Verdict, String> = match (settings.pipeline, entry) {
        (Pipeline::Cod, Entry::Clinical(case)) => diagnose(case, &mut session, &settings.cod)
            .map(|r| r.verdict)
            .map_err(|e| e.to_string()),
        (Pipeline::MedAgents, Entry::Mcq(item)) => run_medagents(item, &mut session, &settings.medagents)
            .map(|r| r.verdict)
            .map_err(|e| e.to_string()),
        (Pipeline::AgentClinic, Entry::Clinical(case)) => run_encounter(case, &mut session, settings.max_turns)
            .map(|r| r.verdict)
            .map_err(|e| e.to_string()),
        (pipeline, entry) => Err(format!("{pipeline} cannot run a {} entry", entry.kind())),
    };
    let runtime_seconds = session.elapsed_seconds();
    let (verdict, error) = match result {
        Ok(verdict) => (verdict, None),
        Err(e) => {
            tracing::warn!(entry = entry.id(), error = %e, "entry failed");
            session.note(Role::System, format!("ERROR: {e}"));
            session.note(Role::System, format!("VERDICT: {}", Verdict::Incorrect));
            (Verdict::Incorrect, Some(e))
        }
    };
    let calls = session.call_count();
    let (transcript, _) = session.into_parts();
    EntryOutcome {
        verdict,
        runtime_seconds,
        error,
        calls,
        transcript,
    }
}

fn run_all(entries: &[Entry], router: &Router, settings: &EvalSettings) -> Vec<EntryOutcome> {
    if settings.workers <= 1 || entries.len() <= 1 {
        return entries.iter().map(|e| run_entry(e, router, settings)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<EntryOutcome>>> = Mutex::new(vec![None; entries.len()]);
    std::thread::scope(|scope| {
        for _ in 0..settings.workers.min(entries.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(entry) = entries.get(i) else { break };
                let outcome = run_entry(entry, router, settings);
                slots.lock().unwrap()[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every entry ran"))
        .collect()
}

/// Runs every entry once, assigns verdicts to folds and aggregates.
pub fn evaluate(entries: &[Entry], router: &Router, settings: &EvalSettings) -> Result<EvalReport, EvalError> {
    if settings.workers == 0 {
        return Err(EvalError::NoWorkers);
    }
    let expected = settings.pipeline.dataset_kind();
    if let Some(entry) = entries.iter().find(|e| e.kind() != expected) {
        return Err(EvalError::KindMismatch {
            pipeline: settings.pipeline,
            expected,
            found: entry.kind(),
            id: entry.id().to_string(),
        });
    }
    let ids: Vec<String> = entries.iter().map(|e| e.id().to_string()).collect();
    let plan = split_folds(&ids, settings.k_folds, settings.fold_seed)?;

    let outcomes = run_all(entries, router, settings);

    let mut records = Vec::with_capacity(entries.len());
    for (id, outcome) in ids.iter().zip(&outcomes) {
        let transcript = match &settings.transcript_root {
            Some(root) => {
                persist_transcript(&outcome.transcript, root, &settings.dataset_name, settings.pipeline.as_str())
                    .map_err(|source| EvalError::Transcript { id: id.clone(), source })?;
                let rel = transcript_relpath(&settings.dataset_name, settings.pipeline.as_str(), id);
                Some(rel.iter().map(|c| c.to_string_lossy()).collect::<Vec<_>>().join("/"))
            }
            None => None,
        };
        records.push(EntryRecord {
            id: id.clone(),
            fold: plan.fold_of(id).expect("every id is in a fold") + 1,
            verdict: outcome.verdict,
            runtime_seconds: outcome.runtime_seconds,
            failed: outcome.error.is_some(),
            error: outcome.error.clone(),
            calls: outcome.calls,
            transcript,
        });
    }

    let fold_accuracies: Vec<f64> = (1..=plan.folds.len())
        .map(|fold| {
            let in_fold: Vec<_> = records.iter().filter(|r| r.fold == fold).collect();
            let correct = in_fold.iter().filter(|r| r.verdict.is_correct()).count();
            100.0 * correct as f64 / in_fold.len() as f64
        })
        .collect();
    let runtimes: Vec<f64> = records.iter().map(|r| r.runtime_seconds).collect();
    let agg = aggregate(&fold_accuracies, &runtimes).expect("at least one fold");
    let correct = records.iter().filter(|r| r.verdict.is_correct()).count();
    let overall_accuracy = 100.0 * correct as f64 / records.len() as f64;
    let fold_sizes = plan.sizes();
    if fold_sizes.iter().all(|s| *s == fold_sizes[0]) {
        debug_assert!((agg.mean - overall_accuracy).abs() < 1e-9);
    }

    Ok(EvalReport {
        pipeline: settings.pipeline.to_string(),
        route: router.config().name.clone(),
        dataset: settings.dataset_name.clone(),
        std_convention: "sample",
        n_entries: records.len(),
        k_folds: plan.folds.len(),
        fold_seed: plan.seed,
        fold_sizes,
        fold_accuracies,
        mean_accuracy: agg.mean,
        std_accuracy: agg.std,
        mean_runtime_seconds: agg.mean_runtime,
        overall_accuracy,
        failed_count: records.iter().filter(|r| r.failed).count(),
        entries: records,
    })
}
