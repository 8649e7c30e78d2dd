#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use clinagent_cli::config::{ClockSetting, DatasetConfig, Overrides, RunConfig, Seeds};
use clinagent_cli::{cmd_run, RunSummary};
use clinagent_core::backend::{BackendKind, BackendSpec, RouteConfig, RouteKey, ScriptRule, ScriptSpec};
use clinagent_core::cod::choice_label;
use clinagent_core::domain::{ClinicalCase, McqItem};
use clinagent_core::evalkit::{load_dataset, DatasetKind, Entry, Pipeline};
use clinagent_core::text::fold_key;

pub const PANEL: &str = "Experts: Pulmonology, Infectious Disease, Cardiology, Neurology, Pathology";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn scripted(name: &str, script: Vec<ScriptRule>, latency_seconds: f64) -> BackendSpec {
    BackendSpec {
        name: name.into(),
        kind: BackendKind::Scripted(ScriptSpec {
            script,
            latency_seconds,
            retry_limit: 0,
        }),
    }
}

pub fn clinical_cases() -> Vec<ClinicalCase> {
    load_dataset(&fixture("clinical_30.jsonl"), DatasetKind::Clinical)
        .unwrap()
        .into_iter()
        .map(|e| match e {
            Entry::Clinical(c) => c,
            Entry::Mcq(_) => unreachable!(),
        })
        .collect()
}

pub fn mcq_items() -> Vec<McqItem> {
    load_dataset(&fixture("mcq_30.jsonl"), DatasetKind::Mcq)
        .unwrap()
        .into_iter()
        .map(|e| match e {
            Entry::Mcq(m) => m,
            Entry::Clinical(_) => unreachable!(),
        })
        .collect()
}

/// Index of the gold candidate, or of the first wrong one.
fn pick(case: &ClinicalCase, gold: bool) -> usize {
    let key = fold_key(&case.correct_diagnosis);
    case.candidates
        .iter()
        .position(|c| (fold_key(&c.name) == key) == gold)
        .expect("fixture case has both gold and wrong candidates")
}

fn marker(id: &str) -> String {
    format!("Case {id}:")
}

fn base(pipeline: Pipeline, dataset: &str, kind: DatasetKind, output_dir: &Path) -> RunConfig {
    RunConfig {
        pipeline,
        dataset: DatasetConfig {
            path: fixture(dataset),
            kind,
            name: None,
        },
        backends: Vec::new(),
        route: RouteConfig::uniform("scripted", "main"),
        n_sample: Some(30),
        k_folds: 3,
        seeds: Seeds { sample: 7, fold: 11 },
        max_iters: 3,
        max_turns: 20,
        workers: 3,
        output_dir: output_dir.to_path_buf(),
        clock: ClockSetting::Auto,
    }
}

/// CoD run whose backbone always names the gold (or a wrong) candidate.
pub fn cod_oracle(gold: bool, output_dir: &Path) -> RunConfig {
    let mut config = base(Pipeline::Cod, "clinical_30.jsonl", DatasetKind::Clinical, output_dir);
    let rules = clinical_cases()
        .iter()
        .map(|c| ScriptRule::on(marker(&c.id), format!("Answer: {}", choice_label(pick(c, gold)))).repeating())
        .collect();
    config.backends.push(scripted("main", rules, 1.5));
    config
}

/// MedAgents run with a unanimous panel and a decider that always picks the
/// gold (or a wrong) option.
pub fn medagents_oracle(gold: bool, output_dir: &Path) -> RunConfig {
    let mut config = base(Pipeline::MedAgents, "mcq_30.jsonl", DatasetKind::Mcq, output_dir);
    let panel = vec![
        ScriptRule::on("Do you agree with this report?", "Yes.").repeating(),
        ScriptRule::on("Aggregate these analyses", "Report: the findings fit one option best.").repeating(),
        ScriptRule::on("Create 5 experts", PANEL).repeating(),
        ScriptRule::reply("The presentation narrows the options considerably.").repeating(),
    ];
    let decisions = mcq_items()
        .iter()
        .map(|m| {
            let letter = if gold {
                m.answer
            } else {
                *m.options.keys().find(|k| **k != m.answer).unwrap()
            };
            ScriptRule::on(marker(&m.id), format!("Answer: {letter}")).repeating()
        })
        .collect();
    config.backends.push(scripted("main", panel, 0.25));
    config.backends.push(scripted("decider", decisions, 0.5));
    config.route = config.route.with_override(RouteKey::MedAgentsDecide, "decider");
    config
}

/// AgentClinic run: the doctor requests a stored test, asks one question,
/// then declares the gold (or a wrong) candidate.
pub fn agentclinic_oracle(gold: bool, output_dir: &Path) -> RunConfig {
    let mut config = base(Pipeline::AgentClinic, "clinical_30.jsonl", DatasetKind::Clinical, output_dir);
    let mut doctor = vec![
        ScriptRule::on("you have asked 0 so far", "REQUEST TEST: Chest_X-Ray").repeating(),
        ScriptRule::on("you have asked 1 so far", "How long have you had these symptoms?").repeating(),
    ];
    for case in clinical_cases() {
        let declared = &case.candidates[pick(&case, gold)].name;
        doctor.push(ScriptRule::on(marker(&case.id), format!("DIAGNOSIS READY: {declared}")).repeating());
    }
    config.backends.push(scripted("doctor", doctor, 2.0));
    config.backends.push(scripted(
        "main",
        vec![
            ScriptRule::on("Are these the same diagnosis", "no").repeating(),
            ScriptRule::reply("It started a few weeks ago and has not improved.").repeating(),
        ],
        1.0,
    ));
    config.route = RouteConfig::uniform("o1-doctor", "main").with_override(RouteKey::ClinicDoctor, "doctor");
    config
}

pub fn write_config(dir: &Path, config: &RunConfig) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, toml::to_string(config).unwrap()).unwrap();
    path
}

pub fn run_config(dir: &Path, config: &RunConfig) -> Result<RunSummary, clinagent_cli::CliError> {
    let path = write_config(dir, config);
    cmd_run(&path, &Overrides::default(), &mut Vec::new())
}
