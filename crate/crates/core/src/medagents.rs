//! Five-stage role-play consensus pipeline for multiple-choice questions.
//!
//! 1. gather five experts from one backbone reply
//! 2. each expert analyses the question independently
//! 3. the analyses are summarized into a report
//! 4. experts vote on the report; while someone dissents, a dissenter refines
//!    it and everyone votes again, up to `max_iters` rounds
//! 5. a final call picks an option from the report

use std::collections::HashSet;

use indexmap::IndexMap;
use thiserror::Error;

use crate::backend::{BackendError, ChatRequest, ChatResponse, RouteKey, Session};
use crate::cod::{parse_choice, Choice};
use crate::domain::{McqItem, OptionId, Role, Verdict};
use crate::text;

pub const EXPERT_COUNT: usize = 5;
pub const DEFAULT_MAX_ITERS: usize = 3;
const GATHER_ATTEMPTS: usize = 2;

#[derive(Debug, Error)]
pub enum MedAgentsError {
    #[error("could not recruit {EXPERT_COUNT} distinct experts (got {found} after {GATHER_ATTEMPTS} attempts)")]
    ExpertParseFailure { found: usize },
    #[error("max_iters must be at least 1")]
    InvalidMaxIters,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertRole {
    pub name: String,
    pub description: String,
}

impl ExpertRole {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        let name = name.into();
        let mut description = description.into();
        if description.trim().is_empty() {
            description = format!("Specialist in {name}.");
        }
        Self { name, description }
    }

    fn system_prompt(&self) -> String {
        format!("You are a medical expert in {}. {}", self.name, self.description)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vote {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteRound {
    pub round_index: usize,
    /// Votes in recruitment order, keyed by expert name.
    pub votes: IndexMap<String, Vote>,
    /// Experts whose replies had no leading yes/no; counted as `No`.
    pub unparsed: Vec<String>,
    /// Experts who refined the report after this round, in order.
    pub refiners: Vec<String>,
}

impl VoteRound {
    pub fn is_unanimous(&self) -> bool {
        self.votes.values().all(|v| *v == Vote::Yes)
    }

    pub fn dissenters(&self) -> impl Iterator<Item = &str> {
        self.votes.iter().filter(|(_, v)| **v == Vote::No).map(|(k, _)| k.as_str())
    }

    pub fn refiner(&self) -> Option<&str> {
        self.refiners.first().map(String::as_str)
    }
}

/// Who rewrites the report after a round with dissent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefinePolicy {
    /// The first dissenter in recruitment order.
    #[default]
    FirstDissenter,
    /// Every dissenter, one after another.
    EveryDissenter,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MedAgentsOptions {
    pub max_iters: usize,
    pub refine_policy: RefinePolicy,
    /// Run the five stage-2 analyses on parallel threads.
    pub parallel_analyses: bool,
}

impl Default for MedAgentsOptions {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            refine_policy: RefinePolicy::default(),
            parallel_analyses: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedAgentsResult {
    pub experts: Vec<ExpertRole>,
    pub analyses: IndexMap<String, String>,
    pub report: String,
    pub vote_history: Vec<VoteRound>,
    pub answer: Option<OptionId>,
    pub verdict: Verdict,
    pub call_count: usize,
}

fn question_block(item: &McqItem) -> String {
    let mut out = format!("Question: {}\nOptions:\n", item.question);
    for (id, text) in item.option_list() {
        out.push_str(&format!("({id}) {text}\n"));
    }
    out
}

fn strip_decorations(s: &str) -> &str {
    let s = s.trim().trim_start_matches(['-', '*', '•', '+']).trim();
    let digits = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let s = if digits > 0 && s[digits..].starts_with(['.', ')']) {
        &s[digits + 1..]
    } else {
        s
    };
    s.trim().trim_matches(|c: char| "\"'“”‘’*`[]{}".contains(c) || c.is_whitespace())
}

fn expert_from_item(item: &str) -> Option<ExpertRole> {
    let item = strip_decorations(item);
    let (name, description) = match item.split_once(':').or_else(|| item.split_once(" - ")).or_else(|| item.split_once(" — ")) {
        Some((n, d)) => (strip_decorations(n), strip_decorations(d)),
        None => (item, ""),
    };
    let name = name.strip_suffix(" Expert").or_else(|| name.strip_suffix(" expert")).unwrap_or(name).trim();
    if name.is_empty() || name.len() > 80 {
        return None;
    }
    Some(ExpertRole::new(name, description))
}

/// Reads expert roles from a backbone reply: one per line, or a single
/// comma/semicolon separated list. Duplicates (case-folded) are dropped.
pub fn parse_experts(reply: &str) -> Vec<ExpertRole> {
    let lines: Vec<&str> = reply
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.ends_with(':'))
        .collect();
    let items: Vec<String> = if lines.len() >= 2 {
        lines.iter().map(|l| l.to_string()).collect()
    } else {
        let line = lines.first().copied().unwrap_or("");
        let lowered = line.to_lowercase();
        let body = match line.find(':') {
            Some(i) if lowered[..i].trim().trim_matches('"').starts_with("expert") => &line[i + 1..],
            _ => line,
        };
        body.split([',', ';']).map(str::to_string).collect()
    };

    let mut seen = HashSet::new();
    items
        .iter()
        .filter_map(|i| expert_from_item(i))
        .filter(|e| seen.insert(text::fold_key(&e.name)))
        .collect()
}

/// Stage 1. One call, plus one backfill re-prompt if fewer than five distinct
/// experts came back.
pub fn gather_experts(item: &McqItem, session: &mut Session<'_>) -> Result<Vec<ExpertRole>, MedAgentsError> {
    let mut experts: Vec<ExpertRole> = Vec::new();
    for attempt in 0..GATHER_ATTEMPTS {
        let prompt = if attempt == 0 {
            format!(
                "{}\nCreate {EXPERT_COUNT} experts from different medical specialties who are best placed to \
                 answer this question. List exactly {EXPERT_COUNT}, one per line, as \"Specialty: description of \
                 expertise\".",
                question_block(item)
            )
        } else {
            let chosen: Vec<&str> = experts.iter().map(|e| e.name.as_str()).collect();
            format!(
                "{}\nAlready selected specialties: {}. Propose {} more, all different from these, one per line, \
                 as \"Specialty: description of expertise\".",
                question_block(item),
                if chosen.is_empty() { "none".to_string() } else { chosen.join(", ") },
                EXPERT_COUNT - experts.len()
            )
        };
        session.stage("gather");
        let response = session.call(
            RouteKey::MedAgentsGather,
            ChatRequest::user(prompt).with_system("You recruit a panel of medical experts for a clinical question."),
        )?;
        session.say(Role::System, &response);

        for expert in parse_experts(&response.text) {
            if experts.len() < EXPERT_COUNT
                && !experts.iter().any(|e| text::fold_key(&e.name) == text::fold_key(&expert.name))
            {
                experts.push(expert);
            }
        }
        if experts.len() == EXPERT_COUNT {
            return Ok(experts);
        }
    }
    Err(MedAgentsError::ExpertParseFailure { found: experts.len() })
}

fn analysis_request(role: &ExpertRole, item: &McqItem) -> ChatRequest {
    ChatRequest::user(format!(
        "{}\nFrom the perspective of your specialty, analyse this question: interpret the patient's condition, \
         point out the most noteworthy aspects and discuss the options.",
        question_block(item)
    ))
    .with_system(role.system_prompt())
}

/// Stage 2 for a single expert.
pub fn propose_analysis(role: &ExpertRole, item: &McqItem, session: &mut Session<'_>) -> Result<String, MedAgentsError> {
    session.stage("analyze");
    let response = session.call(RouteKey::MedAgentsAnalyze, analysis_request(role, item))?;
    session.say(Role::Expert(role.name.clone()), &response);
    Ok(response.text)
}

/// Stage 2 for the whole panel. Experts never see each other's analyses, so
/// the calls may run in parallel; results are committed in recruitment order.
pub fn propose_analyses(
    experts: &[ExpertRole],
    item: &McqItem,
    session: &mut Session<'_>,
    parallel: bool,
) -> Result<IndexMap<String, String>, MedAgentsError> {
    let requests = experts.iter().map(|e| analysis_request(e, item)).collect();
    let results = session.call_all(RouteKey::MedAgentsAnalyze, requests, parallel);
    let mut analyses = IndexMap::new();
    for (expert, result) in experts.iter().zip(results) {
        let response = result?;
        session.stage("analyze");
        session.say(Role::Expert(expert.name.clone()), &response);
        analyses.insert(expert.name.clone(), response.text);
    }
    Ok(analyses)
}

/// Stage 3: one call aggregating every labelled analysis.
pub fn summarize(analyses: &IndexMap<String, String>, item: &McqItem, session: &mut Session<'_>) -> Result<String, MedAgentsError> {
    let mut prompt = format!("{}\nAnalyses from the expert panel:\n", question_block(item));
    for (name, analysis) in analyses {
        prompt.push_str(&format!("\n[{name}]\n{analysis}\n"));
    }
    prompt.push_str(
        "\nAggregate these analyses into one summary report: the key knowledge, the points the experts agree on, \
         and the most likely answer with its reasons.",
    );
    session.stage("summarize");
    let response = session.call(
        RouteKey::MedAgentsSummarize,
        ChatRequest::user(prompt).with_system("You summarize expert discussions into a report."),
    )?;
    session.say(Role::System, &response);
    Ok(response.text)
}

fn vote(expert: &ExpertRole, report: &str, item: &McqItem, session: &mut Session<'_>) -> Result<Option<Vote>, MedAgentsError> {
    let request = ChatRequest::user(format!(
        "{}\nSummary report:\n{report}\n\nDo you agree with this report? Start your reply with \"yes\" or \"no\"; \
         if no, say what is wrong.",
        question_block(item)
    ))
    .with_system(expert.system_prompt())
    .with_label("medagents.vote");
    session.stage("vote");
    let response = session.call(RouteKey::MedAgentsConsult, request)?;
    session.say(Role::Expert(expert.name.clone()), &response);
    Ok(text::leading_yes_no(&response.text).map(|yes| if yes { Vote::Yes } else { Vote::No }))
}

fn refine(expert: &ExpertRole, report: &str, item: &McqItem, session: &mut Session<'_>) -> Result<String, MedAgentsError> {
    let request = ChatRequest::user(format!(
        "{}\nSummary report:\n{report}\n\nYou did not agree with this report. Using your expertise, rewrite it so \
         that it is correct. Return the full revised report.",
        question_block(item)
    ))
    .with_system(expert.system_prompt())
    .with_label("medagents.refine");
    session.stage("refine");
    let response: ChatResponse = session.call(RouteKey::MedAgentsConsult, request)?;
    session.say(Role::Expert(expert.name.clone()), &response);
    Ok(response.text)
}

/// Stage 4: vote-and-refine until unanimity or `options.max_iters` rounds.
/// Returns the latest report either way.
pub fn consult(
    report: String,
    experts: &[ExpertRole],
    item: &McqItem,
    session: &mut Session<'_>,
    options: &MedAgentsOptions,
) -> Result<(String, Vec<VoteRound>), MedAgentsError> {
    if options.max_iters == 0 {
        return Err(MedAgentsError::InvalidMaxIters);
    }
    let mut report = report;
    let mut history = Vec::new();
    for round_index in 1..=options.max_iters {
        let mut round = VoteRound {
            round_index,
            votes: IndexMap::new(),
            unparsed: Vec::new(),
            refiners: Vec::new(),
        };
        for expert in experts {
            let parsed = vote(expert, &report, item, session)?;
            if parsed.is_none() {
                session.note(Role::System, format!("unparseable vote from {} counted as no", expert.name));
                round.unparsed.push(expert.name.clone());
            }
            round.votes.insert(expert.name.clone(), parsed.unwrap_or(Vote::No));
        }
        if round.is_unanimous() {
            history.push(round);
            break;
        }

        let dissenters: Vec<String> = round.dissenters().map(str::to_string).collect();
        session.note(Role::System, format!("round {round_index} dissent: {}", dissenters.join(", ")));
        let refiners = match options.refine_policy {
            RefinePolicy::FirstDissenter => &dissenters[..1],
            RefinePolicy::EveryDissenter => &dissenters[..],
        };
        for name in refiners {
            let expert = experts.iter().find(|e| &e.name == name).expect("dissenter is on the panel");
            report = refine(expert, &report, item, session)?;
            round.refiners.push(name.clone());
        }
        history.push(round);
    }
    Ok((report, history))
}

/// Stage 5. `None` when the reply names no option.
pub fn decide(item: &McqItem, report: &str, session: &mut Session<'_>) -> Result<Option<OptionId>, MedAgentsError> {
    let prompt = format!(
        "{}\nSummary report:\n{report}\n\nBased on the report, choose the single best option. Answer as \
         \"Answer: <letter>\".",
        question_block(item)
    );
    session.stage("decide");
    let response = session.call(
        RouteKey::MedAgentsDecide,
        ChatRequest::user(prompt).with_system("You make the final clinical decision for the expert panel."),
    )?;
    session.say(Role::System, &response);
    let choices: Vec<Choice> = item
        .option_list()
        .map(|(id, text)| Choice::new(id.to_string(), text))
        .collect();
    Ok(parse_choice(&response.text, &choices)
        .ok()
        .and_then(OptionId::from_index))
}

/// Runs all five stages in order.
pub fn run_medagents(item: &McqItem, session: &mut Session<'_>, options: &MedAgentsOptions) -> Result<MedAgentsResult, MedAgentsError> {
    if options.max_iters == 0 {
        return Err(MedAgentsError::InvalidMaxIters);
    }
    let experts = gather_experts(item, session)?;
    let analyses = propose_analyses(&experts, item, session, options.parallel_analyses)?;
    let report = summarize(&analyses, item, session)?;
    let (report, vote_history) = consult(report, &experts, item, session, options)?;
    let answer = decide(item, &report, session)?;
    if answer.is_none() {
        session.note(Role::System, "unparseable decision");
    }
    let verdict = Verdict::from_bool(answer == Some(item.answer));
    session.note(Role::System, format!("VERDICT: {verdict}"));
    Ok(MedAgentsResult {
        experts,
        analyses,
        report,
        vote_history,
        answer,
        verdict,
        call_count: session.call_count(),
    })
}
