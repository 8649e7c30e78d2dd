//! Candidate-pool diagnosis: symptoms plus every candidate disease (with its
//! description) go to one backbone call, which picks the top-ranked disease.
//!
//! There is no confidence distribution: the backbone answers with a letter
//! and that choice is the prediction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backend::{BackendError, ChatRequest, RouteKey, Session};
use crate::domain::{ClinicalCase, Role, Verdict};
use crate::text;

pub const RANKING_TEMPLATE_VERSION: &str = "cod-rank-v1";

#[derive(Debug, Error)]
pub enum CodError {
    #[error("case {0}: candidate pool is empty")]
    EmptyCandidatePool(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("could not find a choice in response: {response:?}")]
pub struct Unparseable {
    pub response: String,
}

/// A labelled option presented to the backbone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Choice {
    pub label: String,
    pub name: String,
}

impl Choice {
    pub fn new(label: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            name: name.into(),
        }
    }
}

/// Spreadsheet-style labels: A..Z, then AA, AB, ...
pub fn choice_label(index: usize) -> String {
    let mut n = index + 1;
    let mut out = Vec::new();
    while n > 0 {
        let rem = (n - 1) % 26;
        out.push(b'A' + rem as u8);
        n = (n - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

const MARKER_WORDS: [&str; 4] = ["answer", "option", "choice", "diagnosis"];

/// Picks the option a response refers to.
///
/// Precedence: a letter token explicitly marked as the answer (`(C)`,
/// `Answer: D`, `option B`), then the first bare uppercase letter token that
/// is an option label, then the longest option name found case-insensitively.
pub fn parse_choice(response: &str, choices: &[Choice]) -> Result<usize, Unparseable> {
    let tokens = tokenize(response);
    let label_index = |tok: &str| choices.iter().position(|c| c.label == tok);

    let marked = tokens.iter().enumerate().find_map(|(i, tok)| {
        let upper = tok.text.to_ascii_uppercase();
        let idx = label_index(&upper)?;
        let explicit_upper = tok.text == upper;
        let parenthesized = tok.before == Some('(') && tok.after == Some(')');
        let prev = |back: usize| i.checked_sub(back).map(|j| tokens[j].text.to_lowercase());
        let after_marker = match prev(1).as_deref() {
            Some(w) if MARKER_WORDS.contains(&w) => true,
            Some("is") => prev(2).is_some_and(|w| MARKER_WORDS.contains(&w.as_str())),
            _ => false,
        };
        ((parenthesized && explicit_upper) || after_marker).then_some(idx)
    });
    if let Some(idx) = marked {
        return Ok(idx);
    }

    if let Some(idx) = tokens
        .iter()
        .filter(|t| t.text.chars().all(|c| c.is_ascii_uppercase()))
        .find_map(|t| label_index(t.text))
    {
        return Ok(idx);
    }

    let haystack = text::fold_key(response);
    choices
        .iter()
        .enumerate()
        .map(|(i, c)| (i, text::fold_key(&c.name)))
        .filter(|(_, name)| !name.is_empty() && haystack.contains(name.as_str()))
        .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .ok_or_else(|| Unparseable {
            response: response.to_string(),
        })
}

struct Token<'a> {
    text: &'a str,
    before: Option<char>,
    after: Option<char>,
}

fn tokenize(s: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    let mut prev_char = None;
    let mut before = None;
    for (i, c) in s.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
                before = prev_char;
            }
        } else if let Some(st) = start.take() {
            tokens.push(Token {
                text: &s[st..i],
                before,
                after: Some(c),
            });
        }
        if !c.is_whitespace() {
            prev_char = Some(c);
        }
    }
    if let Some(st) = start {
        tokens.push(Token {
            text: &s[st..],
            before,
            after: None,
        });
    }
    tokens
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodOptions {
    /// Shuffle candidates before lettering them. Off by default so prompts
    /// follow dataset order.
    pub shuffle_seed: Option<u64>,
}

/// The ranking request plus the candidate order it presents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingPrompt {
    pub request: ChatRequest,
    /// `order[i]` is the index into `case.candidates` shown under label `i`.
    pub order: Vec<usize>,
}

impl RankingPrompt {
    pub fn choices(&self, case: &ClinicalCase) -> Vec<Choice> {
        self.order
            .iter()
            .enumerate()
            .map(|(i, &c)| Choice::new(choice_label(i), &case.candidates[c].name))
            .collect()
    }
}

fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

pub fn build_ranking_prompt(case: &ClinicalCase, options: &CodOptions) -> Result<RankingPrompt, CodError> {
    if case.candidates.is_empty() {
        return Err(CodError::EmptyCandidatePool(case.id.clone()));
    }
    let mut order: Vec<usize> = (0..case.candidates.len()).collect();
    if let Some(seed) = options.shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(&case.id));
        order.shuffle(&mut rng);
    }

    let symptoms = if case.explicit_symptoms.is_empty() {
        &case.patient_profile
    } else {
        &case.explicit_symptoms
    };
    let mut prompt = format!("Patient's symptoms:\n{symptoms}\n\nCandidate diseases:\n");
    for (i, &c) in order.iter().enumerate() {
        let candidate = &case.candidates[c];
        if candidate.description.is_empty() {
            prompt.push_str(&format!("{}) {}\n", choice_label(i), candidate.name));
        } else {
            prompt.push_str(&format!("{}) {} — {}\n", choice_label(i), candidate.name, candidate.description));
        }
    }
    prompt.push_str(
        "\nRank the candidate diseases by how well they explain the patient's symptoms. \
         Answer with the single letter of the top-ranked disease, as \"Answer: <letter>\".",
    );

    Ok(RankingPrompt {
        request: ChatRequest::user(prompt)
            .with_system("You are a physician making a differential diagnosis.")
            .with_label(RANKING_TEMPLATE_VERSION),
        order,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodResult {
    /// Chosen candidate name; `None` when the response could not be parsed.
    pub chosen: Option<String>,
    /// Backbone reply; `None` when the pool had a single candidate.
    pub raw_response: Option<String>,
    pub verdict: Verdict,
    pub latency_seconds: f64,
}

/// Runs the ranking call for one case. A single-candidate pool is answered
/// without calling the backbone.
pub fn diagnose(case: &ClinicalCase, session: &mut Session<'_>, options: &CodOptions) -> Result<CodResult, CodError> {
    let prompt = build_ranking_prompt(case, options)?;
    let gold = text::fold_key(&case.correct_diagnosis);

    let result = if case.candidates.len() == 1 {
        let only = case.candidates[0].name.clone();
        session.note(Role::System, format!("single candidate: {only}"));
        CodResult {
            verdict: Verdict::from_bool(text::fold_key(&only) == gold),
            chosen: Some(only),
            raw_response: None,
            latency_seconds: 0.0,
        }
    } else {
        session.stage("rank");
        let response = session.call(RouteKey::CodRank, prompt.request.clone())?;
        session.say(Role::System, &response);
        let chosen = match parse_choice(&response.text, &prompt.choices(case)) {
            Ok(i) => Some(case.candidates[prompt.order[i]].name.clone()),
            Err(_) => {
                session.note(Role::System, "unparseable choice");
                None
            }
        };
        CodResult {
            verdict: Verdict::from_bool(chosen.as_deref().is_some_and(|c| text::fold_key(c) == gold)),
            chosen,
            raw_response: Some(response.text),
            latency_seconds: response.latency_seconds,
        }
    };
    session.note(Role::System, format!("VERDICT: {}", result.verdict));
    Ok(result)
}
