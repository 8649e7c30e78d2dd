//! Four-agent clinical encounter.
//!
//! The doctor questions the patient, may order tests from the measurement
//! agent, and ends by declaring a diagnosis that the moderator checks against
//! the gold label. Every agent is a routed backbone; only the moderator ever
//! sees the gold diagnosis.

mod marker;

pub use marker::{detect_marker, Marker, DIAGNOSIS_READY, TEST_REQUEST};

use thiserror::Error;

use crate::backend::{BackendError, ChatRequest, RouteKey, Session};
use crate::domain::{ClinicalCase, Role, TranscriptEvent, Verdict};
use crate::text;

pub const DEFAULT_MAX_TURNS: usize = 20;
pub const NORMAL_READINGS: &str = "RESULTS: NORMAL READINGS";

#[derive(Debug, Error)]
pub enum ClinicError {
    #[error("max_turns must be at least 1")]
    InvalidMaxTurns,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Progress of one encounter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncounterState {
    pub max_turns: usize,
    pub turn_index: usize,
    pub pending_test: Option<String>,
    pub finished: bool,
    pub declared_diagnosis: Option<String>,
}

impl EncounterState {
    pub fn new(max_turns: usize) -> Result<Self, ClinicError> {
        if max_turns == 0 {
            return Err(ClinicError::InvalidMaxTurns);
        }
        Ok(Self {
            max_turns,
            turn_index: 0,
            pending_test: None,
            finished: false,
            declared_diagnosis: None,
        })
    }

    fn finish(&mut self, diagnosis: Option<String>) {
        self.declared_diagnosis = diagnosis;
        self.finished = true;
    }
}

/// How the moderator reached its verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Moderation {
    pub verdict: Verdict,
    /// 1 for a normalized exact match, 2 when the moderator backbone was asked.
    pub tier: u8,
    /// Set when the verdict was forced to INCORRECT by a failure.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncounterResult {
    pub declared_diagnosis: Option<String>,
    pub verdict: Verdict,
    pub turns_used: usize,
    /// The budget ran out and the diagnosis came from the forced final call.
    pub forced: bool,
    pub moderation: Option<Moderation>,
    pub doctor_calls: usize,
    pub patient_calls: usize,
    pub measurement_calls: usize,
    pub moderator_calls: usize,
}

fn doctor_system_prompt(case: &ClinicalCase, state: &EncounterState) -> String {
    let presentation = if case.explicit_symptoms.is_empty() {
        "The patient has come in for an evaluation."
    } else {
        case.explicit_symptoms.as_str()
    };
    format!(
        "You are a doctor named Dr. Agent who only responds in the form of dialogue. You are inspecting a patient \
         whom you will ask questions in order to understand their disease. You may ask at most {max} questions \
         before you must make a decision; you have asked {asked} so far. You can request test results with \
         \"{TEST_REQUEST} [test]\", for example \"{TEST_REQUEST} Chest_X-Ray\". When you are confident, state \
         your diagnosis as \"{DIAGNOSIS_READY} [diagnosis here]\". Keep each reply to one to three sentences.\n\n\
         Presenting complaint: {presentation}",
        max = state.max_turns,
        asked = state.turn_index,
    )
}

fn doctor_request(case: &ClinicalCase, state: &EncounterState, dialogue: &[TranscriptEvent]) -> ChatRequest {
    let mut request = ChatRequest::default()
        .with_system(doctor_system_prompt(case, state))
        .with_user("The patient has arrived. Begin the consultation.");
    for event in dialogue {
        request = match event.role {
            Role::Doctor => request.with_assistant(event.text.clone()),
            Role::Patient => request.with_user(format!("Patient: {}", event.text)),
            Role::Measurement => request.with_user(format!("Measurement: {}", event.text)),
            _ => request,
        };
    }
    request
}

/// One doctor call over the dialogue so far. Advances `turn_index`.
pub fn doctor_turn(case: &ClinicalCase, state: &mut EncounterState, session: &mut Session<'_>) -> Result<String, ClinicError> {
    let request = doctor_request(case, state, &session.transcript().events);
    let response = session.call(RouteKey::ClinicDoctor, request)?;
    session.say(Role::Doctor, &response);
    state.turn_index += 1;
    Ok(response.text)
}

fn forced_diagnosis(case: &ClinicalCase, state: &EncounterState, session: &mut Session<'_>) -> Result<String, ClinicError> {
    let request = doctor_request(case, state, &session.transcript().events).with_user(format!(
        "You have reached the question limit. Based on the conversation so far, provide the most probable \
         diagnosis now as \"{DIAGNOSIS_READY} [diagnosis here]\"."
    ));
    let response = session.call(RouteKey::ClinicDoctor, request.with_label("agentclinic.doctor.forced"))?;
    session.say(Role::Doctor, &response);
    Ok(response.text)
}

/// The patient persona. Sees its own profile and the spoken dialogue, never
/// the test results or the gold diagnosis.
pub fn patient_turn(case: &ClinicalCase, session: &mut Session<'_>) -> Result<String, ClinicError> {
    let mut request = ChatRequest::default().with_system(format!(
        "You are a patient in a clinic who only responds in the form of dialogue. A doctor will ask you \
         questions to understand your disease. Answer only what you are asked, in one to three sentences, using \
         the information below. You do not know your diagnosis.\n\nYour information:\n{}",
        case.patient_profile
    ));
    for event in &session.transcript().events {
        request = match event.role {
            Role::Doctor => request.with_user(event.text.clone()),
            Role::Patient => request.with_assistant(event.text.clone()),
            _ => request,
        };
    }
    let response = session.call(RouteKey::ClinicPatient, request)?;
    session.say(Role::Patient, &response);
    Ok(response.text)
}

/// Stored results answer without a backbone call. Unknown tests go to the
/// measurement backbone; if that fails the reply is normal readings.
pub fn measurement_turn(test_name: &str, case: &ClinicalCase, session: &mut Session<'_>) -> String {
    let key = text::test_name_key(test_name);
    if let Some((_, stored)) = case.tests.iter().find(|(name, _)| text::test_name_key(name) == key) {
        let reply = format!("RESULTS: {stored}");
        session.note(Role::Measurement, reply.clone());
        return reply;
    }

    let mut known = String::new();
    for (name, result) in &case.tests {
        known.push_str(&format!("{name}: {result}\n"));
    }
    if known.is_empty() {
        known.push_str("(none)\n");
    }
    let request = ChatRequest::user(format!("{TEST_REQUEST} {test_name}")).with_system(format!(
        "You are a measurement reader who responds with medical test results. Reply in the format \"RESULTS: \
         [results here]\". These are the only results on file:\n{known}If the requested test is not on file, \
         reply \"{NORMAL_READINGS}\"."
    ));
    match session.call(RouteKey::ClinicMeasurement, request) {
        Ok(response) => {
            session.say(Role::Measurement, &response);
            response.text
        }
        Err(err) => {
            session.note(Role::Measurement, NORMAL_READINGS);
            session.note(Role::System, format!("measurement fallback: {err}"));
            NORMAL_READINGS.to_string()
        }
    }
}

/// Tier 1 is a normalized exact match. Tier 2 asks the moderator backbone
/// whether the two diagnoses are the same; anything but a clear yes is
/// INCORRECT.
pub fn moderate(declared: &str, gold: &str, session: &mut Session<'_>) -> Moderation {
    if text::loose_key(declared) == text::loose_key(gold) {
        return Moderation {
            verdict: Verdict::Correct,
            tier: 1,
            flag: None,
        };
    }
    let request = ChatRequest::user(format!(
        "Here is the correct diagnosis: {gold}\nHere was the doctor's diagnosis: {declared}\nAre these the same \
         diagnosis, even if the doctor's phrasing is slightly off? Answer only yes or no."
    ))
    .with_system("You are responsible for determining if the doctor's diagnosis is correct.");
    let (verdict, flag) = match session.call(RouteKey::ClinicModerator, request) {
        Ok(response) => {
            session.say(Role::Moderator, &response);
            match text::leading_yes_no(&response.text) {
                Some(yes) => (Verdict::from_bool(yes), None),
                None => (Verdict::Incorrect, Some("unparseable moderator reply".to_string())),
            }
        }
        Err(err) => (Verdict::Incorrect, Some(format!("moderator failed: {err}"))),
    };
    if let Some(flag) = &flag {
        session.note(Role::System, flag.clone());
    }
    Moderation { verdict, tier: 2, flag }
}

/// Runs the encounter loop until a declaration or the turn budget runs out,
/// then moderates.
pub fn run_encounter(case: &ClinicalCase, session: &mut Session<'_>, max_turns: usize) -> Result<EncounterResult, ClinicError> {
    let mut state = EncounterState::new(max_turns)?;
    let mut forced = false;

    while state.turn_index < state.max_turns {
        let utterance = doctor_turn(case, &mut state, session)?;
        match detect_marker(&utterance) {
            Marker::DiagnosisReady(diagnosis) => {
                state.finish(Some(diagnosis));
                break;
            }
            Marker::TestRequest(test) => {
                state.pending_test = Some(test.clone());
                measurement_turn(&test, case, session);
                state.pending_test = None;
            }
            Marker::None => {
                patient_turn(case, session)?;
            }
        }
    }

    if !state.finished {
        forced = true;
        let utterance = forced_diagnosis(case, &state, session)?;
        let diagnosis = match detect_marker(&utterance) {
            Marker::DiagnosisReady(diagnosis) => Some(diagnosis),
            _ => Some(utterance.trim().to_string()).filter(|d| !d.is_empty()),
        };
        state.finish(diagnosis);
    }

    let moderation = state
        .declared_diagnosis
        .as_deref()
        .map(|declared| moderate(declared, &case.correct_diagnosis, session));
    let verdict = moderation.as_ref().map_or(Verdict::Incorrect, |m| m.verdict);
    session.note(Role::System, format!("VERDICT: {verdict}"));

    Ok(EncounterResult {
        declared_diagnosis: state.declared_diagnosis,
        verdict,
        turns_used: state.turn_index,
        forced,
        moderation,
        doctor_calls: session.calls_for(RouteKey::ClinicDoctor),
        patient_calls: session.calls_for(RouteKey::ClinicPatient),
        measurement_calls: session.calls_for(RouteKey::ClinicMeasurement),
        moderator_calls: session.calls_for(RouteKey::ClinicModerator),
    })
}
