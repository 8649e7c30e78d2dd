pub const TEST_REQUEST: &str = "REQUEST TEST:";
pub const DIAGNOSIS_READY: &str = "DIAGNOSIS READY:";

/// In-band protocol token found in a doctor utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Marker {
    None,
    TestRequest(String),
    DiagnosisReady(String),
}

/// First non-empty payload following `token`. The payload runs to the end of
/// the line, with surrounding whitespace and markdown emphasis removed.
fn payload_after(utterance: &str, token: &str) -> Option<String> {
    utterance.match_indices(token).find_map(|(at, _)| {
        let rest = &utterance[at + token.len()..];
        let line = rest.split(['\n', '\r']).next().unwrap_or("");
        let payload = line.trim().trim_matches('*').trim();
        (!payload.is_empty()).then(|| payload.to_string())
    })
}

/// Tokens are case-sensitive; a declaration wins over a test request when an
/// utterance carries both.
pub fn detect_marker(utterance: &str) -> Marker {
    if let Some(diagnosis) = payload_after(utterance, DIAGNOSIS_READY) {
        return Marker::DiagnosisReady(diagnosis);
    }
    match payload_after(utterance, TEST_REQUEST) {
        Some(test) => Marker::TestRequest(test),
        None => Marker::None,
    }
}
