//! Plain-text rendering of persisted transcripts.

use clinagent_core::domain::{Role, Transcript, Verdict};

const INDENT: &str = "    ";
const VERDICT_PREFIX: &str = "VERDICT: ";

fn label(role: &Role) -> String {
    match role {
        Role::Doctor => "Doctor".into(),
        Role::Patient => "Patient".into(),
        Role::Measurement => "Measurement".into(),
        Role::Moderator => "Moderator".into(),
        Role::System => "System".into(),
        Role::Expert(name) => format!("{name} Expert"),
        Role::Stage(_) => unreachable!("stages render as headings"),
    }
}

fn parse_label(label: &str) -> Option<Role> {
    Some(match label {
        "Doctor" => Role::Doctor,
        "Patient" => Role::Patient,
        "Measurement" => Role::Measurement,
        "Moderator" => Role::Moderator,
        "System" => Role::System,
        _ => Role::Expert(label.strip_suffix(" Expert")?.to_string()),
    })
}

fn verdict_sentence(subject: &str, verdict: &str) -> String {
    format!("The {subject} was {verdict}")
}

/// One block per event: `Label: text`, continuation lines indented, stage
/// markers as `== label ==` headings and the verdict note as a closing
/// sentence.
pub fn render(transcript: &Transcript) -> String {
    let subject = if transcript.events.iter().any(|e| matches!(e.role, Role::Expert(_))) {
        "answer"
    } else {
        "diagnosis"
    };
    let mut blocks = Vec::new();
    for event in &transcript.events {
        if let Role::Stage(stage) = &event.role {
            blocks.push(format!("== {stage} =="));
            continue;
        }
        if event.role == Role::System {
            if let Some(verdict) = event.text.strip_prefix(VERDICT_PREFIX) {
                if verdict.parse::<Verdict>().is_ok() {
                    blocks.push(verdict_sentence(subject, verdict));
                    continue;
                }
            }
        }
        let mut lines = event.text.split('\n');
        let mut block = format!("{}: {}", label(&event.role), lines.next().unwrap_or(""));
        for line in lines {
            block.push('\n');
            block.push_str(INDENT);
            block.push_str(line);
        }
        blocks.push(block);
    }
    let mut out = blocks.join("\n\n");
    out.push('\n');
    out
}

/// Inverse of [`render`] for roles and texts.
pub fn parse_rendered(rendered: &str) -> Result<Vec<(Role, String)>, String> {
    let mut events: Vec<(Role, String)> = Vec::new();
    let mut last_blank = false;
    for (n, line) in rendered.lines().enumerate() {
        if let Some(rest) = line.strip_prefix(INDENT) {
            let Some((_, text)) = events.last_mut() else {
                return Err(format!("line {}: continuation without an event", n + 1));
            };
            text.push('\n');
            text.push_str(rest);
            last_blank = false;
            continue;
        }
        if line.is_empty() {
            if last_blank {
                return Err(format!("line {}: unexpected blank line", n + 1));
            }
            last_blank = true;
            continue;
        }
        last_blank = false;
        if let Some(stage) = line.strip_prefix("== ").and_then(|s| s.strip_suffix(" ==")) {
            events.push((Role::Stage(stage.to_string()), String::new()));
            continue;
        }
        let verdict = ["diagnosis", "answer"].iter().find_map(|subject| {
            line.strip_prefix(&format!("The {subject} was "))
                .filter(|v| v.parse::<Verdict>().is_ok())
        });
        if let Some(verdict) = verdict {
            events.push((Role::System, format!("{VERDICT_PREFIX}{verdict}")));
            continue;
        }
        let (label, text) = line
            .split_once(": ")
            .or_else(|| line.strip_suffix(':').map(|l| (l, "")))
            .ok_or_else(|| format!("line {}: no role label", n + 1))?;
        let role = parse_label(label).ok_or_else(|| format!("line {}: unknown role `{label}`", n + 1))?;
        events.push((role, text.to_string()));
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transcript(events: &[(Role, &str)]) -> Transcript {
        let mut t = Transcript::new("t");
        for (role, text) in events {
            t.push(role.clone(), *text, "b", 0.0);
        }
        t
    }

    #[test]
    fn encounter_ends_with_verdict_sentence() {
        let t = transcript(&[
            (Role::Doctor, "DIAGNOSIS READY: Pes Anserine Bursitis"),
            (Role::System, "VERDICT: CORRECT"),
        ]);
        let text = render(&t);
        assert_eq!(text, "Doctor: DIAGNOSIS READY: Pes Anserine Bursitis\n\nThe diagnosis was CORRECT\n");
    }

    #[test]
    fn round_trip() {
        let t = transcript(&[
            (Role::Stage("vote".into()), ""),
            (Role::Expert("Infectious Disease".into()), "No.\nThe report misses the cave exposure.\n\nSecond paragraph"),
            (Role::Expert("Pathology Expert".into()), "yes"),
            (Role::System, "round 1 dissent: Infectious Disease"),
            (Role::Moderator, ""),
            (Role::System, "VERDICT: INCORRECT"),
        ]);
        let text = render(&t);
        assert!(text.contains("Infectious Disease Expert: No."));
        assert!(text.trim_end().ends_with("The answer was INCORRECT"));
        let parsed = parse_rendered(&text).unwrap();
        let original: Vec<(Role, String)> = t.events.into_iter().map(|e| (e.role, e.text)).collect();
        assert_eq!(parsed, original);
    }
}
