//! Small text normalization helpers shared by the pipelines.

/// Trims and collapses every internal whitespace run to a single space.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Case-folded, trimmed, whitespace-collapsed form used for exact diagnosis comparison.
pub fn fold_key(s: &str) -> String {
    collapse_whitespace(&s.to_lowercase())
}

/// Like [`fold_key`] but punctuation is dropped as well, so "Congenital Rubella
/// Syndrome." and "congenital rubella syndrome" compare equal.
pub fn loose_key(s: &str) -> String {
    let cleaned: String = s
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    collapse_whitespace(&cleaned)
}

/// Lookup key for lab/test names: case-folded, with `_`, `-` and spaces treated
/// as the same separator and trailing sentence punctuation dropped.
pub fn test_name_key(s: &str) -> String {
    let spaced: String = s
        .to_lowercase()
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .collect();
    let key = collapse_whitespace(&spaced);
    key.trim_end_matches(['.', '*', ':', ';', ',']).trim_end().to_string()
}

/// Case-insensitive substring test.
pub fn contains_ci(haystack: &str, needle: &str) -> bool {
    let needle = needle.trim();
    if needle.is_empty() {
        return false;
    }
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// Reads a leading yes/no answer, ignoring quotes, markdown emphasis and case.
pub fn leading_yes_no(s: &str) -> Option<bool> {
    let first = s
        .split(|c: char| !c.is_alphanumeric())
        .find(|tok| !tok.is_empty())?;
    match first.to_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys() {
        assert_eq!(fold_key("  Pes  Anserine\tBursitis "), "pes anserine bursitis");
        assert_eq!(
            loose_key("Congenital Rubella Syndrome."),
            loose_key("congenital rubella  syndrome")
        );
        assert_eq!(loose_key("Jumper's Knee"), "jumper s knee");
    }

    #[test]
    fn test_names() {
        assert_eq!(test_name_key("Knee_MRI"), "knee mri");
        assert_eq!(test_name_key("knee-mri"), test_name_key("KNEE  MRI"));
        assert_eq!(
            test_name_key("Complete Blood Count and Coagulation Profile."),
            "complete blood count and coagulation profile"
        );
    }

    #[test]
    fn yes_no() {
        assert_eq!(leading_yes_no("Yes, I agree."), Some(true));
        assert_eq!(leading_yes_no("\"no\""), Some(false));
        assert_eq!(leading_yes_no("**NO** - the report misses"), Some(false));
        assert_eq!(leading_yes_no("I think so"), None);
        assert_eq!(leading_yes_no(""), None);
        assert_eq!(leading_yes_no("nope"), None);
    }

    #[test]
    fn ci_contains() {
        assert!(contains_ci("Knee pain after PES ANSERINE bursitis", "pes anserine"));
        assert!(!contains_ci("anything", "  "));
    }
}
