//! Turning raw backend text into a [`Selection`].
//!
//! Resolution order: a leading integer that names a valid option index
//! (exact), then a unique case-insensitive label substring match
//! (normalized), then the fallback — the sentinel when the query has one,
//! option 1 otherwise. The fallback absorbs everything, so parsing never
//! fails; fallback occurrences stay visible in the trace.

use super::{Choice, ChoiceQuery, ParseStatus, QueryKind, Selection, Verdict};

pub fn parse_response(raw: &str, query: &ChoiceQuery) -> Selection {
    let (choice, parse_status) = if query.kind == QueryKind::Assessment {
        parse_verdict(raw)
    } else {
        parse_choice(raw, query)
    };
    Selection {
        choice,
        raw_response: raw.to_string(),
        parse_status,
        retries: 0,
    }
}

fn parse_verdict(raw: &str) -> (Choice, ParseStatus) {
    let lower = raw.trim().to_lowercase();
    let verdict = |v| Choice::Verdict { verdict: v };
    if lower.starts_with("yes") || lower.starts_with('y') && lower.len() == 1 {
        return (verdict(Verdict::Accept), ParseStatus::Exact);
    }
    if lower.starts_with("no") || lower.starts_with('n') && lower.len() == 1 {
        return (verdict(Verdict::Reject), ParseStatus::Exact);
    }
    let has_yes = contains_word(&lower, "yes") || contains_word(&lower, "correct");
    let has_no = contains_word(&lower, "no") || contains_word(&lower, "incorrect");
    match (has_yes, has_no) {
        (true, false) => (verdict(Verdict::Accept), ParseStatus::Normalized),
        (false, true) => (verdict(Verdict::Reject), ParseStatus::Normalized),
        // Keeping the current single entity is the conservative reading.
        _ => (verdict(Verdict::Accept), ParseStatus::Fallback),
    }
}

fn parse_choice(raw: &str, query: &ChoiceQuery) -> (Choice, ParseStatus) {
    let max = query.selectable_count();

    if query.multi {
        if let Some(indices) = leading_index_list(raw, max) {
            // The sentinel cannot be combined with real picks.
            if indices.len() == 1 {
                return (index_choice(indices[0], query), ParseStatus::Exact);
            }
            if query.sentinel_index().is_none_or(|s| !indices.contains(&s)) {
                return (Choice::Multi { indices }, ParseStatus::Exact);
            }
        }
    } else if let Some(index) = leading_index(raw, max) {
        return (index_choice(index, query), ParseStatus::Exact);
    }

    if let Some(index) = unique_label_match(raw, query) {
        return (index_choice(index, query), ParseStatus::Normalized);
    }

    match query.sentinel {
        Some(sentinel) => (Choice::Sentinel { sentinel }, ParseStatus::Fallback),
        None => (Choice::Index { index: 1 }, ParseStatus::Fallback),
    }
}

fn index_choice(index: usize, query: &ChoiceQuery) -> Choice {
    match (query.sentinel, query.sentinel_index()) {
        (Some(sentinel), Some(s)) if index == s => Choice::Sentinel { sentinel },
        _ => Choice::Index { index },
    }
}

/// Leading integer after whitespace and cosmetic punctuation, accepted only
/// when it is a valid 1-based position.
fn leading_index(raw: &str, max: usize) -> Option<usize> {
    let trimmed = raw.trim_start_matches(|c: char| c.is_whitespace() || "\"'([{*#".contains(c));
    let digits: String = trimmed.chars().take_while(char::is_ascii_digit).collect();
    let value: usize = digits.parse().ok()?;
    (1..=max).contains(&value).then_some(value)
}

/// Comma/whitespace-separated list of valid indices at the head of the
/// response, e.g. `1, 3` — used only in multi-select mode.
fn leading_index_list(raw: &str, max: usize) -> Option<Vec<usize>> {
    let trimmed = raw.trim_start_matches(|c: char| c.is_whitespace() || "\"'([{*#".contains(c));
    let head: String = trimmed
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == ',' || c.is_whitespace() || *c == ';')
        .collect();
    let mut out = Vec::new();
    for part in head.split([',', ';']) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let value: usize = part.parse().ok()?;
        if !(1..=max).contains(&value) || out.contains(&value) {
            return None;
        }
        out.push(value);
    }
    if out.is_empty() {
        None
    } else {
        out.sort_unstable();
        Some(out)
    }
}

/// Position of the single option (or sentinel) whose label occurs in the
/// response; ambiguity or no hit means no match.
fn unique_label_match(raw: &str, query: &ChoiceQuery) -> Option<usize> {
    let lower = raw.to_lowercase();
    let mut hit = None;
    for option in &query.options {
        if lower.contains(&option.label.as_str().to_lowercase()) {
            if hit.is_some() {
                return None;
            }
            hit = Some(option.index);
        }
    }
    if let (Some(sentinel), Some(index)) = (query.sentinel, query.sentinel_index()) {
        if contains_word(&lower, &sentinel.label().to_lowercase()) {
            if hit.is_some() {
                return None;
            }
            hit = Some(index);
        }
    }
    hit
}

fn contains_word(haystack: &str, word: &str) -> bool {
    haystack
        .split(|c: char| !c.is_alphanumeric())
        .any(|w| w == word)
}
