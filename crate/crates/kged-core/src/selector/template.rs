//! Versioned prompt templates and document windowing.
//!
//! Prompt text is a pure function of the template version and the query
//! fields, so a recorded trace plus its template id reproduces the exact
//! request. Options are numbered and the instruction asks for the number:
//! that maximizes exact parses, with free-text matching as the fallback.

use std::fmt::Write as _;

use super::{ChoiceQuery, QueryKind, SelectorError, Sentinel};

/// Current template id, recorded in every trace and run manifest.
pub const TEMPLATE_V1: &str = "v1";

/// Renders the full prompt for a query under the given template version.
pub fn render_prompt(template_version: &str, query: &ChoiceQuery) -> Result<String, SelectorError> {
    match template_version {
        TEMPLATE_V1 => Ok(render_v1(query)),
        other => Err(SelectorError::UnknownTemplate(other.to_string())),
    }
}

fn render_v1(query: &ChoiceQuery) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "You are resolving the mention \"{}\" in the passage below.",
        query.mention
    );
    let _ = writeln!(out, "\nPassage:\n{}\n", query.document_excerpt);

    match query.kind {
        QueryKind::Assessment => {
            let option = &query.options[0];
            let _ = writeln!(
                out,
                "The mention has been resolved to the entity below.\n\n1. {}",
                option.label
            );
            if let Some(desc) = &option.description {
                let _ = writeln!(out, "   Description: {desc}");
            }
            let _ = write!(
                out,
                "\nIs this resolution correct for the passage? Answer Yes or No."
            );
        }
        QueryKind::ClassChoice | QueryKind::MixedChoice => {
            let _ = writeln!(
                out,
                "Which of the following categories best fits what the mention refers to?\n"
            );
            render_options(&mut out, query);
            if query.multi {
                let _ = write!(
                    out,
                    "\nAnswer with the numbers of all categories that fit, separated by commas."
                );
            } else {
                let _ = write!(out, "\nAnswer with the number of your choice.");
            }
        }
        QueryKind::EntityChoice => {
            let _ = writeln!(
                out,
                "Which of the following entities does the mention refer to?\n"
            );
            render_options(&mut out, query);
            let _ = write!(out, "\nAnswer with the number of your choice.");
        }
    }
    out
}

fn render_options(out: &mut String, query: &ChoiceQuery) {
    for option in &query.options {
        let _ = write!(out, "{}. {}", option.index, option.label);
        match &option.description {
            Some(desc) => {
                let _ = writeln!(out, " — {desc}");
            }
            None if query.kind == QueryKind::EntityChoice => {
                let _ = writeln!(out, " — no description available");
            }
            None => {
                let _ = writeln!(out);
            }
        }
    }
    if let (Some(sentinel), Some(index)) = (query.sentinel, query.sentinel_index()) {
        let text = match sentinel {
            Sentinel::None => "None of the above",
            Sentinel::Other => "Other (an entity outside these categories)",
        };
        let _ = writeln!(out, "{index}. {text}");
    }
}

/// A window of at most `window` characters centered on the first
/// case-insensitive occurrence of the mention; the head of the document if
/// the mention does not occur. Counts characters, not bytes, so multi-byte
/// text never gets split.
pub fn excerpt(document: &str, mention: &str, window: usize) -> String {
    let chars: Vec<char> = document.chars().collect();
    if chars.len() <= window {
        return document.to_string();
    }
    let center =
        find_char_offset(&chars, mention).map_or(0, |start| start + mention.chars().count() / 2);
    let half = window / 2;
    let start = center.saturating_sub(half).min(chars.len() - window);
    chars[start..start + window].iter().collect()
}

fn find_char_offset(chars: &[char], needle: &str) -> Option<usize> {
    let needle: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
    if needle.is_empty() || needle.len() > chars.len() {
        return None;
    }
    let hay: Vec<char> = chars.iter().flat_map(|c| c.to_lowercase()).collect();
    hay.windows(needle.len())
        .position(|w| w == needle.as_slice())
}
