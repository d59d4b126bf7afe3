//! Deterministic fixture-replay backend.
//!
//! The script is JSON Lines, one entry per expected query:
//! `{"mention_id": "...", "ordinal": 0, "answer": "2"}`. Ordinals are
//! 0-based and count every query of a mention's run, assessments included.
//! A missing entry is an error, never a silent default — a script that has
//! drifted from the pipeline should fail loudly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;

use super::{parse_response, ChoiceQuery, QueryContext, Selection, Selector, SelectorError};

#[derive(Debug, Deserialize)]
struct ScriptEntry {
    mention_id: String,
    ordinal: u32,
    answer: String,
}

/// Replays scripted raw answers keyed by `(mention_id, ordinal)`.
#[derive(Debug, Default)]
pub struct ScriptedSelector {
    entries: HashMap<(String, u32), String>,
}

impl ScriptedSelector {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SelectorError> {
        let file = File::open(path.as_ref()).map_err(|e| SelectorError::BadScript {
            line: 0,
            reason: e.to_string(),
        })?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, SelectorError> {
        let mut entries = HashMap::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| SelectorError::BadScript {
                line: line_no,
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(&line).map_err(|e| SelectorError::BadScript {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            if entries
                .insert((entry.mention_id.clone(), entry.ordinal), entry.answer)
                .is_some()
            {
                return Err(SelectorError::BadScript {
                    line: line_no,
                    reason: format!(
                        "duplicate entry for mention `{}` ordinal {}",
                        entry.mention_id, entry.ordinal
                    ),
                });
            }
        }
        Ok(ScriptedSelector { entries })
    }

    /// Builds a script in memory; handy in tests.
    pub fn from_answers<I, S>(mention_id: &str, answers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = answers
            .into_iter()
            .enumerate()
            .map(|(i, a)| ((mention_id.to_string(), i as u32), a.into()))
            .collect();
        ScriptedSelector { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Selector for ScriptedSelector {
    fn select(
        &self,
        ctx: &QueryContext<'_>,
        query: &ChoiceQuery,
    ) -> Result<Selection, SelectorError> {
        let answer = self
            .entries
            .get(&(ctx.mention_id.to_string(), ctx.ordinal))
            .ok_or_else(|| SelectorError::MissingScriptEntry {
                mention_id: ctx.mention_id.to_string(),
                ordinal: ctx.ordinal,
            })?;
        Ok(parse_response(answer, query))
    }
}
