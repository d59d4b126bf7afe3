//! Multiple-choice queries and the selector backends that answer them.
//!
//! The pruning loop only knows the [`Selector`] trait. Three interchangeable
//! implementations ship with the crate: [`HttpSelector`] talks to a live
//! chat-completion endpoint, [`ScriptedSelector`] replays a recorded answer
//! fixture, and [`OracleSelector`] answers from the gold label to measure
//! the candidate-set upper bound.

mod http;
mod mock;
mod oracle;
mod parse;
mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::NodeId;

pub use http::{HttpSelector, HttpSelectorConfig};
pub use mock::ScriptedSelector;
pub use oracle::OracleSelector;
pub use parse::parse_response;
pub use template::{excerpt, render_prompt, TEMPLATE_V1};

#[derive(Debug, Error)]
pub enum SelectorError {
    #[error("credential environment variable `{0}` is not set")]
    CredentialMissing(String),
    #[error("endpoint rejected the credential (HTTP {0})")]
    CredentialRejected(u16),
    #[error("request failed after {attempts} attempts: {last_error}")]
    RetriesExhausted { attempts: u32, last_error: String },
    #[error("malformed response envelope: {0}")]
    MalformedEnvelope(String),
    #[error("endpoint failure: {0}")]
    Endpoint(String),
    #[error("no script entry for mention `{mention_id}` at ordinal {ordinal}")]
    MissingScriptEntry { mention_id: String, ordinal: u32 },
    #[error("script file is invalid at line {line}: {reason}")]
    BadScript { line: usize, reason: String },
    #[error("oracle selector needs a gold entity for mention `{0}`")]
    GoldUnavailable(String),
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
}

/// What a query is asking for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    ClassChoice,
    EntityChoice,
    MixedChoice,
    Assessment,
}

/// Artificial option appended after the real choices. `None` lets the
/// backend refuse every class; `Other` stands for the entity group in a
/// mixed query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sentinel {
    None,
    Other,
}

impl Sentinel {
    /// Canonical label used for substring matching in responses.
    pub fn label(self) -> &'static str {
        match self {
            Sentinel::None => "None",
            Sentinel::Other => "Other",
        }
    }
}

/// One selectable option; `index` is 1-based and consecutive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOption {
    pub index: usize,
    pub label: NodeId,
    pub description: Option<String>,
}

/// A multiple-choice question posed to a selector backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceQuery {
    pub kind: QueryKind,
    pub mention: String,
    pub document_excerpt: String,
    pub options: Vec<ChoiceOption>,
    /// Appended as the last option at render time when present.
    pub sentinel: Option<Sentinel>,
    /// Allows a comma-separated multi answer on class queries. Off by
    /// default; single-choice keeps the prompt bound provable.
    pub multi: bool,
}

impl ChoiceQuery {
    /// Index the sentinel occupies when rendered (one past the options).
    pub fn sentinel_index(&self) -> Option<usize> {
        self.sentinel.map(|_| self.options.len() + 1)
    }

    /// Number of selectable positions including the sentinel.
    pub fn selectable_count(&self) -> usize {
        self.options.len() + usize::from(self.sentinel.is_some())
    }
}

/// Knobs for query construction. Defaults: 250-character descriptions and a
/// 2000-character context window.
#[derive(Debug, Clone)]
pub struct QueryOptions {
    pub desc_limit: usize,
    pub context_window: usize,
    pub multi_select: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            desc_limit: 250,
            context_window: 2000,
            multi_select: false,
        }
    }
}

/// Builds a query from raw parts: windows the document around the mention,
/// truncates descriptions, and picks the sentinel the kind calls for
/// (`None` for class choices, `Other` for mixed ones).
pub fn build_query(
    kind: QueryKind,
    mention: &str,
    document: &str,
    options: Vec<(NodeId, Option<String>)>,
    opts: &QueryOptions,
) -> ChoiceQuery {
    let sentinel = match kind {
        QueryKind::ClassChoice => Some(Sentinel::None),
        QueryKind::MixedChoice => Some(Sentinel::Other),
        QueryKind::EntityChoice | QueryKind::Assessment => None,
    };
    let options = options
        .into_iter()
        .enumerate()
        .map(|(i, (label, description))| ChoiceOption {
            index: i + 1,
            label,
            description: description
                .map(|d| crate::descriptions::truncate_for_prompt(&d, opts.desc_limit)),
        })
        .collect();
    ChoiceQuery {
        kind,
        mention: mention.to_string(),
        document_excerpt: excerpt(document, mention, opts.context_window),
        options,
        sentinel,
        multi: opts.multi_select && kind == QueryKind::ClassChoice,
    }
}

/// Yes/no answer to an assessment query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

/// The resolved meaning of a raw response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Choice {
    Index { index: usize },
    Multi { indices: Vec<usize> },
    Sentinel { sentinel: Sentinel },
    Verdict { verdict: Verdict },
}

/// How strictly the raw response matched an option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Exact,
    Normalized,
    Fallback,
}

/// A parsed backend answer, kept verbatim alongside its interpretation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub choice: Choice,
    pub raw_response: String,
    pub parse_status: ParseStatus,
    /// Transport retries the backend needed before this answer arrived.
    pub retries: u32,
}

/// Out-of-band context for a select call. `gold` and `gold_ancestors` exist
/// only for the oracle backend; neither ever reaches any prompt.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a> {
    pub mention_id: &'a str,
    /// 0-based position of this query within the mention's run, counting
    /// every query including assessments.
    pub ordinal: u32,
    pub gold: Option<&'a NodeId>,
    /// Ancestors-or-self of the gold entity in the current candidate
    /// graph, when the caller has one. The graph splices entity-as-class
    /// chains through typing edges, so its ancestry is what class-level
    /// oracle answers must follow; plain subclass ancestry can disagree.
    pub gold_ancestors: Option<&'a std::collections::BTreeSet<NodeId>>,
}

impl<'a> QueryContext<'a> {
    /// Context carrying only the mention id and query ordinal.
    pub fn plain(mention_id: &'a str, ordinal: u32) -> Self {
        QueryContext {
            mention_id,
            ordinal,
            gold: None,
            gold_ancestors: None,
        }
    }
}

/// A backend that answers multiple-choice queries. Implementations must
/// tolerate concurrent calls.
pub trait Selector: Send + Sync {
    fn select(
        &self,
        ctx: &QueryContext<'_>,
        query: &ChoiceQuery,
    ) -> Result<Selection, SelectorError>;
}
