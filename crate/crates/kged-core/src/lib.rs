//! Taxonomy-guided entity disambiguation.
//!
//! Given a mention in a document and a candidate set of KG entities, this
//! crate builds a DAG over the candidates' class taxonomy and iteratively
//! prunes it through multiple-choice queries to a pluggable selector
//! backend, enriching entity-level choices with retrieved descriptions.
//! The [`evaluation`] module scores batch runs with inKB micro-F1, the
//! Gold F1 ceiling, and %Gold, and histograms iterations per run.
//!
//! Modules follow the pipeline:
//!
//! - [`taxonomy`]: load and serve an immutable class-hierarchy snapshot;
//! - [`subgraph`]: the per-mention candidate DAG and its graph operations;
//! - [`selector`]: query construction, response parsing, and the three
//!   backends (HTTP, scripted replay, gold oracle);
//! - [`descriptions`]: description retrieval with a persistent cache;
//! - [`pruning`]: the disambiguation loop and its trace;
//! - [`evaluation`]: datasets, metrics, and the batch runner.

pub mod descriptions;
pub mod evaluation;
pub mod node;
pub mod pruning;
pub mod selector;
pub mod subgraph;
pub mod taxonomy;
#[cfg(feature = "testkit")]
pub mod testkit;

pub use node::{NodeId, ROOT_LABEL};
pub use pruning::{
    baseline_disambiguate, disambiguate, DisambiguationTask, DisambiguationTrace, PipelineKind,
    PipelineOptions,
};
pub use subgraph::{CandidateDag, NodeKind, SuccessorCase, SuccessorCaseKind};
pub use taxonomy::{SnapshotStats, TaxonomyStore};
