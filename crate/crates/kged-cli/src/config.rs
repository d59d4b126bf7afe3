//! Run configuration shared by the subcommands, plus the replay manifest.
//!
//! Every field is serialized into the manifest written next to a run's
//! outputs, together with checksums of the snapshot, dataset, mock script
//! and description cache, so any reported number can be traced back to the
//! exact inputs that produced it.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;

use kged_core::evaluation::sha256_file;
use kged_core::PipelineKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineChoice {
    /// Taxonomy-guided pruning with description-enriched entity queries.
    Kg,
    /// Direct entity choice without classes or descriptions.
    Baseline,
    /// Direct entity choice with descriptions appended.
    BaselineDesc,
}

impl From<PipelineChoice> for PipelineKind {
    fn from(choice: PipelineChoice) -> Self {
        match choice {
            PipelineChoice::Kg => PipelineKind::Kg,
            PipelineChoice::Baseline => PipelineKind::Baseline,
            PipelineChoice::BaselineDesc => PipelineKind::BaselineWithDescriptions,
        }
    }
}

/// Flags mirroring the run configuration fields; paths are resolved
/// against `--workspace-root`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct RunConfig {
    /// Taxonomy snapshot file (TSV records: SC, TY, EC).
    #[arg(long)]
    pub kg_snapshot: PathBuf,

    /// Selector backend answering the multiple-choice queries.
    #[arg(long, value_enum)]
    pub backend: BackendKind,

    /// Which pipeline to run.
    #[arg(long, value_enum, default_value = "kg")]
    pub pipeline: PipelineChoice,

    /// Largest accepted candidate set.
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,

    /// Description truncation, in characters, at prompt time.
    #[arg(long, default_value_t = 250)]
    pub desc_limit: usize,

    /// Document window, in characters, centered on the mention.
    #[arg(long, default_value_t = 2000)]
    pub context_window: usize,

    /// Concurrent mentions in flight during evaluation.
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,

    /// Directory receiving traces, reports, and the manifest.
    #[arg(long, default_value = "kged-out")]
    pub output_dir: PathBuf,

    /// Hermetic mode: no network at all; requires a non-HTTP backend and
    /// serves descriptions from the cache only.
    #[arg(long, default_value_t = false)]
    pub offline: bool,

    /// Prompt template identifier recorded in traces and the manifest.
    #[arg(long, default_value = "v1")]
    pub template_version: String,

    /// Allow multi-answer class queries (off keeps the query bound tight).
    #[arg(long, default_value_t = false)]
    pub multi_select: bool,

    /// Answer script for the mock backend (JSON Lines).
    #[arg(long)]
    pub mock_script: Option<PathBuf>,

    /// Description cache file; descriptions are disabled when absent.
    #[arg(long)]
    pub desc_cache: Option<PathBuf>,

    /// KB summary endpoint with an `{entity}` placeholder.
    #[arg(
        long,
        default_value = "https://en.wikipedia.org/api/rest_v1/page/summary/{entity}"
    )]
    pub desc_endpoint: String,

    /// Dot-separated path of the summary text field in the KB response.
    #[arg(long, default_value = "extract")]
    pub desc_field: String,

    /// Chat-completion endpoint for the HTTP backend.
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    pub http_endpoint: String,

    /// Model name sent to the HTTP backend.
    #[arg(long, default_value = "gpt-3.5-turbo")]
    pub http_model: String,

    /// Environment variable holding the HTTP backend credential.
    #[arg(long, default_value = "KGED_API_KEY")]
    pub credential_env: String,

    /// Base directory that relative paths are resolved against.
    #[arg(long, default_value = ".")]
    pub workspace_root: PathBuf,
}

impl RunConfig {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.workspace_root.join(path)
        }
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.resolve(&self.kg_snapshot)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }
}

/// Everything needed to replay a run byte for byte.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub template_version: &'a str,
    pub snapshot_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_script_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description_cache_sha256: Option<String>,
}

impl<'a> RunManifest<'a> {
    pub fn collect(config: &'a RunConfig, dataset: Option<&Path>) -> std::io::Result<Self> {
        let sha_opt = |p: Option<PathBuf>| -> std::io::Result<Option<String>> {
            match p {
                Some(p) if p.exists() => Ok(Some(sha256_file(&p)?)),
                _ => Ok(None),
            }
        };
        Ok(RunManifest {
            config,
            dataset: dataset.map(|d| d.display().to_string()),
            template_version: &config.template_version,
            snapshot_sha256: sha256_file(config.snapshot_path())?,
            dataset_sha256: sha_opt(dataset.map(Path::to_path_buf))?,
            mock_script_sha256: sha_opt(config.mock_script.as_ref().map(|p| config.resolve(p)))?,
            description_cache_sha256: sha_opt(
                config.desc_cache.as_ref().map(|p| config.resolve(p)),
            )?,
        })
    }
}
