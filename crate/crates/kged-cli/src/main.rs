//! Batch entry points wiring the whole pipeline: snapshot validation and
//! statistics, single-mention disambiguation, dataset evaluation, cache
//! warming, and trace inspection.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for bad input
//! data, 4 for an exhausted selector backend.

mod config;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use kged_core::descriptions::{DescriptionProvider, DescriptionStore, HttpFetcher, NoDescriptions};
use kged_core::evaluation::{load_error_tags, run_eval, Dataset};
use kged_core::pruning::{DisambiguationTrace, PipelineErrorKind, PipelineFailure};
use kged_core::selector::{
    HttpSelector, HttpSelectorConfig, OracleSelector, ScriptedSelector, Selector, SelectorError,
};
use kged_core::{
    baseline_disambiguate, disambiguate, DisambiguationTask, NodeId, PipelineKind, PipelineOptions,
    TaxonomyStore,
};

use config::{BackendKind, PipelineChoice, RunConfig, RunManifest};

#[derive(Parser)]
#[command(
    name = "kged",
    version,
    about = "Taxonomy-guided entity disambiguation over pluggable selector backends"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a snapshot and print its statistics.
    Stats {
        /// Taxonomy snapshot file.
        #[arg(long)]
        kg_snapshot: PathBuf,
        /// Base directory that relative paths are resolved against.
        #[arg(long, default_value = ".")]
        workspace_root: PathBuf,
    },
    /// Disambiguate one mention and write its trace.
    Run {
        #[command(flatten)]
        config: RunConfig,
        /// Surface text of the mention.
        #[arg(long)]
        mention: String,
        /// Document text given inline.
        #[arg(long)]
        document: Option<String>,
        /// Document text read from a file.
        #[arg(long)]
        document_file: Option<PathBuf>,
        /// Comma-separated candidate entity labels.
        #[arg(long, value_delimiter = ',', required = true)]
        candidates: Vec<String>,
        /// Gold entity; required by the oracle backend, never prompted.
        #[arg(long)]
        gold: Option<String>,
        /// Identifier used in the trace file name and mock-script keys.
        #[arg(long, default_value = "cli")]
        mention_id: String,
    },
    /// Run a dataset through a pipeline and write the metric report.
    Eval {
        #[command(flatten)]
        config: RunConfig,
        /// Dataset file (JSON Lines of doc and mention records).
        #[arg(long)]
        dataset: PathBuf,
        /// Optional error-tag overlay merged into the report.
        #[arg(long)]
        error_tags: Option<PathBuf>,
        /// Also write the report as a tab-separated table.
        #[arg(long, default_value_t = false)]
        tsv: bool,
    },
    /// Prefetch descriptions for every candidate in a dataset.
    WarmCache {
        /// Dataset file whose candidates should be covered.
        #[arg(long)]
        dataset: PathBuf,
        /// Description cache file to fill.
        #[arg(long)]
        desc_cache: PathBuf,
        /// KB summary endpoint with an `{entity}` placeholder.
        #[arg(
            long,
            default_value = "https://en.wikipedia.org/api/rest_v1/page/summary/{entity}"
        )]
        desc_endpoint: String,
        /// Dot-separated path of the summary text field.
        #[arg(long, default_value = "extract")]
        desc_field: String,
        /// Base directory that relative paths are resolved against.
        #[arg(long, default_value = ".")]
        workspace_root: PathBuf,
    },
    /// Pretty-print a trace file iteration by iteration.
    InspectTrace {
        /// Trace JSON written by `run` or `eval`.
        #[arg(long)]
        trace: PathBuf,
    },
}

enum CliError {
    Config(String),
    Data(String),
    Backend(String),
}

impl CliError {
    fn report(&self) -> (&str, &str, u8) {
        match self {
            CliError::Config(m) => ("configuration error", m, 2),
            CliError::Data(m) => ("data error", m, 3),
            CliError::Backend(m) => ("backend error", m, 4),
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, message, code) = e.report();
            eprintln!("kged: {kind}: {message}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stats {
            kg_snapshot,
            workspace_root,
        } => cmd_stats(&workspace_root.join(kg_snapshot)),
        Command::Run {
            config,
            mention,
            document,
            document_file,
            candidates,
            gold,
            mention_id,
        } => cmd_run(
            &config,
            RunArgs {
                mention,
                document,
                document_file,
                candidates,
                gold,
                mention_id,
            },
        ),
        Command::Eval {
            config,
            dataset,
            error_tags,
            tsv,
        } => cmd_eval(&config, &dataset, error_tags.as_deref(), tsv),
        Command::WarmCache {
            dataset,
            desc_cache,
            desc_endpoint,
            desc_field,
            workspace_root,
        } => cmd_warm_cache(
            &workspace_root.join(dataset),
            &workspace_root.join(desc_cache),
            &desc_endpoint,
            &desc_field,
        ),
        Command::InspectTrace { trace } => cmd_inspect_trace(&trace),
    }
}

fn cmd_stats(snapshot: &Path) -> Result<(), CliError> {
    let store =
        TaxonomyStore::load_snapshot(snapshot).map_err(|e| CliError::Data(e.to_string()))?;
    let stats = store.compute_stats();
    println!("source                {}", store.source_name());
    println!("instances             {}", stats.instance_count);
    println!("classes               {}", stats.class_count);
    println!("avg tree depth        {:.2}", stats.avg_tree_depth);
    println!("avg branching factor  {:.2}", stats.avg_branching_factor);
    Ok(())
}

struct RunArgs {
    mention: String,
    document: Option<String>,
    document_file: Option<PathBuf>,
    candidates: Vec<String>,
    gold: Option<String>,
    mention_id: String,
}

fn cmd_run(config: &RunConfig, args: RunArgs) -> Result<(), CliError> {
    let store = load_store(config)?;
    let document = match (&args.document, &args.document_file) {
        (Some(text), None) => text.clone(),
        (None, Some(path)) => fs::read_to_string(config.resolve(path))
            .map_err(|e| CliError::Data(format!("cannot read document file: {e}")))?,
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--document and --document-file are mutually exclusive".to_string(),
            ));
        }
        (None, None) => {
            return Err(CliError::Config(
                "one of --document or --document-file is required".to_string(),
            ));
        }
    };
    if matches!(config.backend, BackendKind::Oracle) && args.gold.is_none() {
        return Err(CliError::Config(
            "the oracle backend needs --gold".to_string(),
        ));
    }

    let task = DisambiguationTask {
        id: args.mention_id.clone(),
        mention: args.mention,
        document,
        candidates: args.candidates.iter().map(NodeId::new).collect(),
        gold: args.gold.map(|g| NodeId::new(&g)),
    };
    for warning in task.validate(config.k_max).map_err(map_pipeline_error)? {
        eprintln!("kged: warning: {warning}");
    }

    let selector = build_selector(config, &store)?;
    let descriptions = build_descriptions(config)?;
    let opts = pipeline_options(config);

    let out_dir = config.output_path();
    let manifest = RunManifest::collect(config, None)
        .map_err(|e| CliError::Data(format!("cannot hash inputs: {e}")))?;
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    let outcome = match config.pipeline {
        PipelineChoice::Kg => disambiguate(
            &task,
            &store,
            selector.as_ref(),
            descriptions.as_ref(),
            &opts,
        ),
        PipelineChoice::Baseline => baseline_disambiguate(
            &task,
            selector.as_ref(),
            descriptions.as_ref(),
            false,
            &opts,
        ),
        PipelineChoice::BaselineDesc => {
            baseline_disambiguate(&task, selector.as_ref(), descriptions.as_ref(), true, &opts)
        }
    };

    match outcome {
        Ok((entity, trace)) => {
            let path = write_trace(&out_dir, &trace)?;
            println!("entity: {entity}");
            println!("trace: {}", path.display());
            Ok(())
        }
        Err(PipelineFailure { error, trace }) => {
            let path = write_trace(&out_dir, &trace)?;
            eprintln!("kged: partial trace written to {}", path.display());
            Err(map_pipeline_error(error))
        }
    }
}

fn cmd_eval(
    config: &RunConfig,
    dataset_path: &Path,
    error_tags: Option<&Path>,
    tsv: bool,
) -> Result<(), CliError> {
    let store = load_store(config)?;
    let dataset_path = config.resolve(dataset_path);
    let (dataset, warnings) =
        Dataset::load(&dataset_path).map_err(|e| CliError::Data(e.to_string()))?;
    for warning in &warnings {
        eprintln!("kged: warning: {warning}");
    }
    for mention in &dataset.mentions {
        if mention.candidates.len() > config.k_max {
            return Err(CliError::Data(format!(
                "mention `{}` has {} candidates, above --k-max {}",
                mention.mention_id,
                mention.candidates.len(),
                config.k_max
            )));
        }
    }
    let tags = match error_tags {
        Some(path) => {
            load_error_tags(config.resolve(path)).map_err(|e| CliError::Data(e.to_string()))?
        }
        None => Vec::new(),
    };

    let selector = build_selector(config, &store)?;
    let descriptions = build_descriptions(config)?;
    let opts = pipeline_options(config);

    let out_dir = config.output_path();
    let manifest = RunManifest::collect(config, Some(&dataset_path))
        .map_err(|e| CliError::Data(format!("cannot hash inputs: {e}")))?;
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    let outcome = run_eval(
        &dataset,
        PipelineKind::from(config.pipeline),
        &store,
        selector.as_ref(),
        descriptions.as_ref(),
        &opts,
        config.max_in_flight,
        &tags,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;

    for warning in &outcome.warnings {
        eprintln!("kged: warning: {warning}");
    }
    for trace in &outcome.traces {
        write_trace(&out_dir, trace)?;
    }
    write_json(&out_dir.join("report.json"), &outcome.report)?;
    if tsv {
        fs::write(out_dir.join("report.tsv"), outcome.report.to_tsv())
            .map_err(|e| CliError::Data(format!("cannot write report.tsv: {e}")))?;
    }

    let metrics = &outcome.report.per_dataset[&dataset.name];
    let stats = dataset.stats();
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "dataset {}: {} docs, {} mentions, avg {:.1} chars/doc",
        dataset.name, stats.documents, stats.mentions, stats.avg_document_chars
    );
    println!(
        "mentions: {} inKB, {} not inKB, {} failed",
        metrics.in_kb_mentions, metrics.not_in_kb_mentions, metrics.failed_mentions
    );
    println!(
        "micro_f1 {}  gold_f1 {}  pct_gold {}",
        fmt(metrics.micro_f1),
        fmt(metrics.gold_f1),
        metrics
            .pct_gold
            .map_or("n/a".to_string(), |p| format!("{p:.1}"))
    );
    println!(
        "mean iterations {:.2}  fallback parses {}",
        outcome.report.mean_iterations, outcome.report.fallback_parse_count
    );
    println!("report: {}", out_dir.join("report.json").display());
    Ok(())
}

fn cmd_warm_cache(
    dataset: &Path,
    cache: &Path,
    endpoint: &str,
    field: &str,
) -> Result<(), CliError> {
    let (dataset, _) = Dataset::load(dataset).map_err(|e| CliError::Data(e.to_string()))?;
    let fetcher = Box::new(HttpFetcher::new(endpoint, field, 15_000));
    let (store, warnings) =
        DescriptionStore::open(cache, Some(fetcher)).map_err(|e| CliError::Data(e.to_string()))?;
    for warning in warnings {
        eprintln!("kged: warning: {warning}");
    }
    let mut wanted: BTreeSet<NodeId> = BTreeSet::new();
    for mention in &dataset.mentions {
        wanted.extend(mention.candidates.iter().cloned());
    }
    let total = wanted.len();
    let mut found = 0usize;
    for entity in wanted {
        if store.describe(&entity).is_some() {
            found += 1;
        }
    }
    println!(
        "warmed {} of {total} candidate descriptions ({} fetches, {} failures)",
        found,
        store.fetch_calls(),
        store.fetch_failures()
    );
    Ok(())
}

fn cmd_inspect_trace(path: &Path) -> Result<(), CliError> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::Data(e.to_string()))?;
    let trace: DisambiguationTrace =
        serde_json::from_str(&raw).map_err(|e| CliError::Data(format!("not a trace file: {e}")))?;
    println!(
        "mention {}  pipeline {:?}  template {}",
        trace.mention_id, trace.pipeline, trace.template_version
    );
    println!(
        "calls {} (entity {}, assessments {})  result {}",
        trace.total_selector_calls,
        trace.entity_query_calls,
        trace.assessment_calls,
        trace
            .result
            .as_ref()
            .map_or("<none>".to_string(), |r| r.to_string())
    );
    for (i, it) in trace.iterations.iter().enumerate() {
        let lca = it.lca.as_ref().map_or("-".to_string(), |l| l.to_string());
        let options: Vec<String> = it
            .options_shown
            .iter()
            .map(|o| format!("{}:{}", o.index, o.label))
            .collect();
        println!(
            "  [{}] lca {}  case {:?}  options [{}]",
            i + 1,
            lca,
            it.case,
            options.join(", ")
        );
        println!(
            "      answer {:?} ({:?})  pruned {}",
            it.selection.choice,
            it.selection.parse_status,
            it.pruned.len()
        );
        if let Some(fb) = &it.fallback {
            println!("      fallback over {} entities", fb.options_shown.len());
        }
        if let Some(a) = &it.assessment {
            println!("      assessment {:?}", a.choice);
        }
    }
    Ok(())
}

fn load_store(config: &RunConfig) -> Result<TaxonomyStore, CliError> {
    TaxonomyStore::load_snapshot(config.snapshot_path()).map_err(|e| CliError::Data(e.to_string()))
}

fn pipeline_options(config: &RunConfig) -> PipelineOptions {
    PipelineOptions {
        k_max: config.k_max,
        desc_limit: config.desc_limit,
        context_window: config.context_window,
        multi_select: config.multi_select,
        template_version: config.template_version.clone(),
    }
}

fn build_selector(
    config: &RunConfig,
    store: &TaxonomyStore,
) -> Result<Box<dyn Selector>, CliError> {
    match config.backend {
        BackendKind::Mock => {
            let path = config.mock_script.as_ref().ok_or_else(|| {
                CliError::Config("the mock backend needs --mock-script".to_string())
            })?;
            let selector = ScriptedSelector::from_path(config.resolve(path))
                .map_err(|e| CliError::Data(e.to_string()))?;
            Ok(Box::new(selector))
        }
        BackendKind::Oracle => Ok(Box::new(OracleSelector::new(Arc::new(store.clone())))),
        BackendKind::Http => {
            if config.offline {
                return Err(CliError::Config(
                    "--offline cannot be combined with the http backend".to_string(),
                ));
            }
            let selector = HttpSelector::new(HttpSelectorConfig {
                endpoint: config.http_endpoint.clone(),
                model: config.http_model.clone(),
                credential_env: config.credential_env.clone(),
                max_in_flight: config.max_in_flight,
                template_version: config.template_version.clone(),
                ..HttpSelectorConfig::default()
            })
            .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Box::new(selector))
        }
    }
}

fn build_descriptions(config: &RunConfig) -> Result<Box<dyn DescriptionProvider>, CliError> {
    let Some(cache) = &config.desc_cache else {
        return Ok(Box::new(NoDescriptions));
    };
    let fetcher: Option<Box<dyn kged_core::descriptions::Fetcher>> = if config.offline {
        None
    } else {
        Some(Box::new(HttpFetcher::new(
            &config.desc_endpoint,
            &config.desc_field,
            15_000,
        )))
    };
    let (store, warnings) = DescriptionStore::open(config.resolve(cache), fetcher)
        .map_err(|e| CliError::Data(e.to_string()))?;
    for warning in warnings {
        eprintln!("kged: warning: {warning}");
    }
    Ok(Box::new(store))
}

fn map_pipeline_error(error: PipelineErrorKind) -> CliError {
    match error {
        PipelineErrorKind::Task(m) => CliError::Config(m),
        PipelineErrorKind::Graph(e) => CliError::Data(e.to_string()),
        PipelineErrorKind::Selector(e) => match e {
            SelectorError::CredentialMissing(_) | SelectorError::UnknownTemplate(_) => {
                CliError::Config(e.to_string())
            }
            SelectorError::BadScript { .. } => CliError::Data(e.to_string()),
            other => CliError::Backend(other.to_string()),
        },
    }
}

fn sanitize_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_trace(out_dir: &Path, trace: &DisambiguationTrace) -> Result<PathBuf, CliError> {
    let dir = out_dir.join("traces");
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(format!("{}.json", sanitize_file_stem(&trace.mention_id)));
    let body = serde_json::to_string_pretty(trace)
        .map_err(|e| CliError::Data(format!("cannot serialize trace: {e}")))?;
    fs::write(&path, body + "\n")
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot serialize: {e}")))?;
    fs::write(path, body + "\n")
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
