//! The iterative disambiguation loop.
//!
//! While more than one candidate leaf remains, find the lowest common
//! ancestor of the leaves, classify its direct successors and ask the
//! selector to narrow them down:
//!
//! - all classes: single choice over the classes plus a `None` option;
//!   picking `None` falls back to an entity choice over every current leaf,
//!   with descriptions;
//! - all entities: entity choice with descriptions;
//! - mixed: choice over the classes plus `Other`, where `Other` stands for
//!   the entity successors; picking a class also drops those entities.
//!
//! When a class-level step leaves exactly one entity, the selector is asked
//! to confirm it (the description rides along, so the backend always sees
//! entity information before the run commits to an answer); a rejection
//! falls back to an entity choice over the leaves as they stood at the
//! start of that iteration. If an iteration fails to shrink the leaf set —
//! possible only in multi-select mode or after an unreduced edge pattern —
//! an entity choice over the current leaves is forced so every run
//! terminates within one query round per candidate.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptions::DescriptionProvider;
use crate::node::NodeId;
use crate::selector::{
    build_query, Choice, ChoiceOption, ChoiceQuery, QueryContext, QueryKind, QueryOptions,
    Selection, Selector, SelectorError, Sentinel, Verdict, TEMPLATE_V1,
};
use crate::subgraph::{CandidateDag, GraphError, SuccessorCaseKind};
use crate::taxonomy::TaxonomyStore;

#[derive(Debug, Error)]
pub enum PipelineErrorKind {
    #[error("invalid task: {0}")]
    Task(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
}

/// A pipeline failure carrying the trace accumulated so far.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct PipelineFailure {
    pub error: PipelineErrorKind,
    pub trace: Box<DisambiguationTrace>,
}

/// Which pipeline produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    /// Taxonomy-guided pruning with description-enriched entity queries.
    Kg,
    /// One direct entity choice, no classes, no descriptions.
    Baseline,
    /// One direct entity choice with descriptions appended.
    BaselineWithDescriptions,
}

/// One mention to disambiguate. `gold` is evaluation-only; it is never
/// rendered into any prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisambiguationTask {
    pub id: String,
    pub mention: String,
    pub document: String,
    pub candidates: Vec<NodeId>,
    pub gold: Option<NodeId>,
}

impl DisambiguationTask {
    /// Hard validation plus soft warnings. A mention that does not occur in
    /// its document (case-insensitively) is suspicious but not fatal.
    pub fn validate(&self, k_max: usize) -> Result<Vec<String>, PipelineErrorKind> {
        if self.candidates.is_empty() {
            return Err(PipelineErrorKind::Task(format!(
                "mention `{}` has no candidates",
                self.id
            )));
        }
        if self.candidates.len() > k_max {
            return Err(PipelineErrorKind::Task(format!(
                "mention `{}` has {} candidates, above the configured maximum {}",
                self.id,
                self.candidates.len(),
                k_max
            )));
        }
        let mut seen = BTreeSet::new();
        for candidate in &self.candidates {
            if candidate.is_root() {
                return Err(PipelineErrorKind::Task(format!(
                    "mention `{}` lists the root class as a candidate",
                    self.id
                )));
            }
            if !seen.insert(candidate) {
                return Err(PipelineErrorKind::Task(format!(
                    "mention `{}` lists candidate `{candidate}` twice",
                    self.id
                )));
            }
        }
        let mut warnings = Vec::new();
        if !self
            .document
            .to_lowercase()
            .contains(&self.mention.to_lowercase())
        {
            warnings.push(format!(
                "mention `{}`: surface text `{}` does not occur in its document",
                self.id, self.mention
            ));
        }
        Ok(warnings)
    }
}

/// Knobs shared by both pipelines. Defaults: candidate sets up to 10,
/// 250-character descriptions, 2000-character context window, single-choice
/// class queries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub k_max: usize,
    pub desc_limit: usize,
    pub context_window: usize,
    pub multi_select: bool,
    pub template_version: String,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            k_max: 10,
            desc_limit: 250,
            context_window: 2000,
            multi_select: false,
            template_version: TEMPLATE_V1.to_string(),
        }
    }
}

impl PipelineOptions {
    fn query_options(&self, multi: bool) -> QueryOptions {
        QueryOptions {
            desc_limit: self.desc_limit,
            context_window: self.context_window,
            multi_select: multi && self.multi_select,
        }
    }
}

/// A secondary query inside an iteration: the entity fallback after `None`,
/// a rejected assessment, or a forced-progress round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub options_shown: Vec<ChoiceOption>,
    pub selection: Selection,
}

/// One loop iteration as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceIteration {
    /// Lowest common ancestor of the leaves at iteration start; absent in
    /// baseline traces, which have no graph.
    pub lca: Option<NodeId>,
    pub case: SuccessorCaseKind,
    /// Options of the iteration's primary query, without the sentinel.
    pub options_shown: Vec<ChoiceOption>,
    /// The sentinel the selector picked in the primary query, if any.
    pub sentinel_used: Option<Sentinel>,
    /// Primary selection of the iteration.
    pub selection: Selection,
    /// Entity fallback query, when one ran.
    pub fallback: Option<QueryRecord>,
    /// Assessment answer, when the iteration ended on a single entity via a
    /// class-level step.
    pub assessment: Option<Selection>,
    /// Every node that left the graph during this iteration, cascades
    /// included.
    pub pruned: BTreeSet<NodeId>,
    /// Equally deep common ancestors that lost the label tie-break.
    pub lca_ties: BTreeSet<NodeId>,
}

/// Complete per-mention record: enough to replay the run query by query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisambiguationTrace {
    pub mention_id: String,
    pub pipeline: PipelineKind,
    pub template_version: String,
    pub iterations: Vec<TraceIteration>,
    pub total_selector_calls: u32,
    pub entity_query_calls: u32,
    pub assessment_calls: u32,
    pub assessment_triggered: bool,
    /// The chosen entity; `None` only in partial traces attached to errors.
    pub result: Option<NodeId>,
}

impl DisambiguationTrace {
    fn new(mention_id: &str, pipeline: PipelineKind, template_version: &str) -> Self {
        DisambiguationTrace {
            mention_id: mention_id.to_string(),
            pipeline,
            template_version: template_version.to_string(),
            iterations: Vec::new(),
            total_selector_calls: 0,
            entity_query_calls: 0,
            assessment_calls: 0,
            assessment_triggered: false,
            result: None,
        }
    }

    /// Selections whose raw response needed the fallback parse.
    pub fn fallback_parse_count(&self) -> u32 {
        use crate::selector::ParseStatus;
        let mut count = 0u32;
        for it in &self.iterations {
            if it.selection.parse_status == ParseStatus::Fallback {
                count += 1;
            }
            if let Some(f) = &it.fallback {
                if f.selection.parse_status == ParseStatus::Fallback {
                    count += 1;
                }
            }
            if let Some(a) = &it.assessment {
                if a.parse_status == ParseStatus::Fallback {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Shared bookkeeping for one run: the trace plus the query ordinal fed to
/// the selector context.
struct Run<'a> {
    task: &'a DisambiguationTask,
    selector: &'a dyn Selector,
    descriptions: &'a dyn DescriptionProvider,
    opts: &'a PipelineOptions,
    trace: DisambiguationTrace,
}

impl<'a> Run<'a> {
    fn select(
        &mut self,
        query: &ChoiceQuery,
        gold_ancestors: Option<&BTreeSet<NodeId>>,
    ) -> Result<Selection, SelectorError> {
        let ctx = QueryContext {
            mention_id: &self.task.id,
            ordinal: self.trace.total_selector_calls,
            gold: self.task.gold.as_ref(),
            gold_ancestors,
        };
        let selection = self.selector.select(&ctx, query)?;
        self.trace.total_selector_calls += 1;
        match query.kind {
            QueryKind::EntityChoice => self.trace.entity_query_calls += 1,
            QueryKind::Assessment => {
                self.trace.assessment_calls += 1;
                self.trace.assessment_triggered = true;
            }
            _ => {}
        }
        Ok(selection)
    }

    fn describe(&self, entity: &NodeId) -> Option<String> {
        self.descriptions.describe(entity).map(|d| d.text)
    }

    fn entity_options(&self, entities: &[NodeId]) -> Vec<(NodeId, Option<String>)> {
        entities
            .iter()
            .map(|e| (e.clone(), self.describe(e)))
            .collect()
    }

    /// Entity choice over `leaves`; returns the picked leaf.
    fn entity_round(&mut self, leaves: &[NodeId]) -> Result<(NodeId, QueryRecord), SelectorError> {
        let query = build_query(
            QueryKind::EntityChoice,
            &self.task.mention,
            &self.task.document,
            self.entity_options(leaves),
            &self.opts.query_options(false),
        );
        let selection = self.select(&query, None)?;
        let chosen = match selection.choice {
            Choice::Index { index } => leaves[index - 1].clone(),
            // Entity queries have no sentinel and parsing cannot produce
            // verdicts or multi picks for them.
            _ => leaves[0].clone(),
        };
        Ok((
            chosen,
            QueryRecord {
                options_shown: query.options,
                selection,
            },
        ))
    }
}

/// Runs the taxonomy-guided pipeline for one mention.
pub fn disambiguate(
    task: &DisambiguationTask,
    store: &TaxonomyStore,
    selector: &dyn Selector,
    descriptions: &dyn DescriptionProvider,
    opts: &PipelineOptions,
) -> Result<(NodeId, DisambiguationTrace), PipelineFailure> {
    let mut run = Run {
        task,
        selector,
        descriptions,
        opts,
        trace: DisambiguationTrace::new(&task.id, PipelineKind::Kg, &opts.template_version),
    };
    match drive(&mut run, store) {
        Ok(result) => {
            run.trace.result = Some(result.clone());
            debug_assert!(task.candidates.contains(&result));
            Ok((result, run.trace))
        }
        Err(error) => Err(PipelineFailure {
            error,
            trace: Box::new(run.trace),
        }),
    }
}

fn drive(run: &mut Run<'_>, store: &TaxonomyStore) -> Result<NodeId, PipelineErrorKind> {
    run.task.validate(run.opts.k_max)?;
    if run.task.candidates.len() == 1 {
        return Ok(run.task.candidates[0].clone());
    }

    let mut dag = CandidateDag::build_subgraph(store, &run.task.candidates)?;
    let mut rounds = 0usize;
    loop {
        let leaves = dag.leaves();
        assert!(!leaves.is_empty(), "pruning left the graph without leaves");
        if leaves.len() == 1 {
            return Ok(leaves.into_iter().next().expect("one leaf"));
        }
        rounds += 1;
        assert!(
            rounds <= run.task.candidates.len(),
            "pruning exceeded the per-candidate round bound"
        );

        let start_dag = dag.clone();
        let (lca, lca_ties) = dag.lca_with_ties(&leaves)?;
        let case = dag.successor_case(&lca)?;

        // Ancestors-or-self of the gold in the current graph, for the
        // oracle backend only; other backends ignore the context field.
        let gold_up: Option<BTreeSet<NodeId>> = run.task.gold.as_ref().and_then(|g| {
            if !dag.contains(g) {
                return None;
            }
            let mut up = dag.ancestors(g).ok()?;
            up.insert(g.clone());
            Some(up)
        });

        let mut sentinel_used = None;
        let mut fallback = None;
        let mut assessment = None;

        let (options_shown, selection) = match case.kind {
            SuccessorCaseKind::AllClasses => {
                let query = build_query(
                    QueryKind::ClassChoice,
                    &run.task.mention,
                    &run.task.document,
                    case.class_successors
                        .iter()
                        .map(|c| (c.clone(), None))
                        .collect(),
                    &run.opts.query_options(true),
                );
                let selection = run.select(&query, gold_up.as_ref())?;
                match &selection.choice {
                    Choice::Sentinel { sentinel } => {
                        sentinel_used = Some(*sentinel);
                        let (chosen, record) = run.entity_round(&leaves)?;
                        let keep: BTreeSet<NodeId> = BTreeSet::from([chosen]);
                        let drop: BTreeSet<NodeId> = leaves
                            .iter()
                            .filter(|l| !keep.contains(*l))
                            .cloned()
                            .collect();
                        dag = dag.prune(&drop)?;
                        fallback = Some(record);
                    }
                    Choice::Index { index } => {
                        let chosen = case.class_successors[index - 1].clone();
                        let drop: BTreeSet<NodeId> = case
                            .class_successors
                            .iter()
                            .filter(|c| **c != chosen)
                            .cloned()
                            .collect();
                        dag = dag.prune(&drop)?;
                    }
                    Choice::Multi { indices } => {
                        let keep: BTreeSet<usize> = indices.iter().copied().collect();
                        let drop: BTreeSet<NodeId> = case
                            .class_successors
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| !keep.contains(&(i + 1)))
                            .map(|(_, c)| c.clone())
                            .collect();
                        dag = dag.prune(&drop)?;
                    }
                    Choice::Verdict { .. } => {
                        unreachable!("class queries never parse to verdicts")
                    }
                }
                (query.options, selection)
            }
            SuccessorCaseKind::AllEntities => {
                let (chosen, record) = run.entity_round(&case.entity_successors)?;
                let drop: BTreeSet<NodeId> = case
                    .entity_successors
                    .iter()
                    .filter(|e| **e != chosen)
                    .cloned()
                    .collect();
                dag = dag.prune(&drop)?;
                (record.options_shown, record.selection)
            }
            SuccessorCaseKind::Mixed => {
                let query = build_query(
                    QueryKind::MixedChoice,
                    &run.task.mention,
                    &run.task.document,
                    case.class_successors
                        .iter()
                        .map(|c| (c.clone(), None))
                        .collect(),
                    &run.opts.query_options(false),
                );
                let selection = run.select(&query, gold_up.as_ref())?;
                match &selection.choice {
                    Choice::Sentinel { sentinel } => {
                        sentinel_used = Some(*sentinel);
                        let drop: BTreeSet<NodeId> =
                            case.class_successors.iter().cloned().collect();
                        dag = dag.prune(&drop)?;
                    }
                    Choice::Index { index } => {
                        let chosen = case.class_successors[index - 1].clone();
                        let drop: BTreeSet<NodeId> = case
                            .class_successors
                            .iter()
                            .filter(|c| **c != chosen)
                            .cloned()
                            .chain(case.entity_successors.iter().cloned())
                            .collect();
                        dag = dag.prune(&drop)?;
                    }
                    Choice::Multi { .. } | Choice::Verdict { .. } => {
                        unreachable!("mixed queries parse to single choices or the sentinel")
                    }
                }
                (query.options, selection)
            }
        };

        // Confirm a single survivor of a class-level step; entity-level
        // answers were already made with descriptions in view.
        let class_level =
            !matches!(case.kind, SuccessorCaseKind::AllEntities) && fallback.is_none();
        if class_level && dag.leaves().len() == 1 {
            let survivor = dag.leaves().remove(0);
            let query = build_query(
                QueryKind::Assessment,
                &run.task.mention,
                &run.task.document,
                vec![(survivor.clone(), run.describe(&survivor))],
                &run.opts.query_options(false),
            );
            let verdict_selection = run.select(&query, None)?;
            let rejected = matches!(
                verdict_selection.choice,
                Choice::Verdict {
                    verdict: Verdict::Reject
                }
            );
            assessment = Some(verdict_selection);
            if rejected {
                let (chosen, record) = run.entity_round(&leaves)?;
                let drop: BTreeSet<NodeId> =
                    leaves.iter().filter(|l| **l != chosen).cloned().collect();
                dag = start_dag.prune(&drop)?;
                fallback = Some(record);
            }
        }

        // Guaranteed progress: a round that did not shrink the leaf set
        // forces a direct entity choice so the loop cannot stall.
        if fallback.is_none() && dag.leaves().len() >= leaves.len() {
            let current = dag.leaves();
            let (chosen, record) = run.entity_round(&current)?;
            let drop: BTreeSet<NodeId> =
                current.iter().filter(|l| **l != chosen).cloned().collect();
            dag = dag.prune(&drop)?;
            fallback = Some(record);
        }

        let pruned: BTreeSet<NodeId> = start_dag
            .nodes()
            .filter(|n| !dag.contains(n))
            .cloned()
            .collect();

        run.trace.iterations.push(TraceIteration {
            lca: Some(lca),
            case: case.kind,
            options_shown,
            sentinel_used,
            selection,
            fallback,
            assessment,
            pruned,
            lca_ties,
        });
    }
}

/// Runs the non-enhanced baseline: one entity choice over the candidate
/// set, optionally with descriptions, no taxonomy involved.
pub fn baseline_disambiguate(
    task: &DisambiguationTask,
    selector: &dyn Selector,
    descriptions: &dyn DescriptionProvider,
    include_descriptions: bool,
    opts: &PipelineOptions,
) -> Result<(NodeId, DisambiguationTrace), PipelineFailure> {
    let pipeline = if include_descriptions {
        PipelineKind::BaselineWithDescriptions
    } else {
        PipelineKind::Baseline
    };
    let mut run = Run {
        task,
        selector,
        descriptions,
        opts,
        trace: DisambiguationTrace::new(&task.id, pipeline, &opts.template_version),
    };
    match baseline_drive(&mut run, include_descriptions) {
        Ok(result) => {
            run.trace.result = Some(result.clone());
            Ok((result, run.trace))
        }
        Err(error) => Err(PipelineFailure {
            error,
            trace: Box::new(run.trace),
        }),
    }
}

fn baseline_drive(
    run: &mut Run<'_>,
    include_descriptions: bool,
) -> Result<NodeId, PipelineErrorKind> {
    run.task.validate(run.opts.k_max)?;
    if run.task.candidates.len() == 1 {
        return Ok(run.task.candidates[0].clone());
    }
    let options = if include_descriptions {
        run.entity_options(&run.task.candidates)
    } else {
        run.task
            .candidates
            .iter()
            .map(|c| (c.clone(), None))
            .collect()
    };
    let query = build_query(
        QueryKind::EntityChoice,
        &run.task.mention,
        &run.task.document,
        options,
        &run.opts.query_options(false),
    );
    let selection = run.select(&query, None)?;
    let chosen = match selection.choice {
        Choice::Index { index } => run.task.candidates[index - 1].clone(),
        _ => run.task.candidates[0].clone(),
    };
    run.trace.iterations.push(TraceIteration {
        lca: None,
        case: SuccessorCaseKind::AllEntities,
        options_shown: query.options,
        sentinel_used: None,
        selection,
        fallback: None,
        assessment: None,
        pruned: run
            .task
            .candidates
            .iter()
            .filter(|c| **c != chosen)
            .cloned()
            .collect(),
        lca_ties: BTreeSet::new(),
    });
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptions::{Description, NoDescriptions};
    use crate::selector::{OracleSelector, ParseStatus, ScriptedSelector};
    use std::sync::Arc;

    fn fig_store() -> TaxonomyStore {
        let snapshot = "SC\tPerson\tThing\nSC\tMusician\tPerson\nSC\tPolitician\tPerson\n\
                        TY\tJustinBieber\tMusician\nTY\tJustinTimberlake\tMusician\n\
                        TY\tJustinTrudeau\tPolitician\n";
        TaxonomyStore::parse_snapshot(snapshot.as_bytes(), "fig").unwrap()
    }

    struct CannedDescriptions;

    impl DescriptionProvider for CannedDescriptions {
        fn describe(&self, entity: &NodeId) -> Option<Description> {
            Some(Description {
                entity: entity.clone(),
                text: format!("{entity} is a well-known public figure."),
                fetched_at: 0,
                source: "canned".to_string(),
            })
        }
    }

    fn justin_task() -> DisambiguationTask {
        DisambiguationTask {
            id: "m1".to_string(),
            mention: "Justin".to_string(),
            document: "Justin was all over the MTV awards coverage this week.".to_string(),
            candidates: vec![
                NodeId::new("JustinBieber"),
                NodeId::new("JustinTimberlake"),
                NodeId::new("JustinTrudeau"),
            ],
            gold: Some(NodeId::new("JustinBieber")),
        }
    }

    #[test]
    fn two_step_class_then_entity_flow() {
        let store = fig_store();
        let selector = ScriptedSelector::from_answers("m1", ["Musician", "JustinBieber"]);
        let (result, trace) = disambiguate(
            &justin_task(),
            &store,
            &selector,
            &CannedDescriptions,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(result, NodeId::new("JustinBieber"));
        assert_eq!(trace.iterations.len(), 2);
        assert_eq!(trace.total_selector_calls, 2);
        assert_eq!(trace.entity_query_calls, 1);
        assert_eq!(trace.assessment_calls, 0);

        let first = &trace.iterations[0];
        assert_eq!(first.lca, Some(NodeId::new("Person")));
        assert_eq!(first.case, SuccessorCaseKind::AllClasses);
        assert!(first.pruned.contains(&NodeId::new("Politician")));
        assert!(first.pruned.contains(&NodeId::new("JustinTrudeau")));

        let second = &trace.iterations[1];
        assert_eq!(second.lca, Some(NodeId::new("Musician")));
        assert_eq!(second.case, SuccessorCaseKind::AllEntities);
        // Entity options carry descriptions.
        assert!(second.options_shown.iter().all(|o| o.description.is_some()));
    }

    #[test]
    fn single_candidate_needs_no_selector() {
        let store = fig_store();
        let selector = ScriptedSelector::default();
        let task = DisambiguationTask {
            candidates: vec![NodeId::new("JustinBieber")],
            ..justin_task()
        };
        let (result, trace) = disambiguate(
            &task,
            &store,
            &selector,
            &NoDescriptions,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(result, NodeId::new("JustinBieber"));
        assert_eq!(trace.total_selector_calls, 0);
        assert!(trace.iterations.is_empty());
    }

    #[test]
    fn none_sentinel_falls_back_to_entities() {
        let store = fig_store();
        // Refuse the classes, then take option 2 (JustinTimberlake).
        let selector = ScriptedSelector::from_answers("m1", ["none of these fit", "2"]);
        let (result, trace) = disambiguate(
            &justin_task(),
            &store,
            &selector,
            &CannedDescriptions,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(result, NodeId::new("JustinTimberlake"));
        assert_eq!(trace.iterations.len(), 1);
        let it = &trace.iterations[0];
        assert_eq!(it.sentinel_used, Some(Sentinel::None));
        let fb = it.fallback.as_ref().unwrap();
        assert_eq!(fb.options_shown.len(), 3, "fallback offers every leaf");
        assert_eq!(trace.entity_query_calls, 1);
    }

    #[test]
    fn assessment_confirms_single_survivor() {
        let snapshot = "SC\tPlace\tThing\nSC\tOrganization\tThing\n\
                        TY\tPhoenixArizona\tPlace\nTY\tPhoenixSuns\tOrganization\n";
        let store = TaxonomyStore::parse_snapshot(snapshot.as_bytes(), "t").unwrap();
        let task = DisambiguationTask {
            id: "m1".to_string(),
            mention: "Phoenix".to_string(),
            document: "A six-game series begins this Friday in Phoenix.".to_string(),
            candidates: vec![NodeId::new("PhoenixSuns"), NodeId::new("PhoenixArizona")],
            gold: Some(NodeId::new("PhoenixArizona")),
        };
        // Class pick leaves one entity; assessment accepts it.
        let selector = ScriptedSelector::from_answers("m1", ["Place", "Yes"]);
        let (result, trace) = disambiguate(
            &task,
            &store,
            &selector,
            &CannedDescriptions,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(result, NodeId::new("PhoenixArizona"));
        assert_eq!(trace.assessment_calls, 1);
        assert!(trace.assessment_triggered);
        assert_eq!(trace.iterations.len(), 1);
        assert!(trace.iterations[0].assessment.is_some());
    }

    #[test]
    fn rejected_assessment_reopens_the_iteration() {
        let snapshot = "SC\tPlace\tThing\nSC\tOrganization\tThing\n\
                        TY\tPhoenixArizona\tPlace\nTY\tPhoenixSuns\tOrganization\n";
        let store = TaxonomyStore::parse_snapshot(snapshot.as_bytes(), "t").unwrap();
        let task = DisambiguationTask {
            id: "m1".to_string(),
            mention: "Phoenix".to_string(),
            document: "A six-game series begins this Friday in Phoenix.".to_string(),
            candidates: vec![NodeId::new("PhoenixSuns"), NodeId::new("PhoenixArizona")],
            gold: None,
        };
        // Wrong class branch, negative assessment, then the entity fallback
        // over the iteration-start leaves repairs the choice.
        let selector =
            ScriptedSelector::from_answers("m1", ["Organization", "No", "PhoenixArizona"]);
        let (result, trace) = disambiguate(
            &task,
            &store,
            &selector,
            &CannedDescriptions,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(result, NodeId::new("PhoenixArizona"));
        assert_eq!(trace.assessment_calls, 1);
        let it = &trace.iterations[0];
        assert!(it.fallback.is_some());
        assert_eq!(it.fallback.as_ref().unwrap().options_shown.len(), 2);
    }

    #[test]
    fn oracle_reaches_gold() {
        let store = Arc::new(fig_store());
        let selector = OracleSelector::new(store.clone());
        let (result, trace) = disambiguate(
            &justin_task(),
            &store,
            &selector,
            &CannedDescriptions,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(result, NodeId::new("JustinBieber"));
        assert!(trace.result.is_some());
    }

    #[test]
    fn selector_failure_carries_partial_trace() {
        let store = fig_store();
        // Script covers only the first query; the second is missing.
        let selector = ScriptedSelector::from_answers("m1", ["Musician"]);
        let failure = disambiguate(
            &justin_task(),
            &store,
            &selector,
            &CannedDescriptions,
            &PipelineOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(
            failure.error,
            PipelineErrorKind::Selector(SelectorError::MissingScriptEntry { .. })
        ));
        assert_eq!(failure.trace.total_selector_calls, 1);
        assert!(failure.trace.result.is_none());
    }

    #[test]
    fn traces_replay_identically() {
        let store = fig_store();
        let run = || {
            let selector = ScriptedSelector::from_answers("m1", ["Musician", "JustinBieber"]);
            let (_, trace) = disambiguate(
                &justin_task(),
                &store,
                &selector,
                &CannedDescriptions,
                &PipelineOptions::default(),
            )
            .unwrap();
            serde_json::to_string_pretty(&trace).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn baseline_single_query() {
        let selector = ScriptedSelector::from_answers("m1", ["3"]);
        let (result, trace) = baseline_disambiguate(
            &justin_task(),
            &selector,
            &NoDescriptions,
            false,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(result, NodeId::new("JustinTrudeau"));
        assert_eq!(trace.total_selector_calls, 1);
        assert_eq!(trace.iterations.len(), 1);
        assert_eq!(trace.iterations[0].lca, None);
        assert!(trace.iterations[0]
            .options_shown
            .iter()
            .all(|o| o.description.is_none()));
    }

    #[test]
    fn baseline_single_candidate_is_immediate() {
        let selector = ScriptedSelector::default();
        let task = DisambiguationTask {
            candidates: vec![NodeId::new("Only")],
            ..justin_task()
        };
        let (result, trace) = baseline_disambiguate(
            &task,
            &selector,
            &NoDescriptions,
            false,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(result, NodeId::new("Only"));
        assert_eq!(trace.total_selector_calls, 0);
    }

    #[test]
    fn baseline_with_descriptions_attaches_them() {
        let selector = ScriptedSelector::from_answers("m1", ["1"]);
        let (_, trace) = baseline_disambiguate(
            &justin_task(),
            &selector,
            &CannedDescriptions,
            true,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert!(trace.iterations[0]
            .options_shown
            .iter()
            .all(|o| o.description.is_some()));
    }

    #[test]
    fn garbage_answers_still_terminate() {
        let store = fig_store();
        // Garbage on the class query parses to the None sentinel, which
        // falls back to an entity round; garbage there parses to option 1.
        let selector = ScriptedSelector::from_answers("m1", ["???", "???"]);
        let (result, trace) = disambiguate(
            &justin_task(),
            &store,
            &selector,
            &CannedDescriptions,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(result, NodeId::new("JustinBieber"));
        assert_eq!(
            trace.iterations[0].selection.parse_status,
            ParseStatus::Fallback
        );
        assert_eq!(trace.fallback_parse_count(), 2);
    }

    #[test]
    fn multi_select_keep_all_forces_an_entity_round() {
        let store = fig_store();
        let opts = PipelineOptions {
            multi_select: true,
            ..PipelineOptions::default()
        };
        // Keeping every class prunes nothing; the loop must force a direct
        // entity choice instead of spinning.
        let selector = ScriptedSelector::from_answers("m1", ["1, 2", "JustinTimberlake"]);
        let (result, trace) = disambiguate(
            &justin_task(),
            &store,
            &selector,
            &CannedDescriptions,
            &opts,
        )
        .unwrap();
        assert_eq!(result, NodeId::new("JustinTimberlake"));
        assert_eq!(trace.iterations.len(), 1);
        let it = &trace.iterations[0];
        assert!(matches!(it.selection.choice, Choice::Multi { .. }));
        assert!(
            it.fallback.is_some(),
            "forced entity round must be recorded"
        );
        assert_eq!(trace.entity_query_calls, 1);
    }

    #[test]
    fn multi_select_subset_prunes_the_complement() {
        let store = fig_store();
        let opts = PipelineOptions {
            multi_select: true,
            ..PipelineOptions::default()
        };
        // Keep only Musician (option 1 of {Musician, Politician}); then an
        // entity round decides among the two musicians.
        let selector = ScriptedSelector::from_answers("m1", ["1", "2"]);
        let (result, trace) = disambiguate(
            &justin_task(),
            &store,
            &selector,
            &CannedDescriptions,
            &opts,
        )
        .unwrap();
        assert_eq!(result, NodeId::new("JustinTimberlake"));
        assert!(trace.iterations[0]
            .pruned
            .contains(&NodeId::new("Politician")));
    }

    #[test]
    fn task_validation_catches_oversized_sets() {
        let task = DisambiguationTask {
            candidates: (0..11).map(|i| NodeId::new(format!("e{i}"))).collect(),
            ..justin_task()
        };
        assert!(task.validate(10).is_err());
        let warnings = justin_task().validate(10).unwrap();
        assert!(warnings.is_empty());
    }

    #[test]
    fn missing_mention_is_a_warning_not_an_error() {
        let task = DisambiguationTask {
            mention: "absent".to_string(),
            ..justin_task()
        };
        let warnings = task.validate(10).unwrap();
        assert_eq!(warnings.len(), 1);
    }
}
