//! Gold-oracle backend.
//!
//! Answers every query from the gold label: class-level queries pick an
//! option that is an ancestor (or the label itself) of the gold entity,
//! falling back to the sentinel; entity queries pick the gold when present;
//! assessments accept exactly the gold. Running the pipeline with this
//! backend measures the candidate-set upper bound — the best score any
//! selector could reach given the same candidate sets.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::node::NodeId;
use crate::taxonomy::TaxonomyStore;

use super::{
    Choice, ChoiceQuery, ParseStatus, QueryContext, QueryKind, Selection, Selector, SelectorError,
    Verdict,
};

pub struct OracleSelector {
    store: Arc<TaxonomyStore>,
}

impl OracleSelector {
    pub fn new(store: Arc<TaxonomyStore>) -> Self {
        OracleSelector { store }
    }

    /// Everything above the gold in the taxonomy, climbing both typing and
    /// subclass edges so entity-as-class chains are covered. Used when the
    /// caller supplies no graph-derived ancestor set.
    fn ancestors_or_self(&self, gold: &NodeId) -> BTreeSet<NodeId> {
        let mut up = BTreeSet::from([gold.clone()]);
        let mut frontier = vec![gold.clone()];
        while let Some(current) = frontier.pop() {
            for parent in self
                .store
                .classes_of(&current)
                .into_iter()
                .chain(self.store.class_parents(&current))
            {
                if up.insert(parent.clone()) {
                    frontier.push(parent);
                }
            }
        }
        up
    }
}

impl Selector for OracleSelector {
    fn select(
        &self,
        ctx: &QueryContext<'_>,
        query: &ChoiceQuery,
    ) -> Result<Selection, SelectorError> {
        let gold = ctx
            .gold
            .ok_or_else(|| SelectorError::GoldUnavailable(ctx.mention_id.to_string()))?;

        let (choice, raw) = match query.kind {
            QueryKind::ClassChoice | QueryKind::MixedChoice => {
                let fallback_up;
                let up: &BTreeSet<NodeId> = match ctx.gold_ancestors {
                    Some(set) => set,
                    None => {
                        fallback_up = self.ancestors_or_self(gold);
                        &fallback_up
                    }
                };
                match query.options.iter().find(|o| up.contains(&o.label)) {
                    Some(option) => (
                        Choice::Index {
                            index: option.index,
                        },
                        option.index.to_string(),
                    ),
                    None => {
                        let sentinel = query.sentinel.ok_or_else(|| {
                            SelectorError::Endpoint(
                                "class-level query without sentinel".to_string(),
                            )
                        })?;
                        (
                            Choice::Sentinel { sentinel },
                            query
                                .sentinel_index()
                                .expect("sentinel present")
                                .to_string(),
                        )
                    }
                }
            }
            QueryKind::EntityChoice => {
                let index = query
                    .options
                    .iter()
                    .find(|o| &o.label == gold)
                    .map_or(1, |o| o.index);
                (Choice::Index { index }, index.to_string())
            }
            QueryKind::Assessment => {
                let verdict = if query.options.first().map(|o| &o.label) == Some(gold) {
                    Verdict::Accept
                } else {
                    Verdict::Reject
                };
                let raw = match verdict {
                    Verdict::Accept => "Yes".to_string(),
                    Verdict::Reject => "No".to_string(),
                };
                (Choice::Verdict { verdict }, raw)
            }
        };

        Ok(Selection {
            choice,
            raw_response: raw,
            parse_status: ParseStatus::Exact,
            retries: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::{build_query, QueryOptions, Sentinel};

    fn fixture() -> (Arc<TaxonomyStore>, NodeId) {
        let snapshot = "SC\tPerson\tThing\nSC\tMusician\tPerson\nSC\tPolitician\tPerson\n\
                        TY\tJustinBieber\tMusician\nTY\tJustinTrudeau\tPolitician\n";
        let store = TaxonomyStore::parse_snapshot(snapshot.as_bytes(), "t").unwrap();
        (Arc::new(store), NodeId::new("JustinBieber"))
    }

    fn ctx<'a>(gold: &'a NodeId) -> QueryContext<'a> {
        QueryContext {
            mention_id: "m",
            ordinal: 0,
            gold: Some(gold),
            gold_ancestors: None,
        }
    }

    #[test]
    fn picks_the_ancestor_class() {
        let (store, gold) = fixture();
        let oracle = OracleSelector::new(store);
        let q = build_query(
            QueryKind::ClassChoice,
            "Justin",
            "doc Justin",
            vec![
                (NodeId::new("Politician"), None),
                (NodeId::new("Musician"), None),
            ],
            &QueryOptions::default(),
        );
        let s = oracle.select(&ctx(&gold), &q).unwrap();
        assert_eq!(s.choice, Choice::Index { index: 2 });
    }

    #[test]
    fn no_ancestor_means_sentinel() {
        let (store, gold) = fixture();
        let oracle = OracleSelector::new(store);
        let q = build_query(
            QueryKind::MixedChoice,
            "Justin",
            "doc Justin",
            vec![(NodeId::new("Politician"), None)],
            &QueryOptions::default(),
        );
        let s = oracle.select(&ctx(&gold), &q).unwrap();
        assert_eq!(
            s.choice,
            Choice::Sentinel {
                sentinel: Sentinel::Other
            }
        );
    }

    #[test]
    fn entity_choice_prefers_gold_else_first() {
        let (store, gold) = fixture();
        let oracle = OracleSelector::new(store);
        let q = build_query(
            QueryKind::EntityChoice,
            "Justin",
            "doc Justin",
            vec![
                (NodeId::new("JustinTrudeau"), None),
                (NodeId::new("JustinBieber"), None),
            ],
            &QueryOptions::default(),
        );
        assert_eq!(
            oracle.select(&ctx(&gold), &q).unwrap().choice,
            Choice::Index { index: 2 }
        );
        let q = build_query(
            QueryKind::EntityChoice,
            "Justin",
            "doc Justin",
            vec![
                (NodeId::new("JustinTrudeau"), None),
                (NodeId::new("Someone"), None),
            ],
            &QueryOptions::default(),
        );
        assert_eq!(
            oracle.select(&ctx(&gold), &q).unwrap().choice,
            Choice::Index { index: 1 }
        );
    }

    #[test]
    fn assessment_accepts_only_gold() {
        let (store, gold) = fixture();
        let oracle = OracleSelector::new(store);
        let accept = build_query(
            QueryKind::Assessment,
            "Justin",
            "doc Justin",
            vec![(gold.clone(), None)],
            &QueryOptions::default(),
        );
        assert_eq!(
            oracle.select(&ctx(&gold), &accept).unwrap().choice,
            Choice::Verdict {
                verdict: Verdict::Accept
            }
        );
        let reject = build_query(
            QueryKind::Assessment,
            "Justin",
            "doc Justin",
            vec![(NodeId::new("JustinTrudeau"), None)],
            &QueryOptions::default(),
        );
        assert_eq!(
            oracle.select(&ctx(&gold), &reject).unwrap().choice,
            Choice::Verdict {
                verdict: Verdict::Reject
            }
        );
    }

    #[test]
    fn missing_gold_is_an_error() {
        let (store, _) = fixture();
        let oracle = OracleSelector::new(store);
        let q = build_query(
            QueryKind::EntityChoice,
            "m",
            "doc m",
            vec![(NodeId::new("a"), None)],
            &QueryOptions::default(),
        );
        let ctx = QueryContext::plain("m7", 0);
        assert!(matches!(
            oracle.select(&ctx, &q),
            Err(SelectorError::GoldUnavailable(id)) if id == "m7"
        ));
    }
}
