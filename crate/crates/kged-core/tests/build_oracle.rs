//! Subgraph construction against an independent four-step re-derivation.
//!
//! The oracle re-runs attach, ancestor-filter, reduction, entity
//! normalization, and chain collapse on raw edge-pair sets, with the
//! collapse deliberately ordered opposite to the implementation — matching
//! output over a thousand random stores also demonstrates the collapse is
//! order independent.

use std::collections::BTreeSet;

use kged_core::subgraph::{CandidateDag, NodeKind};
use kged_core::testkit;
use kged_core::NodeId;
use rand::rngs::StdRng;
use rand::SeedableRng;

#[test]
fn build_matches_brute_pipeline() {
    let cases = testkit::check_build_pipeline(23, 1000).unwrap();
    assert_eq!(cases, 1000);
}

#[test]
fn built_graphs_always_satisfy_invariants() {
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..300 {
        let spec = testkit::random_store(&mut rng, 25, 10, true);
        let candidates = testkit::random_candidates(&mut rng, &spec, 10);
        let dag = CandidateDag::build_subgraph(&spec.store, &candidates).unwrap();

        // Single source, and it is the root.
        for node in dag.nodes() {
            let preds = dag.predecessors(node).unwrap();
            if preds.is_empty() {
                assert!(node.is_root(), "non-root source {node}");
            }
        }
        // Every sink is a candidate entity; leaves follow candidate order.
        let leaves = dag.leaves();
        let leaf_set: BTreeSet<&NodeId> = leaves.iter().collect();
        for node in dag.nodes() {
            let succs = dag.successors(node).unwrap();
            if succs.is_empty() {
                assert!(leaf_set.contains(node));
                assert_eq!(dag.kind(node), Some(NodeKind::Entity));
                assert!(candidates.contains(node));
            }
        }
        let expected_order: Vec<&NodeId> =
            candidates.iter().filter(|c| leaf_set.contains(c)).collect();
        assert_eq!(leaves.iter().collect::<Vec<_>>(), expected_order);

        // Candidates are exactly the leaves.
        assert_eq!(leaves.len(), candidates.len());

        // After the collapse, no non-root class keeps a single class child.
        for node in dag.nodes() {
            if node.is_root() || dag.kind(node) == Some(NodeKind::Entity) {
                continue;
            }
            let succs = dag.successors(node).unwrap();
            if succs.len() == 1 {
                let only = succs.iter().next().unwrap();
                assert_eq!(
                    dag.kind(only),
                    Some(NodeKind::Entity),
                    "{node} kept a single class successor {only}"
                );
            }
        }
    }
}

#[test]
fn mutually_typed_class_entities_are_rejected() {
    // Two entity-as-class records typed under each other make the combined
    // typing graph cyclic; construction must refuse rather than loop.
    let snapshot = "EC\tA\nEC\tB\nSC\tA\tThing\nSC\tB\tThing\nTY\tA\tB\nTY\tB\tA\n";
    let store = kged_core::TaxonomyStore::parse_snapshot(snapshot.as_bytes(), "cyclic").unwrap();
    let candidates = vec![NodeId::new("A"), NodeId::new("B")];
    assert!(matches!(
        CandidateDag::build_subgraph(&store, &candidates),
        Err(kged_core::subgraph::GraphError::CyclicInput(_))
    ));
}
