//! Taxonomy properties: ancestor computation against plain reachability,
//! root reachability of every class, snapshot round-trips, and the bundled
//! sample snapshot against its precomputed sidecar plus an independent
//! raw-text statistics walker.

use std::collections::BTreeSet;
use std::path::Path;

use kged_core::testkit;
use kged_core::{NodeId, TaxonomyStore};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn ancestors_match_brute_reachability() {
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..200 {
        let spec = testkit::random_store(&mut rng, 50, 5, true);
        let edges: Vec<(NodeId, NodeId)> = spec
            .store
            .subclass_edges()
            .map(|(c, p)| (c.clone(), p.clone()))
            .collect();
        for class in spec.store.classes() {
            let got = spec.store.ancestors(class).unwrap();
            let want = testkit::brute_ancestors(&edges, class);
            assert_eq!(got, want, "ancestors of {class} diverge");
        }
    }
}

#[test]
fn every_class_reaches_the_root() {
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..200 {
        let spec = testkit::random_store(&mut rng, 50, 5, true);
        let root = NodeId::root();
        for class in spec.store.classes() {
            if class.is_root() {
                continue;
            }
            let ancestors = spec.store.ancestors(class).unwrap();
            assert!(ancestors.contains(&root), "{class} cannot reach the root");
        }
    }
}

#[test]
fn snapshot_round_trips_for_random_stores() {
    let mut rng = StdRng::seed_from_u64(29);
    for _ in 0..100 {
        let spec = testkit::random_store(&mut rng, 30, 15, true);
        let mut buf = Vec::new();
        spec.store.write_snapshot(&mut buf).unwrap();
        let reloaded = TaxonomyStore::parse_snapshot(buf.as_slice(), "generated").unwrap();
        assert_eq!(spec.store, reloaded);
    }
}

#[test]
fn sample_snapshot_matches_sidecar_and_raw_walk() {
    let path = fixture("sample_snapshot.tsv");
    let store = TaxonomyStore::load_snapshot(&path).unwrap();
    let got = store.compute_stats();

    // Frozen sidecar values, precomputed when the fixture was authored.
    let sidecar: kged_core::SnapshotStats = serde_json::from_str(
        &std::fs::read_to_string(fixture("sample_snapshot.stats.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(got.instance_count, sidecar.instance_count);
    assert_eq!(got.class_count, sidecar.class_count);
    assert!((got.avg_tree_depth - sidecar.avg_tree_depth).abs() < 1e-9);
    assert!((got.avg_branching_factor - sidecar.avg_branching_factor).abs() < 1e-9);

    // Independent recomputation straight from the raw file.
    let raw = std::fs::read_to_string(&path).unwrap();
    let oracle = testkit::raw_snapshot_stats(&raw);
    assert_eq!(got.instance_count, oracle.instance_count);
    assert_eq!(got.class_count, oracle.class_count);
    assert!((got.avg_tree_depth - oracle.avg_tree_depth).abs() < 1e-9);
    assert!((got.avg_branching_factor - oracle.avg_branching_factor).abs() < 1e-9);
}

#[test]
fn sample_snapshot_round_trips() {
    let store = TaxonomyStore::load_snapshot(fixture("sample_snapshot.tsv")).unwrap();
    let mut buf = Vec::new();
    store.write_snapshot(&mut buf).unwrap();
    let reloaded = TaxonomyStore::parse_snapshot(buf.as_slice(), store.source_name()).unwrap();
    assert_eq!(store, reloaded);
}

#[test]
fn multi_perspective_entity_has_both_branches() {
    // The sample annotates Barcelona as both a place and an organization,
    // the way richer KGs distinguish a city from its football club.
    let store = TaxonomyStore::load_snapshot(fixture("sample_snapshot.tsv")).unwrap();
    let classes = store.classes_of(&NodeId::new("Barcelona"));
    let place = NodeId::new("Place");
    let organization = NodeId::new("Organization");
    let reaches =
        |class: &NodeId, target: &NodeId| store.ancestors(class).unwrap().contains(target);
    assert!(classes.iter().any(|c| reaches(c, &place)));
    assert!(classes.iter().any(|c| reaches(c, &organization)));
}

#[test]
fn entity_as_class_chain_loads() {
    let store = TaxonomyStore::load_snapshot(fixture("sample_snapshot.tsv")).unwrap();
    let governor = NodeId::new("Governor");
    assert!(store.is_entity_as_class(&governor));
    assert!(store.is_class(&governor));
    assert_eq!(
        store.classes_of(&NodeId::new("GovernorOfCalifornia")),
        BTreeSet::from([governor])
    );
}
