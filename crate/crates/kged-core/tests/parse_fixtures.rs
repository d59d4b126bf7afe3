//! Response parsing against the hand-written fixture suite, plus the
//! never-panics property on arbitrary input.

use std::path::Path;

use kged_core::selector::{
    build_query, parse_response, Choice, ParseStatus, QueryKind, QueryOptions,
};
use kged_core::NodeId;
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    kind: String,
    options: Vec<String>,
    raw: String,
    expect: Choice,
    status: ParseStatus,
}

fn load_cases() -> Vec<Case> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/parse_responses.jsonl");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| serde_json::from_str(l).expect("valid fixture line"))
        .collect()
}

#[test]
fn fixture_suite_parses_as_expected() {
    let cases = load_cases();
    assert!(
        cases.len() >= 30,
        "expected at least 30 cases, got {}",
        cases.len()
    );
    for case in cases {
        let kind = match case.kind.as_str() {
            "class_choice" => QueryKind::ClassChoice,
            "entity_choice" => QueryKind::EntityChoice,
            "mixed_choice" => QueryKind::MixedChoice,
            "assessment" => QueryKind::Assessment,
            other => panic!("unknown kind {other}"),
        };
        let query = build_query(
            kind,
            "m",
            "document that contains m somewhere",
            case.options
                .iter()
                .map(|o| (NodeId::new(o), None))
                .collect(),
            &QueryOptions::default(),
        );
        let got = parse_response(&case.raw, &query);
        assert_eq!(
            got.choice, case.expect,
            "raw {:?} over {:?} ({})",
            case.raw, case.options, case.kind
        );
        assert_eq!(
            got.parse_status, case.status,
            "status for raw {:?} over {:?}",
            case.raw, case.options
        );
        assert_eq!(got.raw_response, case.raw);
    }
}

proptest! {
    /// Parsing absorbs arbitrary input without panicking, and the result is
    /// always within range.
    #[test]
    fn parse_never_panics(raw in ".*", n_options in 1usize..6, kind_pick in 0u8..4) {
        let kind = match kind_pick {
            0 => QueryKind::ClassChoice,
            1 => QueryKind::EntityChoice,
            2 => QueryKind::MixedChoice,
            _ => QueryKind::Assessment,
        };
        let options = (0..n_options)
            .map(|i| (NodeId::new(format!("Opt{i}")), None))
            .collect();
        let query = build_query(kind, "m", "doc m", options, &QueryOptions::default());
        let selection = parse_response(&raw, &query);
        match selection.choice {
            Choice::Index { index } => prop_assert!((1..=query.options.len()).contains(&index)),
            Choice::Multi { indices } => {
                prop_assert!(!indices.is_empty());
                for i in indices {
                    prop_assert!((1..=query.selectable_count()).contains(&i));
                }
            }
            Choice::Sentinel { .. } => prop_assert!(query.sentinel.is_some()),
            Choice::Verdict { .. } => prop_assert!(kind == QueryKind::Assessment),
        }
    }
}
