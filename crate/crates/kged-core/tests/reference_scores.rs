//! The bundled table of published scores must be internally consistent:
//! for every row, the reported %Gold has to match 100 * F1 / GoldF1 within
//! the slack that one-decimal rounding of all three numbers can introduce.

use std::path::Path;

use kged_core::evaluation::pct_gold;

struct Row {
    system: String,
    dataset: String,
    f1: f64,
    gold_f1: f64,
    pct_gold: f64,
}

fn load_rows() -> Vec<Row> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference_scores.tsv");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("system\t") && !l.trim().is_empty())
        .map(|l| {
            let fields: Vec<&str> = l.split('\t').collect();
            assert_eq!(fields.len(), 5, "bad row: {l}");
            Row {
                system: fields[0].to_string(),
                dataset: fields[1].to_string(),
                f1: fields[2].parse().unwrap(),
                gold_f1: fields[3].parse().unwrap(),
                pct_gold: fields[4].parse().unwrap(),
            }
        })
        .collect()
}

#[test]
fn reported_percentages_are_consistent() {
    let rows = load_rows();
    assert_eq!(rows.len(), 50, "expected 5 systems x 10 datasets");
    let mut worst: f64 = 0.0;
    for row in &rows {
        let recomputed = pct_gold(row.f1, row.gold_f1).unwrap();
        let diff = (recomputed - row.pct_gold).abs();
        assert!(
            diff <= 0.3,
            "{} / {}: recomputed {recomputed:.2}, reported {}",
            row.system,
            row.dataset,
            row.pct_gold
        );
        worst = worst.max(diff);
    }
    assert!(worst > 0.0, "rows should show some rounding jitter");
}

#[test]
fn table_covers_every_system_and_dataset() {
    let rows = load_rows();
    let systems: std::collections::BTreeSet<&str> =
        rows.iter().map(|r| r.system.as_str()).collect();
    let datasets: std::collections::BTreeSet<&str> =
        rows.iter().map(|r| r.dataset.as_str()).collect();
    assert_eq!(systems.len(), 5);
    assert_eq!(datasets.len(), 10);
}
