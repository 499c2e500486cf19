use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use attrib_core::corpus::{apply_filters, load_dataset, sample_examples, DatasetFormat, FilterConfig};
use attrib_core::gridlab::{load_run, run_grid, save_run, GridConfig, GridDeps, Scorers};
use attrib_core::modelgw::{MockGenerator, MockSensibleness, ModelSize, OverlapNli, SensiblenessScorer};
use attrib_core::promptkit::PromptSpec;
use attrib_core::retrieval::{build_index, documents_from_examples, recall_at_k, DEFAULT_B, DEFAULT_K1};
use proptest::prelude::*;
use serde_json::json;

fn record(id: &str, turns: &[(u32, &str)], answer: &str, evidence: &str) -> String {
    let turns: Vec<_> = turns.iter().map(|(s, t)| json!({"speaker": s, "text": t})).collect();
    json!({"id": id, "turns": turns, "answer": answer, "answer_url": "https://example.org", "evidence": evidence})
        .to_string()
}

const EVIDENCE: &str = "The old mill was built in 1820 by the river. It ground wheat for the village.";
const ANSWER: &str = "built in 1820";

/// One survivor plus one example per filter that only that filter removes.
fn fixture(path: &Path) {
    let ok = [(0, "Tell me about the mill."), (1, "It is by the river."), (0, "When was the old mill built?")];
    let lines = [
        record("keep", &ok, ANSWER, EVIDENCE),
        record("no_history", &[(0, "When was the old mill built?")], ANSWER, EVIDENCE),
        record(
            "odd",
            &[(0, "Tell me about the mill."), (1, "It is old."), (0, "Really?"), (1, "When was the old mill built?")],
            ANSWER,
            EVIDENCE,
        ),
        record(
            "repeat",
            &[(0, "Tell me about the mill."), (0, "And the river."), (1, "When was the old mill built?")],
            ANSWER,
            EVIDENCE,
        ),
        record("one_word", &ok, "1820", EVIDENCE),
        record("long", &ok, ANSWER, &format!("{EVIDENCE} {}", "More words here. ".repeat(100))),
        record(
            "vague",
            &[(0, "Tell me about the mill."), (1, "It is by the river."), (0, "What else?")],
            ANSWER,
            EVIDENCE,
        ),
        record(
            "article",
            &[
                (0, "Tell me about the mill."),
                (1, "It is by the river."),
                (0, "What does the article say about the mill?"),
            ],
            ANSWER,
            EVIDENCE,
        ),
        record("no_match", &ok, "built by monks", EVIDENCE),
        "{not json".to_string(),
    ];
    std::fs::write(path, lines.join("\n")).unwrap();
}

#[test]
fn each_filter_removes_its_example() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    fixture(&path);
    let loaded = load_dataset(&path, DatasetFormat::Jsonl).unwrap();
    assert_eq!(loaded.examples.len(), 9);
    assert_eq!(loaded.rejects.len(), 1);

    let (kept, report) = apply_filters(&loaded.examples, &FilterConfig::default()).unwrap();
    assert_eq!(kept.iter().map(|e| e.id.as_str()).collect::<Vec<_>>(), ["keep"]);
    let counts: Vec<usize> = report.stages.iter().map(|s| s.remaining_count).collect();
    assert_eq!(counts, [8, 7, 6, 5, 4, 3, 2, 1]);
    assert_eq!(report.final_count(), 1);
    assert!((report.stages[0].remaining_fraction - 8.0 / 9.0).abs() < 1e-12);

    // each filter alone removes only its own example
    for stage in &report.stages {
        let only = FilterConfig::with_filter_names(&[stage.filter.as_str()]).unwrap();
        let (kept, _) = apply_filters(&loaded.examples, &only).unwrap();
        assert_eq!(kept.len(), 8, "{}", stage.filter);
    }
}

fn mock_examples(n: usize) -> Vec<attrib_core::corpus::Example> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let lines: Vec<String> = (0..n)
        .map(|i| {
            record(
                &format!("m{i:02}"),
                &[
                    (0, &format!("Tell me about bridge {i}.")),
                    (1, "It crosses a river."),
                    (0, &format!("How long is bridge {i}?")),
                ],
                &format!("bridge {i} is {} meters long", 100 + i),
                &format!(
                    "The bridge {i} opened long ago. The bridge {i} is {} meters long. Cars cross it daily.",
                    100 + i
                ),
            )
        })
        .collect();
    std::fs::write(&path, lines.join("\n")).unwrap();
    load_dataset(&path, DatasetFormat::Jsonl).unwrap().examples
}

#[test]
fn mock_grid_is_deterministic_and_round_trips() {
    std::env::set_var("SOURCE_DATE_EPOCH", "1700000000");
    let examples = mock_examples(8);
    let index = build_index(documents_from_examples(&examples), DEFAULT_K1, DEFAULT_B).unwrap();
    assert_eq!(recall_at_k(&examples, &index, 1).unwrap(), 1.0);

    let generator = MockGenerator::new();
    let sens = SensiblenessScorer::new(Arc::new(MockSensibleness));
    let specs = ["golden", "top2", "no-evidence"].map(|l| PromptSpec::from_catalog(l).unwrap()).to_vec();
    let config = GridConfig::new(vec![ModelSize::S, ModelSize::L], vec![0.0, 1.0], specs, 9);
    let run = |jobs| {
        let deps = GridDeps {
            examples: &examples,
            index: &index,
            scorers: Scorers { generator: &generator, nli: &OverlapNli, sensibleness: &sens },
            backends: BTreeMap::new(),
            jobs,
        };
        run_grid(&config, &deps).unwrap()
    };
    let (one, four) = (run(1), run(4));
    assert!(one.incomplete_cells.is_empty());
    assert_eq!(one.points.len(), 12);
    assert_eq!(one.archive.responses.len(), 12 * 8);
    assert_eq!(one.points, four.points);

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    save_run(&one.archive, &a).unwrap();
    save_run(&four.archive, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let back = load_run(&a).unwrap();
    assert_eq!(back.points().unwrap(), one.points);
}

proptest! {
    #[test]
    fn sampling_is_a_seeded_ordered_subset(n in 0usize..=12, seed in any::<u64>()) {
        let all = mock_examples(12);
        let a = sample_examples(&all, n, seed).unwrap();
        let b = sample_examples(&all, n, seed).unwrap();
        prop_assert_eq!(a.len(), n);
        let ids: Vec<&str> = a.iter().map(|e| e.id.as_str()).collect();
        prop_assert_eq!(&ids, &b.iter().map(|e| e.id.as_str()).collect::<Vec<_>>());
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(sample_examples(&all, 13, seed).is_err());
    }
}
