mod common;

use common::expected;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wepo::eval::{
    aggregate_records, element_distance, operation_f1, step_operation_f1, step_success, Prediction,
};
use wepo::pairgen::{write_corpus, Split, StepRecord};
use wepo::stats::{check_click_ratio, compute_stats, compute_stats_records, ClickRatio};
use wepo::synthetic::random_tree_with_candidates;
use wepo::{Action, OpKind};

fn fixture_predictions() -> (Vec<StepRecord>, Vec<Prediction>) {
    let (corpus, raw) = common::eval_fixture();
    let preds = raw.iter().map(|(d, a)| Prediction::from_output(d.clone(), a)).collect();
    (corpus, preds)
}

#[test]
fn fixture_rows_match_hand_labels() {
    let (corpus, preds) = fixture_predictions();
    for (i, (step, pred)) in corpus.iter().zip(&preds).enumerate() {
        let (_, _, success, f1, _) = common::CASES[i / 10];
        assert_eq!(step_success(pred.predicted.as_ref(), &step.truth), success, "row {i}");
        if let Some(f1) = f1 {
            assert!((step_operation_f1(pred.predicted.as_ref(), &step.truth) - f1).abs() < 1e-12);
        }
    }
}

#[test]
fn fixture_report_matches_hand_computation() {
    let (corpus, preds) = fixture_predictions();
    let r = aggregate_records(&preds, &corpus).unwrap();
    assert!((r.ssr - expected::SSR).abs() < 1e-12);
    assert!((r.op_f1.unwrap() - expected::OP_F1).abs() < 1e-9);
    assert!((r.mean_element_distance - expected::MEAN_DISTANCE).abs() < 1e-12);
    assert_eq!(r.overall.element_mismatches, expected::MISMATCHES);
    assert_eq!(r.overall.unmatched_elements, expected::UNMATCHED);
    assert_eq!(r.overall.unparseable, expected::UNPARSEABLE);
    assert_eq!(r.overall.distance_histogram, expected::HISTOGRAM.into_iter().collect());

    let ct = &r.per_split["cross_task"];
    assert!((ct.ssr - expected::CROSS_TASK_SSR).abs() < 1e-12);
    assert!((ct.op_f1.unwrap() - expected::CROSS_TASK_F1).abs() < 1e-9);
    assert!((ct.mean_element_distance - expected::CROSS_TASK_DISTANCE).abs() < 1e-12);
    let cw = &r.per_split["cross_website"];
    assert!((cw.ssr - expected::CROSS_WEBSITE_SSR).abs() < 1e-12);
    assert!((cw.op_f1.unwrap() - expected::CROSS_WEBSITE_F1).abs() < 1e-9);
    assert!((cw.mean_element_distance - expected::CROSS_WEBSITE_DISTANCE).abs() < 1e-12);

    let predicted: Vec<Option<Action>> = preds.into_iter().map(|p| p.predicted).collect();
    let truths: Vec<Action> = corpus.iter().map(|s| s.truth.clone()).collect();
    assert!((operation_f1(&predicted, &truths).unwrap() - expected::OP_F1).abs() < 1e-9);
}

#[test]
fn element_distance_matches_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let tree = random_tree_with_candidates(&mut rng, 600, 150);
    for _ in 0..1000 {
        let (a, b) = (rng.gen_range(0..150), rng.gen_range(0..150));
        let (na, nb) = (tree.node_of_candidate(a).unwrap(), tree.node_of_candidate(b).unwrap());
        assert_eq!(element_distance(&tree, a, b).unwrap(), common::bfs_distance(&tree, na, nb));
    }
}

#[test]
fn constructed_five_one_one_corpus() {
    let ops = [OpKind::Click, OpKind::Click, OpKind::Type, OpKind::Click, OpKind::Select, OpKind::Click, OpKind::Click];
    let corpus: Vec<StepRecord> = (0..500)
        .map(|i| {
            let truth = match ops[i % 7] {
                OpKind::Click => Action::click(0),
                OpKind::Type => Action::type_text(0, "v"),
                OpKind::Select => Action::select(0, "v"),
            };
            StepRecord {
                intent: format!("Book the {} flight", ["cheap", "early", "late"][i % 3]),
                raw_html: "<a>x</a> ".repeat(i % 9 + 1),
                trajectory: vec![],
                truth,
                split: Split::Train,
                task_id: Some(format!("task{}", i / 4)),
            }
        })
        .collect();
    // 500 = 71 full cycles + 3 extra steps (CLICK, CLICK, TYPE)
    let (click, typ, select) = (71 * 5 + 2, 71 + 1, 71);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    write_corpus(&corpus, &path).unwrap();
    let s = compute_stats(&path).unwrap();
    assert_eq!(s.action_proportions[&OpKind::Click], click as f64 / 500.0);
    assert_eq!(s.action_proportions[&OpKind::Type], typ as f64 / 500.0);
    assert_eq!(s.action_proportions[&OpKind::Select], select as f64 / 500.0);
    assert!((s.action_proportions.values().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(s.token_length_histogram.values().sum::<usize>(), 500);
    assert_eq!(s.trajectory_length_histogram, [(4, 125)].into_iter().collect());
    assert_eq!(s.word_frequencies["flight"], 500);
    assert_eq!(s.word_frequencies["book"], 500);
    assert!(!s.word_frequencies.contains_key("the"));
    let mean_tokens = (0..500).map(|i| (i % 9 + 1) as f64).sum::<f64>() / 500.0;
    assert!((s.mean_token_length - mean_tokens).abs() < 1e-12);
    match check_click_ratio(&s) {
        ClickRatio::OutOfRange { ratio } => assert!((ratio - click as f64 / (typ + select) as f64).abs() < 1e-12),
        other => panic!("{other:?}"),
    }

    let mut shuffled = corpus.clone();
    shuffled.reverse();
    shuffled.swap(3, 400);
    assert_eq!(compute_stats_records(&shuffled), s);
}
