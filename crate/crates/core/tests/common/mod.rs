//! Shared fixtures for the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use wepo::pairgen::{step_digest, Split, StepRecord};
use wepo::{DomTree, NodeId};

/// Page used by the eval fixture. Candidates in document order:
/// 0 `a` home, 1 `a` deals (both under nav), 2 `input`, 3 `select`,
/// 4 `option` red, 5 `option` blue, 6 `button` (all under form).
pub const FIXTURE_PAGE: &str = "<div><nav><a href=\"/\">home</a><a href=\"/deals\">deals</a></nav>\
<form><input name=\"q\"><select name=\"s\"><option>red</option><option>blue</option></select>\
<button>go</button></form></div>";

/// Ten outcome classes, each repeated ten times. Columns: truth, predicted
/// output, success, op F1 (None when the truth is CLICK), wrong-element
/// distance (None when the element matches or does not resolve).
pub const CASES: [(&str, &str, bool, Option<f64>, Option<u32>); 10] = [
    ("CLICK [1]", "CLICK [1]", true, None, None),
    // nav siblings: 1 + 1
    ("CLICK [1]", "CLICK [0]", false, None, Some(2)),
    // a under nav vs button under form: 2 + 2
    ("CLICK [6]", "CLICK [0]", false, None, Some(4)),
    ("TYPE [2] [boston]", "TYPE [2] [ Boston ]", true, Some(1.0), None),
    // tokens {type,new,york,city} vs {type,new,york}: P 3/4, R 1
    ("TYPE [2] [new york]", "TYPE [2] [new york city]", false, Some(6.0 / 7.0), None),
    ("TYPE [2] [boston]", "CLICK [2]", false, Some(0.0), None),
    // {select,red} vs {select,blue}: P 1/2, R 1/2
    ("SELECT [3] [blue]", "SELECT [3] [red]", false, Some(0.5), None),
    // option is a child of the select
    ("SELECT [3] [blue]", "SELECT [4] [blue]", false, Some(1.0), Some(1)),
    ("TYPE [2] [boston]", "TYPE 2 boston", false, Some(0.0), None),
    ("CLICK [0]", "CLICK [9]", false, None, None),
];

/// Hand-computed report values for [`eval_fixture`].
pub mod expected {
    /// (A + D) / 100
    pub const SSR: f64 = 0.2;
    /// (1 + 6/7 + 0 + 1/2 + 1 + 0) / 6
    pub const OP_F1: f64 = 47.0 / 84.0;
    /// (10·2 + 10·4 + 10·1) / 30
    pub const MEAN_DISTANCE: f64 = 7.0 / 3.0;
    pub const MISMATCHES: usize = 30;
    pub const UNMATCHED: usize = 10;
    pub const UNPARSEABLE: usize = 10;
    /// classes 0-4 are cross_task, 5-9 cross_website
    pub const CROSS_TASK_SSR: f64 = 0.4;
    pub const CROSS_TASK_F1: f64 = 13.0 / 14.0;
    pub const CROSS_TASK_DISTANCE: f64 = 3.0;
    pub const CROSS_WEBSITE_SSR: f64 = 0.0;
    pub const CROSS_WEBSITE_F1: f64 = 3.0 / 8.0;
    pub const CROSS_WEBSITE_DISTANCE: f64 = 1.0;
    pub const HISTOGRAM: [(u32, usize); 3] = [(1, 10), (2, 10), (4, 10)];
}

/// 100 steps on [`FIXTURE_PAGE`] and one `(step_digest, output)` prediction each.
pub fn eval_fixture() -> (Vec<StepRecord>, Vec<(String, String)>) {
    let mut corpus = Vec::new();
    let mut preds = Vec::new();
    for (c, (truth, pred, ..)) in CASES.iter().enumerate() {
        for i in 0..10 {
            let step = StepRecord {
                intent: format!("fixture case {c} repeat {i}"),
                raw_html: FIXTURE_PAGE.to_string(),
                trajectory: vec![],
                truth: truth.parse().unwrap(),
                split: if c < 5 { Split::CrossTask } else { Split::CrossWebsite },
                task_id: Some(format!("case-{c}")),
            };
            preds.push((step_digest(&step), pred.to_string()));
            corpus.push(step);
        }
    }
    (corpus, preds)
}

/// Undirected BFS path length between two nodes.
pub fn bfs_distance(tree: &DomTree, a: NodeId, b: NodeId) -> u32 {
    let mut dist = vec![u32::MAX; tree.len()];
    let mut q = VecDeque::from([a]);
    dist[a] = 0;
    while let Some(u) = q.pop_front() {
        if u == b {
            return dist[u];
        }
        let node = &tree.nodes()[u];
        for v in node.children.iter().copied().chain(node.parent) {
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    panic!("nodes {a} and {b} are disconnected");
}

/// Undirected BFS distances from `src` to every node.
pub fn bfs_all(tree: &DomTree, src: NodeId) -> Vec<u32> {
    let mut dist = vec![u32::MAX; tree.len()];
    let mut q = VecDeque::from([src]);
    dist[src] = 0;
    while let Some(u) = q.pop_front() {
        let node = &tree.nodes()[u];
        for v in node.children.iter().copied().chain(node.parent) {
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist
}
