//! Element-centric pruning.
//!
//! Each kept candidate contributes the subtree of the highest ancestor that
//! stays within the descendant and walk-length limits. The union of those
//! subtrees, plus the ancestor paths joining them to the root, forms the
//! pruned page.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dom::{CandidateId, DomError, DomTree, NodeId, TreeBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMode {
    /// The ground-truth candidate is always kept.
    Training,
    /// Only external scores decide.
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub k: usize,
    pub max_descendants: usize,
    pub max_depth_up: usize,
    pub mode: PruneMode,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            k: 50,
            max_descendants: 60,
            max_depth_up: 5,
            mode: PruneMode::Training,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<(), PruneError> {
        if self.k == 0 {
            return Err(PruneError::InvalidConfig("k must be at least 1"));
        }
        if self.max_descendants == 0 {
            return Err(PruneError::InvalidConfig("max_descendants must be at least 1"));
        }
        if self.max_depth_up == 0 {
            return Err(PruneError::InvalidConfig("max_depth_up must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PruneError {
    #[error(transparent)]
    Dom(#[from] DomError),
    #[error("invalid prune config: {0}")]
    InvalidConfig(&'static str),
    #[error("training mode requires a ground-truth candidate present in the tree")]
    MissingTruth,
    #[error("tree has no candidate elements")]
    EmptyCandidates,
    #[error("scored candidate {0} is not in the tree")]
    UnknownCandidate(CandidateId),
    #[error("scores line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("scores line {line}: duplicate candidate id {id}")]
    DuplicateId { line: usize, id: CandidateId },
    #[error("reading scores: {0}")]
    Io(String),
}

/// Ranking logits per candidate, e.g. from an external ranking model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores(pub BTreeMap<CandidateId, f64>);

impl CandidateScores {
    pub fn get(&self, id: CandidateId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, tree: &DomTree) -> Result<(), PruneError> {
        let present: BTreeSet<CandidateId> = tree.candidates().map(|(c, _)| c).collect();
        match self.0.keys().find(|id| !present.contains(id)) {
            Some(&id) => Err(PruneError::UnknownCandidate(id)),
            None => Ok(()),
        }
    }
}

/// Parses `candidate_id<TAB>logit` lines. Blank lines are skipped.
pub fn parse_scores(text: &str) -> Result<CandidateScores, PruneError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, logit) = line.split_once('\t').ok_or_else(|| PruneError::Parse {
            line: line_no,
            msg: "expected candidate_id<TAB>logit".into(),
        })?;
        let id: CandidateId = id.trim().parse().map_err(|e| PruneError::Parse {
            line: line_no,
            msg: format!("bad candidate id {id:?}: {e}"),
        })?;
        let logit: f64 = logit.trim().parse().map_err(|e| PruneError::Parse {
            line: line_no,
            msg: format!("bad logit {logit:?}: {e}"),
        })?;
        if !logit.is_finite() {
            return Err(PruneError::Parse {
                line: line_no,
                msg: "logit must be finite".into(),
            });
        }
        if map.insert(id, logit).is_some() {
            return Err(PruneError::DuplicateId { line: line_no, id });
        }
    }
    Ok(CandidateScores(map))
}

pub fn load_scores(path: &Path) -> Result<CandidateScores, PruneError> {
    let text = std::fs::read_to_string(path).map_err(|e| PruneError::Io(format!("{}: {e}", path.display())))?;
    parse_scores(&text)
}

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
}

/// Fallback ranking when no external scores exist: the number of distinct
/// intent words found in a candidate's subtree text and attribute values.
pub fn lexical_scores(tree: &DomTree, intent: &str) -> CandidateScores {
    let intent_words: BTreeSet<String> = words(intent).collect();
    let mut map = BTreeMap::new();
    for (cid, node) in tree.candidates() {
        let mut bag: BTreeSet<String> = words(&tree.subtree_text(node).unwrap_or_default()).collect();
        for (_, v) in &tree.nodes()[node].attributes {
            bag.extend(words(v));
        }
        let overlap = bag.intersection(&intent_words).count();
        map.insert(cid, overlap as f64);
    }
    CandidateScores(map)
}

/// Root of the snippet around `center`: walk up while the parent's subtree
/// has at most `max_descendants` nodes and at most `max_depth_up` steps were taken.
pub fn snippet_root(tree: &DomTree, center: NodeId, cfg: &PruneConfig) -> Result<NodeId, PruneError> {
    let mut cur = tree.node(center)?.node_id;
    let mut steps = 0;
    while steps < cfg.max_depth_up {
        let Some(parent) = tree.nodes()[cur].parent else {
            break;
        };
        if tree.subtree_size(parent)? > cfg.max_descendants {
            break;
        }
        cur = parent;
        steps += 1;
    }
    Ok(cur)
}

/// The subtree around `center` as a standalone tree.
pub fn isolate_snippet(tree: &DomTree, center: NodeId, cfg: &PruneConfig) -> Result<DomTree, PruneError> {
    let root = snippet_root(tree, center, cfg)?;
    let range = tree.subtree_range(root)?;
    let mut b = TreeBuilder::new();
    for n in &tree.nodes()[range.clone()] {
        let parent = if n.node_id == root { None } else { n.parent.map(|p| p - range.start) };
        let id = b.add(parent, &n.tag);
        for (k, v) in &n.attributes {
            b.push_attr(id, k, v);
        }
        b.set_text(id, &n.text);
        b.set_candidate(id, n.candidate_id);
    }
    Ok(b.build(0))
}

/// Candidates ordered by descending score, unscored candidates last, ties by
/// lower id.
pub fn rank_candidates(tree: &DomTree, scores: &CandidateScores) -> Vec<CandidateId> {
    let mut ids: Vec<CandidateId> = tree.candidates().map(|(c, _)| c).collect();
    ids.sort_by(|&a, &b| {
        let sa = scores.get(a).unwrap_or(f64::NEG_INFINITY);
        let sb = scores.get(b).unwrap_or(f64::NEG_INFINITY);
        sb.total_cmp(&sa).then(a.cmp(&b))
    });
    ids
}

/// The `k` candidates kept by pruning, in rank order. In training mode the
/// truth displaces the lowest-ranked selection when it would not make the cut.
pub fn select_top_k(
    tree: &DomTree,
    scores: &CandidateScores,
    truth: Option<CandidateId>,
    cfg: &PruneConfig,
) -> Result<Vec<CandidateId>, PruneError> {
    cfg.validate()?;
    scores.validate(tree)?;
    let ranked = rank_candidates(tree, scores);
    if ranked.is_empty() {
        return Err(PruneError::EmptyCandidates);
    }
    let truth = match cfg.mode {
        PruneMode::Training => {
            let t = truth.ok_or(PruneError::MissingTruth)?;
            if !ranked.contains(&t) {
                return Err(PruneError::MissingTruth);
            }
            Some(t)
        }
        PruneMode::Inference => None,
    };
    let mut kept: Vec<CandidateId> = ranked.iter().copied().take(cfg.k).collect();
    if let Some(t) = truth {
        if !kept.contains(&t) {
            kept.pop();
            kept.push(t);
        }
    }
    Ok(kept)
}

/// Prunes `tree` to the snippets of its top-k candidates. When every
/// candidate survives the tree is returned unchanged.
pub fn prune_to_k(
    tree: &DomTree,
    scores: &CandidateScores,
    truth: Option<CandidateId>,
    cfg: &PruneConfig,
) -> Result<DomTree, PruneError> {
    let kept = select_top_k(tree, scores, truth, cfg)?;
    if kept.len() == tree.candidate_count() {
        return Ok(tree.clone());
    }
    let kept_set: BTreeSet<CandidateId> = kept.iter().copied().collect();
    let mut keep = vec![false; tree.len()];
    for (cid, node) in tree.candidates() {
        if !kept_set.contains(&cid) {
            continue;
        }
        let root = snippet_root(tree, node, cfg)?;
        for k in tree.subtree_range(root)? {
            keep[k] = true;
        }
        for a in tree.ancestors(root)? {
            if keep[a] {
                break;
            }
            keep[a] = true;
        }
    }
    Ok(tree.retain(&keep, |c| kept_set.contains(&c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{assign_candidate_ids, parse_html, InteractableSet};

    fn cfg(k: usize, max_descendants: usize) -> PruneConfig {
        PruneConfig {
            k,
            max_descendants,
            max_depth_up: 5,
            mode: PruneMode::Training,
        }
    }

    fn binary_tree(depth: u32) -> String {
        if depth == 0 {
            return "<a>leaf</a>".into();
        }
        let sub = binary_tree(depth - 1);
        format!("<div>{sub}{sub}</div>")
    }

    #[test]
    fn snippet_at_root_stays_root() {
        let t = parse_html("<div><p>a</p></div>").unwrap();
        let s = isolate_snippet(&t, 0, &cfg(1, 100)).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn snippet_threshold_hit_at_parent() {
        let t = parse_html("<div><section><a>x</a><a>y</a></section></div>").unwrap();
        let s = isolate_snippet(&t, 2, &cfg(1, 1)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.node(0).unwrap().text, "x");
    }

    #[test]
    fn snippet_in_balanced_binary_tree() {
        // Exhaustive count: a node h levels above a leaf roots 2^(h+1) - 1 nodes.
        let sizes: Vec<usize> = (0..=6).map(|h| (1usize << (h + 1)) - 1).collect();
        let expected_levels = sizes.iter().rposition(|&s| s <= 10).unwrap();
        assert_eq!(expected_levels, 2);

        let t = parse_html(&binary_tree(6)).unwrap();
        let leaf = t.nodes().iter().find(|n| n.children.is_empty()).unwrap().node_id;
        let c = cfg(1, 10);
        let root = snippet_root(&t, leaf, &c).unwrap();
        assert_eq!(t.depth(leaf).unwrap() - t.depth(root).unwrap(), expected_levels as u32);
        assert_eq!(isolate_snippet(&t, leaf, &c).unwrap().len(), 7);
    }

    #[test]
    fn depth_cap_limits_walk() {
        let t = parse_html("<a1><a2><a3><a4><b>x</b></a4></a3></a2></a1>").unwrap();
        let c = PruneConfig {
            max_depth_up: 2,
            ..cfg(1, 100)
        };
        assert_eq!(snippet_root(&t, 4, &c).unwrap(), 2);
    }

    fn page(n: usize) -> DomTree {
        let mut html = String::from("<body>");
        for i in 0..n {
            html.push_str(&format!("<div><span>item {i}</span><button>buy {i}</button></div>"));
        }
        html.push_str("</body>");
        assign_candidate_ids(&parse_html(&html).unwrap(), &InteractableSet::default())
    }

    #[test]
    fn k_covering_all_returns_input() {
        let t = page(4);
        let out = prune_to_k(&t, &CandidateScores::default(), Some(2), &cfg(10, 3)).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn forced_truth_with_k_one() {
        let t = page(6);
        let scores = CandidateScores((0..6).map(|i| (i, 10.0 - i as f64)).collect());
        let out = prune_to_k(&t, &scores, Some(5), &cfg(1, 3)).unwrap();
        assert_eq!(out.candidates().map(|(c, _)| c).collect::<Vec<_>>(), vec![5]);
        let node = out.node_of_candidate(5).unwrap();
        assert_eq!(out.subtree_text(node).unwrap(), "buy 5");
        assert!(out.serialize().contains("item 5"));
        assert!(!out.serialize().contains("item 4"));
    }

    #[test]
    fn inference_mode_ignores_truth() {
        let t = page(6);
        let scores = CandidateScores((0..6).map(|i| (i, i as f64)).collect());
        let c = PruneConfig {
            mode: PruneMode::Inference,
            ..cfg(2, 3)
        };
        let out = prune_to_k(&t, &scores, None, &c).unwrap();
        assert_eq!(out.candidates().map(|(c, _)| c).collect::<Vec<_>>(), vec![4, 5]);
    }

    #[test]
    fn ties_break_by_lower_id() {
        let t = page(5);
        let out = select_top_k(&t, &CandidateScores::default(), Some(0), &cfg(3, 3)).unwrap();
        assert_eq!(out, vec![0, 1, 2]);
    }

    #[test]
    fn error_paths() {
        let t = page(3);
        let none = CandidateScores::default();
        assert_eq!(prune_to_k(&t, &none, None, &cfg(1, 3)), Err(PruneError::MissingTruth));
        assert_eq!(prune_to_k(&t, &none, Some(9), &cfg(1, 3)), Err(PruneError::MissingTruth));
        let bad = CandidateScores([(42, 1.0)].into_iter().collect());
        assert_eq!(prune_to_k(&t, &bad, Some(0), &cfg(1, 3)), Err(PruneError::UnknownCandidate(42)));
        let empty = parse_html("<div><p>x</p></div>").unwrap();
        assert_eq!(prune_to_k(&empty, &none, Some(0), &cfg(1, 3)), Err(PruneError::EmptyCandidates));
        assert!(matches!(prune_to_k(&t, &none, Some(0), &cfg(0, 3)), Err(PruneError::InvalidConfig(_))));
    }

    #[test]
    fn scores_file_format() {
        let s = parse_scores("0\t1.5\n1\t-0.2").unwrap();
        assert_eq!(s.0, [(0, 1.5), (1, -0.2)].into_iter().collect());
        assert!(parse_scores("").unwrap().is_empty());
        assert_eq!(
            parse_scores("3\t1\n4\t2\n3\t0.5\n"),
            Err(PruneError::DuplicateId { line: 3, id: 3 })
        );
        assert!(matches!(parse_scores("1\t2\nx\t1"), Err(PruneError::Parse { line: 2, .. })));
        assert!(matches!(parse_scores("1 2"), Err(PruneError::Parse { line: 1, .. })));
    }

    #[test]
    fn load_scores_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        std::fs::write(&p, "2\t0.25\n").unwrap();
        assert_eq!(load_scores(&p).unwrap().get(2), Some(0.25));
        assert!(matches!(load_scores(&dir.path().join("nope")), Err(PruneError::Io(_))));
    }

    #[test]
    fn lexical_fallback_prefers_overlap() {
        let t = page(3);
        let s = lexical_scores(&t, "please buy 2 now");
        let ranked = rank_candidates(&t, &s);
        assert_eq!(ranked[0], 2);
    }
}
