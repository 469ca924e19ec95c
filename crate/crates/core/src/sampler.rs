//! Negative action sampling.
//!
//! Negative elements come from the candidate pool of the pruned page, either
//! the ones structurally closest to the ground-truth element (step distance
//! through their lowest common ancestor) or a uniform random draw. Each
//! negative then gets an operation from [`negative_op`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, OpKind};
use crate::dom::{CandidateId, DomError, DomTree};

pub const DEFAULT_REPLACE_THRESHOLD: f64 = 0.33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Distance,
    Random,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Distance => "distance",
            Strategy::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Negatives per positive.
    pub n: usize,
    pub strategy: Strategy,
    /// Probability of turning a TYPE/SELECT negative into CLICK.
    pub replace_threshold: f64,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n: 3,
            strategy: Strategy::Distance,
            replace_threshold: DEFAULT_REPLACE_THRESHOLD,
            seed: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.n == 0 {
            return Err(SampleError::InvalidConfig("n must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.replace_threshold) {
            return Err(SampleError::InvalidConfig("replace_threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SampleError {
    #[error(transparent)]
    Dom(#[from] DomError),
    #[error("invalid sample config: {0}")]
    InvalidConfig(&'static str),
    #[error("candidate {0} is not in the tree")]
    UnknownCandidate(CandidateId),
    #[error("no candidates besides the ground truth")]
    NoCandidates,
    #[error("ran out of uniform draws")]
    EpsilonExhausted,
}

/// A sampled negative element and its step distance to the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeElement {
    pub element: CandidateId,
    pub distance: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeAction {
    pub action: Action,
    /// Position among this step's negatives, starting at 0.
    pub rank: usize,
    pub distance: u32,
}

/// Mixes a global seed with a step index; used to give every step its own
/// independent sampling stream.
pub fn step_seed(global_seed: u64, step_index: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = global_seed ^ step_index.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Every non-truth candidate with its step distance to the truth, in
/// candidate document order.
pub fn candidate_distances(tree: &DomTree, truth: CandidateId) -> Result<Vec<NegativeElement>, SampleError> {
    let truth_node = tree
        .node_of_candidate(truth)
        .ok_or(SampleError::UnknownCandidate(truth))?;
    tree.candidates()
        .filter(|&(c, _)| c != truth)
        .map(|(c, n)| {
            Ok(NegativeElement {
                element: c,
                distance: tree.step_distance(truth_node, n)?,
            })
        })
        .collect()
}

fn sample_elements_with<R: Rng>(
    tree: &DomTree,
    truth: CandidateId,
    cfg: &SampleConfig,
    rng: &mut R,
) -> Result<Vec<NegativeElement>, SampleError> {
    cfg.validate()?;
    let mut pool = candidate_distances(tree, truth)?;
    if pool.is_empty() {
        return Err(SampleError::NoCandidates);
    }
    let take = cfg.n.min(pool.len());
    match cfg.strategy {
        Strategy::Distance => {
            pool.sort_by_key(|e| (e.distance, e.element));
            pool.truncate(take);
            Ok(pool)
        }
        Strategy::Random => Ok(pool.choose_multiple(rng, take).copied().collect()),
    }
}

/// `min(n, candidates - 1)` distinct negative elements, never the truth.
pub fn sample_negative_elements(
    tree: &DomTree,
    truth: CandidateId,
    cfg: &SampleConfig,
) -> Result<Vec<CandidateId>, SampleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(sample_elements_with(tree, truth, cfg, &mut rng)?
        .into_iter()
        .map(|e| e.element)
        .collect())
}

/// Operation for a negative sample given the truth operation and a uniform
/// draw `epsilon` in `[0, 1)`. CLICK truths always give CLICK; TYPE and
/// SELECT become CLICK when `epsilon < replace_threshold`.
pub fn negative_op(truth_op: OpKind, epsilon: f64, cfg: &SampleConfig) -> OpKind {
    if truth_op.takes_value() && epsilon < cfg.replace_threshold {
        OpKind::Click
    } else {
        truth_op
    }
}

/// Pairs negative elements with operations drawn from `epsilons`, one draw
/// per negative. Negatives keeping TYPE/SELECT reuse the truth value.
pub fn actions_from_draws(
    elements: &[NegativeElement],
    truth: &Action,
    epsilons: impl IntoIterator<Item = f64>,
    cfg: &SampleConfig,
) -> Result<Vec<NegativeAction>, SampleError> {
    let mut eps = epsilons.into_iter();
    elements
        .iter()
        .enumerate()
        .map(|(rank, e)| {
            let epsilon = eps.next().ok_or(SampleError::EpsilonExhausted)?;
            let op = negative_op(truth.op(), epsilon, cfg);
            Ok(NegativeAction {
                action: Action::with_op(op, e.element, truth.value()),
                rank,
                distance: e.distance,
            })
        })
        .collect()
}

/// Negative actions for one step. One seeded stream drives the element draw
/// (random strategy only) and then one uniform draw per negative.
pub fn build_negative_actions(
    tree: &DomTree,
    truth: &Action,
    cfg: &SampleConfig,
) -> Result<Vec<NegativeAction>, SampleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let elements = sample_elements_with(tree, truth.element(), cfg, &mut rng)?;
    let draws: Vec<f64> = (0..elements.len()).map(|_| rng.gen::<f64>()).collect();
    actions_from_draws(&elements, truth, draws, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{assign_candidate_ids, parse_html, InteractableSet, TreeBuilder};

    /// A -> {B, C}, B -> {D, E}; D, E, C are candidates 0, 1, 2.
    fn abcde() -> DomTree {
        let mut b = TreeBuilder::new();
        let a = b.add(None, "div");
        let bn = b.add(Some(a), "div");
        let d = b.add(Some(bn), "a");
        let e = b.add(Some(bn), "a");
        let c = b.add(Some(a), "a");
        b.set_candidate(d, Some(0));
        b.set_candidate(e, Some(1));
        b.set_candidate(c, Some(2));
        b.build(a)
    }

    fn cfg(n: usize, strategy: Strategy, seed: u64) -> SampleConfig {
        SampleConfig {
            n,
            strategy,
            replace_threshold: DEFAULT_REPLACE_THRESHOLD,
            seed,
        }
    }

    #[test]
    fn nearest_sibling_first() {
        let t = abcde();
        assert_eq!(sample_negative_elements(&t, 0, &cfg(1, Strategy::Distance, 0)).unwrap(), vec![1]);
        assert_eq!(
            candidate_distances(&t, 0).unwrap(),
            vec![
                NegativeElement { element: 1, distance: 2 },
                NegativeElement { element: 2, distance: 3 }
            ]
        );
    }

    #[test]
    fn exhaustion_returns_all_others() {
        let t = abcde();
        for s in [Strategy::Distance, Strategy::Random] {
            let mut got = sample_negative_elements(&t, 1, &cfg(5, s, 3)).unwrap();
            got.sort();
            assert_eq!(got, vec![0, 2]);
        }
    }

    #[test]
    fn lone_candidate_is_an_error() {
        let t = assign_candidate_ids(&parse_html("<div><a>x</a><p>y</p></div>").unwrap(), &InteractableSet::default());
        assert_eq!(
            sample_negative_elements(&t, 0, &cfg(3, Strategy::Distance, 0)),
            Err(SampleError::NoCandidates)
        );
        assert_eq!(
            sample_negative_elements(&t, 4, &cfg(3, Strategy::Distance, 0)),
            Err(SampleError::UnknownCandidate(4))
        );
    }

    #[test]
    fn op_replacement_rule() {
        let c = SampleConfig::default();
        assert_eq!(negative_op(OpKind::Click, 0.99, &c), OpKind::Click);
        assert_eq!(negative_op(OpKind::Click, 0.0, &c), OpKind::Click);
        assert_eq!(negative_op(OpKind::Type, 0.20, &c), OpKind::Click);
        assert_eq!(negative_op(OpKind::Select, 0.80, &c), OpKind::Select);
        assert_eq!(negative_op(OpKind::Type, 0.33, &c), OpKind::Type);
    }

    #[test]
    fn click_truth_gives_click_negatives() {
        let t = abcde();
        let neg = build_negative_actions(&t, &Action::click(2), &cfg(2, Strategy::Distance, 11)).unwrap();
        let acts: Vec<String> = neg.iter().map(|n| n.action.to_string()).collect();
        assert_eq!(acts, vec!["CLICK [0]", "CLICK [1]"]);
    }

    #[test]
    fn replayed_draws() {
        let t = abcde();
        let c = cfg(2, Strategy::Distance, 0);
        let truth = Action::type_text(0, "apple");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let elements = sample_elements_with(&t, 0, &c, &mut rng).unwrap();
        let neg = actions_from_draws(&elements, &truth, [0.1, 0.9], &c).unwrap();
        assert_eq!(neg[0].action, Action::click(1));
        assert_eq!(neg[1].action, Action::type_text(2, "apple"));
        assert_eq!((neg[0].rank, neg[1].rank), (0, 1));
        assert_eq!(actions_from_draws(&elements, &truth, [0.5], &c), Err(SampleError::EpsilonExhausted));
    }

    #[test]
    fn seed_only_moves_ops_under_distance() {
        let html: String = (0..12).map(|i| format!("<div><a>{i}</a><a>x</a></div>")).collect();
        let t = assign_candidate_ids(&parse_html(&format!("<body>{html}</body>")).unwrap(), &InteractableSet::default());
        let truth = Action::select(5, "v");
        let els = |seed| {
            build_negative_actions(&t, &truth, &cfg(4, Strategy::Distance, seed))
                .unwrap()
                .iter()
                .map(|n| n.action.element())
                .collect::<Vec<_>>()
        };
        assert_eq!(els(1), els(2));
        let rand = |seed| sample_negative_elements(&t, 5, &cfg(4, Strategy::Random, seed)).unwrap();
        assert_eq!(rand(7), rand(7));
        assert!((0..10).any(|s| rand(s) != rand(s + 100)));
    }

    #[test]
    fn step_seeds_differ() {
        let a: std::collections::BTreeSet<u64> = (0..1000).map(|i| step_seed(7, i)).collect();
        assert_eq!(a.len(), 1000);
        assert_ne!(step_seed(7, 0), step_seed(8, 0));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0, Strategy::Distance, 0).validate().is_err());
        let mut c = SampleConfig::default();
        c.replace_threshold = 1.5;
        assert!(c.validate().is_err());
    }
}
