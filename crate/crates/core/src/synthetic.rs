//! Seeded generators for test trees and a toy step corpus.
//!
//! Pages are small forms and link lists whose candidate labels are drawn
//! from a fixed vocabulary; each intent names the label of its target, so a
//! policy that reads element context can learn the task.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::{Action, OpKind};
use crate::dom::{assign_candidate_ids, DomTree, InteractableSet, TreeBuilder};
use crate::pairgen::{Split, StepRecord};

/// Random recursive tree with `nodes` elements. Each node attaches to a
/// uniformly chosen earlier node; roughly `candidate_fraction` of them are
/// links, numbered in document order.
pub fn random_tree<R: Rng>(rng: &mut R, nodes: usize, candidate_fraction: f64) -> DomTree {
    let mut b = TreeBuilder::new();
    let root = b.add(None, "div");
    for _ in 1..nodes.max(1) {
        let parent = rng.gen_range(0..b.len());
        let tag = if rng.gen_bool(candidate_fraction.clamp(0.0, 1.0)) {
            "a"
        } else if rng.gen_bool(0.5) {
            "div"
        } else {
            "span"
        };
        b.add(Some(parent), tag);
    }
    assign_candidate_ids(&b.build(root), &InteractableSet::default())
}

/// Random tree with exactly `candidates` candidate links among `nodes`
/// elements (`nodes > candidates`).
pub fn random_tree_with_candidates<R: Rng>(rng: &mut R, nodes: usize, candidates: usize) -> DomTree {
    assert!(nodes > candidates, "need a non-candidate root");
    let mut is_cand = vec![false; nodes - 1];
    for c in is_cand.iter_mut().take(candidates) {
        *c = true;
    }
    is_cand.shuffle(rng);
    let mut b = TreeBuilder::new();
    let root = b.add(None, "div");
    for c in is_cand {
        let parent = rng.gen_range(0..b.len());
        let id = b.add(Some(parent), if c { "a" } else { "div" });
        if c {
            b.set_text(id, "link");
        }
    }
    assign_candidate_ids(&b.build(root), &InteractableSet::default())
}

const LABELS: &[&str] = &[
    "flights", "hotels", "cars", "cruises", "deals", "account", "help", "careers", "news", "sports", "weather",
    "music", "movies", "books", "games", "garden", "kitchen", "toys", "shoes", "jackets", "laptops", "phones",
    "cameras", "tickets", "events", "parking", "rewards", "coupons", "checkout", "wishlist", "returns", "orders",
    "pharmacy", "recipes", "pets", "fitness", "tools", "lighting", "furniture", "bedding", "jewelry", "watches",
    "tablets", "printers", "monitors", "headphones", "speakers", "bikes", "camping", "fishing",
];

const FIELDS: &[&str] = &[
    "origin", "destination", "email", "zipcode", "username", "query", "city", "coupon", "phone", "guests", "budget",
    "nickname",
];

const VALUES: &[&str] = &[
    "boston", "denver", "chicago", "seattle", "austin", "miami", "portland", "atlanta", "phoenix", "dallas", "economy",
    "business", "small", "medium", "large",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub pages: usize,
    pub min_candidates: usize,
    pub max_candidates: usize,
    /// Relative weights of CLICK, TYPE and SELECT truths.
    pub op_weights: [u32; 3],
    /// Fraction of pages labeled as held out (`Split::CrossTask`).
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            pages: 200,
            min_candidates: 5,
            max_candidates: 10,
            op_weights: [5, 1, 1],
            holdout_fraction: 0.25,
            seed: 0,
        }
    }
}

enum Widget {
    Link(&'static str),
    Button(&'static str),
    Input(&'static str),
    Select(&'static str, [&'static str; 2]),
}

impl Widget {
    fn cost(&self) -> usize {
        match self {
            Widget::Select(..) => 3,
            _ => 1,
        }
    }

    fn html(&self) -> String {
        match self {
            Widget::Link(l) => format!("<a href=\"/{l}\">{l}</a>"),
            Widget::Button(l) => format!("<button type=\"button\">{l}</button>"),
            Widget::Input(f) => format!("<input type=\"text\" name=\"{f}\" placeholder=\"{f}\">"),
            Widget::Select(f, [a, b]) => {
                format!("<select name=\"{f}\"><option>{a}</option><option>{b}</option></select>")
            }
        }
    }
}

fn pick_op<R: Rng>(rng: &mut R, w: [u32; 3]) -> OpKind {
    let total: u32 = w.iter().sum();
    let mut x = rng.gen_range(0..total.max(1));
    for (op, &wi) in [OpKind::Click, OpKind::Type, OpKind::Select].into_iter().zip(&w) {
        if x < wi {
            return op;
        }
        x -= wi;
    }
    OpKind::Click
}

fn two_values<R: Rng>(rng: &mut R) -> [&'static str; 2] {
    let v: Vec<_> = VALUES.choose_multiple(rng, 2).copied().collect();
    [v[0], v[1]]
}

/// Candidate index of widget `w` in document order.
fn first_candidate(widgets: &[Widget], w: usize) -> u32 {
    widgets[..w].iter().map(|x| x.cost() as u32).sum()
}

/// One page and its truth action. Widgets are spread over a header nav, a
/// few nested sections and a footer so candidate distances vary.
fn page<R: Rng>(rng: &mut R, cfg: &SyntheticConfig, idx: usize) -> StepRecord {
    let budget = rng.gen_range(cfg.min_candidates..=cfg.max_candidates.max(cfg.min_candidates));
    let op = pick_op(rng, cfg.op_weights);
    let mut labels = LABELS.to_vec();
    labels.shuffle(rng);
    let mut fields = FIELDS.to_vec();
    fields.shuffle(rng);

    let mut widgets: Vec<Widget> = Vec::new();
    let mut used = 0;
    // the target first, shuffled into place below
    let target = match op {
        OpKind::Click if rng.gen_bool(0.7) => Widget::Link(labels.pop().unwrap()),
        OpKind::Click => Widget::Button(labels.pop().unwrap()),
        OpKind::Type => Widget::Input(fields.pop().unwrap()),
        OpKind::Select => Widget::Select(fields.pop().unwrap(), two_values(rng)),
    };
    used += target.cost();
    widgets.push(target);
    while used < budget {
        let left = budget - used;
        let w = match rng.gen_range(0..10) {
            0..=4 => Widget::Link(labels.pop().unwrap()),
            5..=6 => Widget::Button(labels.pop().unwrap()),
            7..=8 => Widget::Input(fields.pop().unwrap_or("notes")),
            _ if left >= 3 && !fields.is_empty() => Widget::Select(fields.pop().unwrap(), two_values(rng)),
            _ => Widget::Link(labels.pop().unwrap()),
        };
        used += w.cost();
        widgets.push(w);
    }
    let mut order: Vec<usize> = (0..widgets.len()).collect();
    order.shuffle(rng);
    let target_pos = order.iter().position(|&i| i == 0).unwrap();
    let widgets: Vec<Widget> = {
        let mut slots: Vec<Option<Widget>> = widgets.into_iter().map(Some).collect();
        order.iter().map(|&i| slots[i].take().unwrap()).collect()
    };

    // split the widget sequence into regions: nav | sections... | footer
    let regions = rng.gen_range(2..=4);
    let mut cuts: Vec<usize> = (1..widgets.len()).collect();
    cuts.shuffle(rng);
    cuts.truncate(regions - 1);
    cuts.sort_unstable();
    let mut html = String::from("<html><body>");
    let mut start = 0;
    for (r, end) in cuts.iter().copied().chain([widgets.len()]).enumerate() {
        let inner: String = widgets[start..end].iter().map(Widget::html).collect();
        let wrapped = if r == 0 {
            format!("<header><nav>{inner}</nav></header>")
        } else if end == widgets.len() && regions > 2 {
            format!("<footer><div>{inner}</div></footer>")
        } else {
            let depth = rng.gen_range(1..=3);
            let mut s = format!("<form>{inner}</form>");
            for d in 0..depth {
                s = format!("<div class=\"section s{d}\">{s}</div>");
            }
            format!("<main>{s}</main>")
        };
        html.push_str(&wrapped);
        start = end;
    }
    html.push_str("</body></html>");

    let cid = first_candidate(&widgets, target_pos);
    let (intent, truth) = match &widgets[target_pos] {
        Widget::Link(l) | Widget::Button(l) => {
            let verb = ["open", "go to", "show me", "browse"][rng.gen_range(0..4)];
            (format!("{verb} the {l} section"), Action::click(cid))
        }
        Widget::Input(f) => {
            let v = VALUES[rng.gen_range(0..VALUES.len())];
            (format!("enter {v} as the {f}"), Action::type_text(cid, v))
        }
        Widget::Select(f, opts) => {
            let v = opts[rng.gen_range(0..2)];
            (format!("pick {v} for {f}"), Action::select(cid, v))
        }
    };
    let split = if (idx as f64) < cfg.pages as f64 * (1.0 - cfg.holdout_fraction) {
        Split::Train
    } else {
        Split::CrossTask
    };
    StepRecord {
        intent,
        raw_html: html,
        trajectory: Vec::new(),
        truth,
        split,
        task_id: Some(format!("page-{idx:04}")),
    }
}

/// `cfg.pages` single-step tasks; the last `holdout_fraction` are held out.
pub fn synthetic_corpus(cfg: &SyntheticConfig) -> Vec<StepRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.pages).map(|i| page(&mut rng, cfg, i)).collect()
}
