//! Corpus analytics: HTML length, action mix, trajectory length, intent words.
//!
//! Token length is the whitespace-token count of the raw HTML, a
//! tokenizer-independent proxy. Accumulators merge, so shards can be
//! processed in parallel and combined.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::OpKind;
use crate::pairgen::{read_corpus, PairError, StepRecord};

/// Inclusive bounds on CLICK / (TYPE + SELECT) reported for real corpora.
pub const CLICK_RATIO_RANGE: (f64, f64) = (4.0, 6.0);

const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "into", "is", "it", "its", "me", "my", "of",
    "on", "or", "that", "the", "then", "this", "to", "up", "with", "within", "i", "you", "your", "all", "any",
];

pub fn is_stop_word(w: &str) -> bool {
    STOP_WORDS.contains(&w)
}

/// Lowercased alphanumeric words of an intent, stop words removed.
pub fn intent_words(intent: &str) -> impl Iterator<Item = String> + '_ {
    intent
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty() && !is_stop_word(w))
}

/// Power-of-two bucket: the lower bound `b` with `b <= x < 2b`, or 0 for 0.
pub fn log2_bucket(x: usize) -> usize {
    if x == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - x.leading_zeros())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub steps: usize,
    pub tasks: usize,
    /// Bucket lower bound → number of steps.
    pub token_length_histogram: BTreeMap<usize, usize>,
    pub mean_token_length: f64,
    pub action_counts: BTreeMap<OpKind, usize>,
    pub action_proportions: BTreeMap<OpKind, f64>,
    /// Steps per task → number of tasks.
    pub trajectory_length_histogram: BTreeMap<usize, usize>,
    pub mean_trajectory_length: f64,
    pub word_frequencies: BTreeMap<String, usize>,
}

/// Partial statistics over a shard of steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsAccumulator {
    steps: usize,
    token_total: u64,
    token_hist: BTreeMap<usize, usize>,
    ops: BTreeMap<OpKind, usize>,
    task_steps: BTreeMap<String, usize>,
    words: BTreeMap<String, usize>,
}

impl StatsAccumulator {
    pub fn push(&mut self, step: &StepRecord) {
        let tokens = step.raw_html.split_whitespace().count();
        self.steps += 1;
        self.token_total += tokens as u64;
        *self.token_hist.entry(log2_bucket(tokens)).or_default() += 1;
        *self.ops.entry(step.truth.op()).or_default() += 1;
        *self.task_steps.entry(step.task_key().to_string()).or_default() += 1;
        for w in intent_words(&step.intent) {
            *self.words.entry(w).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: StatsAccumulator) {
        self.steps += other.steps;
        self.token_total += other.token_total;
        for (k, v) in other.token_hist {
            *self.token_hist.entry(k).or_default() += v;
        }
        for (k, v) in other.ops {
            *self.ops.entry(k).or_default() += v;
        }
        for (k, v) in other.task_steps {
            *self.task_steps.entry(k).or_default() += v;
        }
        for (k, v) in other.words {
            *self.words.entry(k).or_default() += v;
        }
    }

    pub fn finish(self) -> CorpusStats {
        let steps = self.steps;
        let tasks = self.task_steps.len();
        let mut traj = BTreeMap::new();
        for &n in self.task_steps.values() {
            *traj.entry(n).or_default() += 1;
        }
        let action_proportions = self
            .ops
            .iter()
            .map(|(&op, &c)| (op, c as f64 / steps as f64))
            .collect();
        CorpusStats {
            steps,
            tasks,
            token_length_histogram: self.token_hist,
            mean_token_length: if steps == 0 { 0.0 } else { self.token_total as f64 / steps as f64 },
            action_counts: self.ops,
            action_proportions,
            trajectory_length_histogram: traj,
            mean_trajectory_length: if tasks == 0 { 0.0 } else { steps as f64 / tasks as f64 },
            word_frequencies: self.words,
        }
    }
}

pub fn compute_stats_records(corpus: &[StepRecord]) -> CorpusStats {
    let mut acc = StatsAccumulator::default();
    for s in corpus {
        acc.push(s);
    }
    acc.finish()
}

pub fn compute_stats(corpus: &Path) -> Result<CorpusStats, PairError> {
    Ok(compute_stats_records(&read_corpus(corpus)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ClickRatio {
    InRange { ratio: f64 },
    OutOfRange { ratio: f64 },
    NoNonClickActions,
}

impl std::fmt::Display for ClickRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClickRatio::InRange { ratio } => write!(f, "click ratio {ratio:.3} in range"),
            ClickRatio::OutOfRange { ratio } => write!(f, "click ratio {ratio:.3} out of range"),
            ClickRatio::NoNonClickActions => f.write_str("no non-click actions"),
        }
    }
}

pub fn check_click_ratio(stats: &CorpusStats) -> ClickRatio {
    let p = |op| stats.action_proportions.get(&op).copied().unwrap_or(0.0);
    let others = p(OpKind::Type) + p(OpKind::Select);
    if others <= 0.0 {
        return ClickRatio::NoNonClickActions;
    }
    let ratio = p(OpKind::Click) / others;
    // proportions carry rounding; compare with a small slack
    let (lo, hi) = CLICK_RATIO_RANGE;
    if ratio >= lo - 1e-9 && ratio <= hi + 1e-9 {
        ClickRatio::InRange { ratio }
    } else {
        ClickRatio::OutOfRange { ratio }
    }
}

/// Both histograms as `histogram,bucket,count` rows.
pub fn histograms_csv(stats: &CorpusStats) -> String {
    let mut s = String::from("histogram,bucket,count\n");
    for (b, c) in &stats.token_length_histogram {
        let _ = writeln!(s, "token_length,{b},{c}");
    }
    for (b, c) in &stats.trajectory_length_histogram {
        let _ = writeln!(s, "trajectory_length,{b},{c}");
    }
    s
}
