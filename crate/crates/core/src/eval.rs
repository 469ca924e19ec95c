//! Step success rate, Operation F1 and element distance.
//!
//! A step succeeds when element, operation and (for TYPE/SELECT) the
//! normalized value all match. Operation F1 is a token F1 between
//! `"<op> <value>"` strings, macro-averaged over TYPE/SELECT truths. Element
//! distance is the tree step distance between the predicted and labeled
//! elements, averaged over steps that picked the wrong element.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{Action, OpKind};
use crate::dom::{prepare_tree, CandidateId, DomTree};
use crate::pairgen::{read_corpus, step_digest, PairError, StepRecord};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no TYPE or SELECT steps to score")]
    EmptyEvalSet,
    #[error("prediction and truth lists differ in length ({preds} vs {truths})")]
    Misaligned { preds: usize, truths: usize },
    #[error("candidate {0} is not on the page")]
    UnknownElement(CandidateId),
    #[error("prediction for unknown step {0}")]
    MissingStep(String),
    #[error("more than one prediction for step {0}")]
    DuplicatePrediction(String),
    #[error("predictions line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Corpus(#[from] PairError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Predicted action for one step; `None` when the model output did not parse.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub step_digest: String,
    pub predicted: Option<Action>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionLine {
    step_digest: String,
    action_string: String,
}

impl Prediction {
    pub fn from_output(step_digest: impl Into<String>, output: &str) -> Self {
        Self {
            step_digest: step_digest.into(),
            predicted: output.trim().parse().ok(),
        }
    }
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    parse_predictions(&text)
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(line).map_err(|e| EvalError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(Prediction::from_output(p.step_digest, &p.action_string));
    }
    Ok(out)
}

pub fn write_predictions(preds: &[(String, String)], path: &Path) -> Result<(), EvalError> {
    let mut s = String::new();
    for (digest, action) in preds {
        let line = PredictionLine {
            step_digest: digest.clone(),
            action_string: action.clone(),
        };
        s.push_str(&serde_json::to_string(&line).expect("plain strings serialize"));
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Trim, collapse inner whitespace, lowercase.
pub fn normalize_value(v: &str) -> String {
    v.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub fn step_success(pred: Option<&Action>, truth: &Action) -> bool {
    let Some(pred) = pred else {
        return false;
    };
    pred.element() == truth.element()
        && pred.op() == truth.op()
        && (truth.op() == OpKind::Click
            || normalize_value(pred.value().unwrap_or_default())
                == normalize_value(truth.value().unwrap_or_default()))
}

fn op_tokens(a: &Action) -> Vec<String> {
    let s = match a.value() {
        Some(v) => format!("{} {}", a.op(), v),
        None => a.op().to_string(),
    };
    normalize_value(&s).split(' ').map(str::to_string).collect()
}

/// Multiset token F1 between two token lists.
pub fn token_f1(pred: &[String], truth: &[String]) -> f64 {
    if pred.is_empty() || truth.is_empty() {
        return if pred.is_empty() && truth.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in truth {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for p in pred {
        if let Some(c) = counts.get_mut(p.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / truth.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token F1 of one step's operation string; unparseable predictions score 0.
pub fn step_operation_f1(pred: Option<&Action>, truth: &Action) -> f64 {
    match pred {
        Some(p) => token_f1(&op_tokens(p), &op_tokens(truth)),
        None => 0.0,
    }
}

/// Macro-averaged token F1 over the steps whose truth is TYPE or SELECT.
pub fn operation_f1(preds: &[Option<Action>], truths: &[Action]) -> Result<f64, EvalError> {
    if preds.len() != truths.len() {
        return Err(EvalError::Misaligned {
            preds: preds.len(),
            truths: truths.len(),
        });
    }
    let scores: Vec<f64> = preds
        .iter()
        .zip(truths)
        .filter(|(_, t)| t.op().takes_value())
        .map(|(p, t)| step_operation_f1(p.as_ref(), t))
        .collect();
    if scores.is_empty() {
        return Err(EvalError::EmptyEvalSet);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Step distance between two candidate elements of `tree`.
pub fn element_distance(tree: &DomTree, pred: CandidateId, truth: CandidateId) -> Result<u32, EvalError> {
    let a = tree.node_of_candidate(pred).ok_or(EvalError::UnknownElement(pred))?;
    let b = tree.node_of_candidate(truth).ok_or(EvalError::UnknownElement(truth))?;
    Ok(tree.step_distance(a, b).expect("candidate nodes are in the tree"))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub steps: usize,
    pub successes: usize,
    pub ssr: f64,
    /// `None` when the split has no TYPE/SELECT truths.
    pub op_f1: Option<f64>,
    pub op_f1_steps: usize,
    pub mean_element_distance: f64,
    /// Steps whose predicted element differs from the truth and both resolve.
    pub element_mismatches: usize,
    /// Predicted elements that are not on the page.
    pub unmatched_elements: usize,
    pub unparseable: usize,
    /// Corpus steps without a prediction; counted as failures.
    pub missing_predictions: usize,
    /// Distance → number of wrong-element steps.
    pub distance_histogram: BTreeMap<u32, usize>,
    /// Truth op → (steps, successes).
    pub per_op: BTreeMap<String, (usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ssr: f64,
    pub op_f1: Option<f64>,
    pub mean_element_distance: f64,
    pub overall: SplitMetrics,
    pub per_split: BTreeMap<String, SplitMetrics>,
}

#[derive(Default)]
struct Acc {
    m: SplitMetrics,
    f1_sum: f64,
    dist_sum: u64,
}

impl Acc {
    fn add(&mut self, pred: Option<&Action>, missing: bool, truth: &Action, tree: Option<&DomTree>) {
        let m = &mut self.m;
        m.steps += 1;
        let ok = step_success(pred, truth);
        m.successes += usize::from(ok);
        let e = m.per_op.entry(truth.op().to_string()).or_default();
        e.0 += 1;
        e.1 += usize::from(ok);
        if missing {
            m.missing_predictions += 1;
        } else if pred.is_none() {
            m.unparseable += 1;
        }
        if truth.op().takes_value() {
            m.op_f1_steps += 1;
            self.f1_sum += step_operation_f1(pred, truth);
        }
        if let (Some(p), Some(tree)) = (pred, tree) {
            if p.element() != truth.element() {
                match element_distance(tree, p.element(), truth.element()) {
                    Ok(d) => {
                        m.element_mismatches += 1;
                        self.dist_sum += u64::from(d);
                        *m.distance_histogram.entry(d).or_default() += 1;
                    }
                    Err(_) => m.unmatched_elements += 1,
                }
            }
        }
    }

    fn finish(mut self) -> SplitMetrics {
        let m = &mut self.m;
        m.ssr = if m.steps == 0 { 0.0 } else { m.successes as f64 / m.steps as f64 };
        m.op_f1 = (m.op_f1_steps > 0).then(|| self.f1_sum / m.op_f1_steps as f64);
        m.mean_element_distance = if m.element_mismatches == 0 {
            0.0
        } else {
            self.dist_sum as f64 / m.element_mismatches as f64
        };
        self.m
    }
}

/// Scores predictions against a corpus. Every prediction must name a corpus
/// step, at most once; steps without a prediction count as failures.
pub fn aggregate_records(preds: &[Prediction], corpus: &[StepRecord]) -> Result<MetricsReport, EvalError> {
    let digests: Vec<String> = corpus.iter().map(step_digest).collect();
    let index: HashMap<&str, usize> = digests.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let mut by_step: HashMap<usize, Option<&Action>> = HashMap::new();
    for p in preds {
        let i = *index
            .get(p.step_digest.as_str())
            .ok_or_else(|| EvalError::MissingStep(p.step_digest.clone()))?;
        if by_step.insert(i, p.predicted.as_ref()).is_some() {
            return Err(EvalError::DuplicatePrediction(p.step_digest.clone()));
        }
    }
    let mut overall = Acc::default();
    let mut splits: BTreeMap<String, Acc> = BTreeMap::new();
    for (i, step) in corpus.iter().enumerate() {
        // identical records share a digest; only the first carries the prediction
        if index[digests[i].as_str()] != i {
            continue;
        }
        let (pred, missing) = match by_step.get(&i) {
            Some(p) => (*p, false),
            None => (None, true),
        };
        let tree = match pred {
            Some(p) if p.element() != step.truth.element() => prepare_tree(&step.raw_html).ok(),
            _ => None,
        };
        overall.add(pred, missing, &step.truth, tree.as_ref());
        splits
            .entry(step.split.as_str().to_string())
            .or_default()
            .add(pred, missing, &step.truth, tree.as_ref());
    }
    let overall = overall.finish();
    Ok(MetricsReport {
        ssr: overall.ssr,
        op_f1: overall.op_f1,
        mean_element_distance: overall.mean_element_distance,
        per_split: splits.into_iter().map(|(k, a)| (k, a.finish())).collect(),
        overall,
    })
}

pub fn aggregate(preds: &Path, corpus: &Path) -> Result<MetricsReport, EvalError> {
    let preds = read_predictions(preds)?;
    let corpus = read_corpus(corpus)?;
    aggregate_records(&preds, &corpus)
}
