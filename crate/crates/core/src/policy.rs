//! A linear softmax policy over a finite set of candidate actions.
//!
//! An action's score is `w · φ(prompt, action)` where `φ` hashes conjunctions
//! of query n-grams (task words and action history, n = 1..=3) with action
//! tokens (operation, value words, and the words of the target element's
//! start tag and text), plus the action tokens alone. Log-probabilities are
//! normalized over the candidate set.
//!
//! The DPO objective for a pair with margin
//! `m = [log πθ(w) − log πref(w)] − [log πθ(l) − log πref(l)]` is
//! `−ln σ(β m)`. Both actions share one normalizer, so its gradient is
//! `−β σ(−β m) (φ(w) − φ(l))`.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionError, OpKind};
use crate::pairgen::{PreferencePair, PromptView};

pub const DEFAULT_FEATURE_DIM: usize = 1 << 16;
pub const MAX_CANDIDATE_ACTIONS: usize = 256;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WEPOPLCY";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("feature_dim {0} is not a power of two")]
    FeatureDim(usize),
    #[error("action {0:?} is not among the candidates")]
    ActionNotCandidate(String),
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("duplicate candidate {0:?}")]
    DuplicateCandidate(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sorted `(index, value)` pairs with unique indices.
pub type SparseVec = Vec<(u32, f64)>;

fn merge_sparse(mut v: Vec<(u32, f64)>) -> SparseVec {
    v.sort_by_key(|&(i, _)| i);
    let mut out: SparseVec = Vec::with_capacity(v.len());
    for (i, x) in v {
        match out.last_mut() {
            Some((j, y)) if *j == i => *y += x,
            _ => out.push((i, x)),
        }
    }
    out
}

pub fn sparse_dot(w: &[f64], x: &SparseVec) -> f64 {
    x.iter().map(|&(i, v)| w[i as usize] * v).sum()
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `−ln σ(x)`, stable for large |x|.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Seeded 64-bit FNV-1a over length-prefixed parts.
fn hash_parts(seed: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x100_0000_01b3);
    for p in parts {
        for b in (p.len() as u32).to_le_bytes().iter().chain(p.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    // final avalanche so low bits depend on every byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

/// Maps a prompt and a serialized action to hashed sparse features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHasher {
    pub feature_dim: usize,
    pub hash_seed: u64,
}

impl FeatureHasher {
    fn index(&self, parts: &[&str]) -> u32 {
        (hash_parts(self.hash_seed, parts) & (self.feature_dim as u64 - 1)) as u32
    }

    fn query_ngrams(view: Option<&PromptView<'_>>, prompt: &str) -> Vec<String> {
        let mut toks = match view {
            Some(v) => {
                let mut t = words(v.task);
                for h in &v.history {
                    t.push("|".into());
                    t.extend(words(h));
                }
                t
            }
            None => words(prompt),
        };
        toks.dedup();
        let mut grams = BTreeSet::new();
        for n in 1..=3 {
            for w in toks.windows(n) {
                grams.insert(w.join(" "));
            }
        }
        grams.into_iter().collect()
    }

    fn action_tokens(view: Option<&PromptView<'_>>, action: &str) -> Vec<String> {
        let mut toks = BTreeSet::new();
        match action.parse::<Action>() {
            Ok(a) => {
                toks.insert(format!("op:{}", a.op()));
                if let Some(v) = a.value() {
                    for w in words(v) {
                        toks.insert(format!("val:{w}"));
                    }
                }
                if let Some(ctx) = view.and_then(|v| v.element_context(a.element())) {
                    let tag: String = ctx
                        .trim_start_matches('<')
                        .chars()
                        .take_while(|c| c.is_alphanumeric())
                        .collect();
                    toks.insert(format!("tag:{tag}"));
                    toks.insert(format!("optag:{}:{tag}", a.op()));
                    for w in words(ctx) {
                        toks.insert(format!("el:{w}"));
                    }
                }
            }
            Err(_) => {
                for w in words(action) {
                    toks.insert(format!("raw:{w}"));
                }
            }
        }
        toks.into_iter().collect()
    }

    /// Features of every candidate action under one prompt.
    pub fn featurize(&self, prompt: &str, candidates: &[String]) -> Vec<SparseVec> {
        let view = PromptView::parse(prompt);
        let grams = Self::query_ngrams(view.as_ref(), prompt);
        candidates
            .iter()
            .map(|a| {
                let toks = Self::action_tokens(view.as_ref(), a);
                let mut raw = Vec::with_capacity(toks.len() * (grams.len() + 1));
                for t in &toks {
                    raw.push((self.index(&["a", t]), 1.0));
                    for g in &grams {
                        raw.push((self.index(&["x", g, t]), 1.0));
                    }
                }
                merge_sparse(raw)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    weights: Vec<f64>,
    feature_dim: usize,
    hash_seed: u64,
}

impl PolicyTable {
    pub fn new(feature_dim: usize, hash_seed: u64) -> Result<Self, PolicyError> {
        if !feature_dim.is_power_of_two() {
            return Err(PolicyError::FeatureDim(feature_dim));
        }
        Ok(Self {
            weights: vec![0.0; feature_dim],
            feature_dim,
            hash_seed,
        })
    }

    pub fn from_weights(weights: Vec<f64>, hash_seed: u64) -> Result<Self, PolicyError> {
        let feature_dim = weights.len();
        if !feature_dim.is_power_of_two() {
            return Err(PolicyError::FeatureDim(feature_dim));
        }
        Ok(Self {
            weights,
            feature_dim,
            hash_seed,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn hasher(&self) -> FeatureHasher {
        FeatureHasher {
            feature_dim: self.feature_dim,
            hash_seed: self.hash_seed,
        }
    }

    /// Candidate log-probabilities from precomputed features.
    pub fn log_probs(&self, feats: &[SparseVec]) -> Vec<f64> {
        let scores: Vec<f64> = feats.iter().map(|f| sparse_dot(&self.weights, f)).collect();
        let z = logsumexp(&scores);
        scores.iter().map(|s| s - z).collect()
    }

    pub fn apply(&mut self, grad: &SparseVec, step: f64) {
        for &(i, g) in grad {
            self.weights[i as usize] -= step * g;
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&[CHECKPOINT_VERSION])?;
        w.write_all(&(self.feature_dim as u32).to_le_bytes())?;
        w.write_all(&self.hash_seed.to_le_bytes())?;
        for x in &self.weights {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let bad = |m: &str| PolicyError::Checkpoint(m.to_string());
        if buf.len() < 21 || &buf[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic header"));
        }
        if buf[8] != CHECKPOINT_VERSION {
            return Err(bad("unsupported version"));
        }
        let dim = u32::from_le_bytes(buf[9..13].try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(buf[13..21].try_into().unwrap());
        let body = &buf[21..];
        if body.len() != dim * 8 {
            return Err(bad("weight section length does not match feature_dim"));
        }
        let weights = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_weights(weights, seed)
    }
}

/// Frozen copy of a policy used as the DPO reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePolicy(PolicyTable);

impl ReferencePolicy {
    pub fn freeze(policy: &PolicyTable) -> Self {
        Self(policy.clone())
    }

    pub fn table(&self) -> &PolicyTable {
        &self.0
    }
}

fn check_candidates(candidates: &[String]) -> Result<(), PolicyError> {
    if candidates.is_empty() {
        return Err(PolicyError::EmptyCandidates);
    }
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !seen.insert(c) {
            return Err(PolicyError::DuplicateCandidate(c.clone()));
        }
    }
    Ok(())
}

fn position(candidates: &[String], action: &str) -> Result<usize, PolicyError> {
    candidates
        .iter()
        .position(|c| c == action)
        .ok_or_else(|| PolicyError::ActionNotCandidate(action.to_string()))
}

/// `log π(action | prompt)` normalized over `candidates`.
pub fn action_logprob(
    policy: &PolicyTable,
    prompt: &str,
    action: &str,
    candidates: &[String],
) -> Result<f64, PolicyError> {
    check_candidates(candidates)?;
    let idx = position(candidates, action)?;
    let feats = policy.hasher().featurize(prompt, candidates);
    Ok(policy.log_probs(&feats)[idx])
}

/// One pair with features precomputed over its candidate action set.
#[derive(Debug, Clone)]
pub struct PairExample {
    pub feats: Vec<SparseVec>,
    pub chosen: usize,
    pub rejected: usize,
}

impl PairExample {
    pub fn new(
        hasher: &FeatureHasher,
        prompt: &str,
        chosen: &str,
        rejected: &str,
        candidates: &[String],
    ) -> Result<Self, PolicyError> {
        check_candidates(candidates)?;
        Ok(Self {
            feats: hasher.featurize(prompt, candidates),
            chosen: position(candidates, chosen)?,
            rejected: position(candidates, rejected)?,
        })
    }

    pub fn from_pair(hasher: &FeatureHasher, pair: &PreferencePair) -> Result<Self, PolicyError> {
        let candidates = candidate_actions(pair)?;
        Self::new(hasher, &pair.prompt, &pair.chosen, &pair.rejected, &candidates)
    }

    /// `log πθ(chosen) − log πθ(rejected)`.
    pub fn margin(&self, policy: &PolicyTable) -> f64 {
        sparse_dot(policy.weights(), &self.feats[self.chosen])
            - sparse_dot(policy.weights(), &self.feats[self.rejected])
    }

    fn implicit_margin(&self, policy: &PolicyTable, reference: &ReferencePolicy) -> f64 {
        self.margin(policy) - self.margin(reference.table())
    }

    pub fn dpo_loss(&self, policy: &PolicyTable, reference: &ReferencePolicy, beta: f64) -> f64 {
        let lp = policy.log_probs(&self.feats);
        let lr = reference.table().log_probs(&self.feats);
        let m = (lp[self.chosen] - lr[self.chosen]) - (lp[self.rejected] - lr[self.rejected]);
        neg_log_sigmoid(beta * m)
    }

    pub fn dpo_grad(&self, policy: &PolicyTable, reference: &ReferencePolicy, beta: f64) -> SparseVec {
        let m = self.implicit_margin(policy, reference);
        let coef = -beta * sigmoid(-beta * m);
        let mut raw: Vec<(u32, f64)> = Vec::new();
        raw.extend(self.feats[self.chosen].iter().map(|&(i, v)| (i, coef * v)));
        raw.extend(self.feats[self.rejected].iter().map(|&(i, v)| (i, -coef * v)));
        merge_sparse(raw)
    }

    pub fn sft_loss(&self, policy: &PolicyTable) -> f64 {
        -policy.log_probs(&self.feats)[self.chosen]
    }

    /// `−(φ(chosen) − E_π[φ])`.
    pub fn sft_grad(&self, policy: &PolicyTable) -> SparseVec {
        let lp = policy.log_probs(&self.feats);
        let mut raw: Vec<(u32, f64)> = Vec::new();
        for (k, f) in self.feats.iter().enumerate() {
            let p = lp[k].exp();
            let coef = if k == self.chosen { p - 1.0 } else { p };
            raw.extend(f.iter().map(|&(i, v)| (i, coef * v)));
        }
        merge_sparse(raw)
    }
}

/// DPO loss of one pair over an explicit candidate list.
pub fn dpo_loss(
    policy: &PolicyTable,
    reference: &ReferencePolicy,
    pair: &PreferencePair,
    candidates: &[String],
    beta: f64,
) -> Result<f64, PolicyError> {
    let ex = PairExample::new(&policy.hasher(), &pair.prompt, &pair.chosen, &pair.rejected, candidates)?;
    Ok(ex.dpo_loss(policy, reference, beta))
}

/// Analytic gradient of [`dpo_loss`] with respect to the policy weights.
pub fn dpo_grad(
    policy: &PolicyTable,
    reference: &ReferencePolicy,
    pair: &PreferencePair,
    candidates: &[String],
    beta: f64,
) -> Result<SparseVec, PolicyError> {
    let ex = PairExample::new(&policy.hasher(), &pair.prompt, &pair.chosen, &pair.rejected, candidates)?;
    Ok(ex.dpo_grad(policy, reference, beta))
}

pub fn sft_loss(
    policy: &PolicyTable,
    prompt: &str,
    truth: &str,
    candidates: &[String],
) -> Result<f64, PolicyError> {
    Ok(-action_logprob(policy, prompt, truth, candidates)?)
}

/// Actions over every candidate element in `prompt`, one per
/// `(op, value)` pattern, in element order.
pub fn action_space(prompt: &str, patterns: &[(OpKind, Option<&str>)]) -> Vec<String> {
    let ids = PromptView::parse(prompt)
        .map(|v| v.candidate_ids())
        .unwrap_or_default();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for id in ids {
        for &(op, value) in patterns {
            let a = Action::with_op(op, id, value).to_string();
            if seen.insert(a.clone()) {
                out.push(a);
            }
        }
    }
    out
}

/// Normalization set for a pair: the chosen and rejected operation
/// patterns applied to every candidate element in the prompt, capped at
/// [`MAX_CANDIDATE_ACTIONS`] with both pair actions always present.
pub fn candidate_actions(pair: &PreferencePair) -> Result<Vec<String>, PolicyError> {
    let chosen: Action = pair.chosen.parse()?;
    let rejected: Action = pair.rejected.parse()?;
    let patterns = [(chosen.op(), chosen.value()), (rejected.op(), rejected.value())];
    let mut out = action_space(&pair.prompt, &patterns);
    out.truncate(MAX_CANDIDATE_ACTIONS);
    for must in [&pair.chosen, &pair.rejected] {
        if !out.contains(must) {
            if out.len() == MAX_CANDIDATE_ACTIONS {
                let drop = out
                    .iter()
                    .rposition(|a| a != &pair.chosen && a != &pair.rejected)
                    .expect("cap exceeds two");
                out.remove(drop);
            }
            out.push(must.clone());
        }
    }
    Ok(out)
}

/// Index of the highest-probability candidate; ties go to the first.
pub fn predict(policy: &PolicyTable, prompt: &str, candidates: &[String]) -> Option<usize> {
    let feats = policy.hasher().featurize(prompt, candidates);
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in feats.iter().enumerate() {
        let s = sparse_dot(policy.weights(), f);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Scoring set for a labeled step: CLICK and the truth's operation and
/// value over every element in the prompt.
pub fn toy_candidates(prompt: &str, truth: &Action) -> Vec<String> {
    let mut out = action_space(prompt, &[(OpKind::Click, None), (truth.op(), truth.value())]);
    out.truncate(MAX_CANDIDATE_ACTIONS);
    out
}

/// Fraction of `(prompt, truth)` steps where the top-scoring action in
/// [`toy_candidates`] equals the truth.
pub fn toy_step_success_rate(policy: &PolicyTable, steps: &[(String, Action)]) -> f64 {
    if steps.is_empty() {
        return 0.0;
    }
    let hits = steps
        .iter()
        .filter(|(prompt, truth)| {
            let cands = toy_candidates(prompt, truth);
            predict(policy, prompt, &cands).is_some_and(|i| cands[i] == truth.to_string())
        })
        .count();
    hits as f64 / steps.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Dpo,
    Sft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Stop after this many updates.
    pub max_steps: Option<usize>,
}

impl Default for DpoConfig {
    fn default() -> Self {
        Self {
            beta: 0.95,
            learning_rate: 1e-4,
            warmup_fraction: 0.1,
            epochs: 1,
            batch_size: 8,
            seed: 0,
            max_steps: None,
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.beta > 0.0) {
            return Err(PolicyError::InvalidConfig("beta must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(PolicyError::InvalidConfig("learning_rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(PolicyError::InvalidConfig("warmup_fraction must lie in [0, 1]"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(PolicyError::InvalidConfig("epochs and batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Linear warmup to the peak rate, then cosine decay to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(peak: f64, warmup_fraction: f64, total_steps: usize) -> Self {
        let warmup_steps = ((warmup_fraction * total_steps as f64).ceil() as usize).min(total_steps);
        Self {
            peak,
            warmup_steps,
            total_steps,
        }
    }

    /// Rate at `step` in `0..=total_steps`; update `t` (0-based) uses `lr_at(t + 1)`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let (w, t) = (self.warmup_steps, self.total_steps);
        if step < w {
            return self.peak * step as f64 / w as f64;
        }
        if t <= w {
            return self.peak;
        }
        let progress = ((step - w) as f64 / (t - w) as f64).min(1.0);
        self.peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Trains a copy of `init` on `pairs`. DPO uses `init` as the frozen
/// reference; SFT maximizes the likelihood of each pair's chosen action.
pub fn train(
    pairs: &[PreferencePair],
    cfg: &DpoConfig,
    objective: Objective,
    init: &PolicyTable,
) -> Result<PolicyTable, PolicyError> {
    let hasher = init.hasher();
    let examples = pairs
        .iter()
        .map(|p| PairExample::from_pair(&hasher, p))
        .collect::<Result<Vec<_>, _>>()?;
    train_examples(&examples, cfg, objective, init)
}

pub fn train_examples(
    examples: &[PairExample],
    cfg: &DpoConfig,
    objective: Objective,
    init: &PolicyTable,
) -> Result<PolicyTable, PolicyError> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let reference = ReferencePolicy::freeze(init);
    let mut policy = init.clone();
    let batches_per_epoch = examples.len().div_ceil(cfg.batch_size);
    let total = cfg
        .max_steps
        .map_or(batches_per_epoch * cfg.epochs, |m| m.min(batches_per_epoch * cfg.epochs));
    let schedule = LrSchedule::new(cfg.learning_rate, cfg.warmup_fraction, total);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut step = 0;
    'outer: for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if step >= total {
                break 'outer;
            }
            let mut raw: Vec<(u32, f64)> = Vec::new();
            for &i in batch {
                let g = match objective {
                    Objective::Dpo => examples[i].dpo_grad(&policy, &reference, cfg.beta),
                    Objective::Sft => examples[i].sft_grad(&policy),
                };
                raw.extend(g);
            }
            let grad = merge_sparse(raw);
            policy.apply(&grad, schedule.lr_at(step + 1) / batch.len() as f64);
            step += 1;
        }
    }
    Ok(policy)
}

pub fn mean_margin(policy: &PolicyTable, examples: &[PairExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    examples.iter().map(|e| e.margin(policy)).sum::<f64>() / examples.len() as f64
}
