//! Preference-pair construction.
//!
//! For every annotated step the page is cleaned and pruned with the truth
//! forced in, a prompt is rendered once, and each sampled negative action
//! becomes one `(prompt, chosen, rejected)` record.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::Action;
use crate::dom::{collapse_whitespace, prepare_tree, CandidateId, DomError, DomTree, CANDIDATE_ATTR};
use crate::pruner::{lexical_scores, load_scores, prune_to_k, CandidateScores, PruneConfig, PruneError};
use crate::sampler::{build_negative_actions, step_seed, SampleConfig, SampleError};

pub const TASK_HEADER: &str = "Task: ";
pub const HISTORY_HEADER: &str = "Previous actions:";
pub const HTML_HEADER: &str = "HTML:";
pub const EMPTY_HISTORY: &str = "None";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[serde(alias = "CROSS_DOMAIN")]
    CrossDomain,
    #[serde(alias = "CROSS_TASK")]
    CrossTask,
    #[serde(alias = "CROSS_WEBSITE")]
    CrossWebsite,
    #[serde(alias = "TRAIN")]
    Train,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::CrossDomain => "cross_domain",
            Split::CrossTask => "cross_task",
            Split::CrossWebsite => "cross_website",
            Split::Train => "train",
        }
    }
}

/// One annotated interaction step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub intent: String,
    pub raw_html: String,
    #[serde(default)]
    pub trajectory: Vec<Action>,
    pub truth: Action,
    pub split: Split,
    /// Groups steps of one task; steps without it are grouped by intent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
}

impl StepRecord {
    pub fn task_key(&self) -> &str {
        self.task_id.as_deref().unwrap_or(&self.intent)
    }
}

/// Hex SHA-256 over the record's canonical JSON.
pub fn step_digest(step: &StepRecord) -> String {
    let json = serde_json::to_string(step).expect("step records serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system_preamble: String,
    pub instruction_block: String,
    pub output_format_block: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            system_preamble: "You are a web navigation assistant. You complete a user's task on a \
                              website by performing one action on one page element at a time."
                .into(),
            instruction_block: "Read the task, the actions taken so far, and the HTML of the current \
                                page. Elements you can act on carry an element_id attribute. Choose \
                                the single next action that advances the task: CLICK presses a button \
                                or follows a link, TYPE enters text into an input field, and SELECT \
                                picks an option from a drop-down list."
                .into(),
            output_format_block: "Reply with exactly one line in one of these forms:\n\
                                  CLICK [element_id]\n\
                                  TYPE [element_id] [text]\n\
                                  SELECT [element_id] [option]"
                .into(),
        }
    }
}

/// Renders the prompt: the three template blocks, then the task, the action
/// history (oldest first, `None` when empty), and the pruned page.
pub fn build_prompt(step: &StepRecord, pruned: &DomTree, tmpl: &PromptTemplate) -> String {
    let mut out = String::new();
    for block in [&tmpl.system_preamble, &tmpl.instruction_block, &tmpl.output_format_block] {
        out.push_str(block.trim_end());
        out.push_str("\n\n");
    }
    out.push_str(TASK_HEADER);
    out.push_str(&collapse_whitespace(&step.intent));
    out.push('\n');
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    if step.trajectory.is_empty() {
        out.push_str(EMPTY_HISTORY);
        out.push('\n');
    } else {
        for a in &step.trajectory {
            out.push_str(&a.to_string());
            out.push('\n');
        }
    }
    out.push_str(HTML_HEADER);
    out.push('\n');
    out.push_str(&pruned.serialize());
    out
}

/// The sections of a rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptView<'a> {
    pub task: &'a str,
    pub history: Vec<&'a str>,
    pub html: &'a str,
}

impl<'a> PromptView<'a> {
    /// Splits a prompt produced by [`build_prompt`]; `None` if the section
    /// headers are missing.
    pub fn parse(prompt: &'a str) -> Option<Self> {
        let task_at = prompt.rfind(&format!("\n{TASK_HEADER}"))? + 1;
        let after_task = &prompt[task_at + TASK_HEADER.len()..];
        let (task, rest) = after_task.split_once('\n')?;
        let rest = rest.strip_prefix(HISTORY_HEADER)?.strip_prefix('\n')?;
        let html_at = rest.rfind(&format!("\n{HTML_HEADER}\n"))?;
        let history: Vec<&str> = rest[..html_at]
            .lines()
            .filter(|l| !l.is_empty() && *l != EMPTY_HISTORY)
            .collect();
        let html = &rest[html_at + HTML_HEADER.len() + 2..];
        Some(Self { task, history, html })
    }

    /// Candidate ids marked in the page section, in document order.
    pub fn candidate_ids(&self) -> Vec<CandidateId> {
        let marker = format!(" {CANDIDATE_ATTR}=\"");
        let mut out = Vec::new();
        let mut rest = self.html;
        while let Some(pos) = rest.find(&marker) {
            rest = &rest[pos + marker.len()..];
            let end = rest.find('"').unwrap_or(rest.len());
            if let Ok(id) = rest[..end].parse() {
                out.push(id);
            }
        }
        out
    }

    /// Text associated with candidate `id`: its start tag attributes and the
    /// text up to the next tag.
    pub fn element_context(&self, id: CandidateId) -> Option<&'a str> {
        let marker = format!(" {CANDIDATE_ATTR}=\"{id}\"");
        let pos = self.html.find(&marker)?;
        let tag_start = self.html[..pos].rfind('<')?;
        let after = &self.html[pos..];
        let gt = after.find('>')?;
        let text_end = after[gt + 1..].find('<').map(|e| gt + 1 + e).unwrap_or(after.len());
        Some(&self.html[tag_start..pos + text_end])
    }
}

pub fn whitespace_tokens(s: &str) -> usize {
    s.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub step_digest: String,
    pub negative_rank: usize,
    pub distance: u32,
    pub strategy: String,
    pub seed: u64,
    /// Whitespace token count of the prompt.
    pub prompt_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: PairMeta,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PairError {
    #[error(transparent)]
    Dom(#[from] DomError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("ground-truth element {0} is not a candidate on the page")]
    UnknownTruthElement(CandidateId),
    #[error("step skipped: {candidates} candidate(s) after pruning, need at least 2")]
    SkippedStep { candidates: usize },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<PairError>,
    },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PairError {
    PairError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Cleaned page, pruned page and prompt for one step.
#[derive(Debug, Clone)]
pub struct PreparedStep {
    pub tree: DomTree,
    pub pruned: DomTree,
    pub prompt: String,
    pub digest: String,
}

/// Cleans and prunes the step's page, forcing the truth element in. Without
/// external scores candidates are ranked by overlap with the intent.
pub fn prepare_step(
    step: &StepRecord,
    cfg: &PruneConfig,
    tmpl: &PromptTemplate,
    scores: Option<&CandidateScores>,
) -> Result<PreparedStep, PairError> {
    let tree = prepare_tree(&step.raw_html)?;
    let truth = step.truth.element();
    if tree.node_of_candidate(truth).is_none() {
        return Err(PairError::UnknownTruthElement(truth));
    }
    let fallback;
    let scores = match scores {
        Some(s) => s,
        None => {
            fallback = lexical_scores(&tree, &step.intent);
            &fallback
        }
    };
    let pruned = prune_to_k(&tree, scores, Some(truth), cfg)?;
    let prompt = build_prompt(step, &pruned, tmpl);
    Ok(PreparedStep {
        tree,
        pruned,
        prompt,
        digest: step_digest(step),
    })
}

/// `min(n, candidates - 1)` pairs sharing one prompt, chosen = the truth.
pub fn build_pairs(
    step: &StepRecord,
    cfg: &PruneConfig,
    scfg: &SampleConfig,
    tmpl: &PromptTemplate,
    scores: Option<&CandidateScores>,
) -> Result<Vec<PreferencePair>, PairError> {
    let prepared = prepare_step(step, cfg, tmpl, scores)?;
    let candidates = prepared.pruned.candidate_count();
    if candidates < 2 {
        return Err(PairError::SkippedStep { candidates });
    }
    let negatives = build_negative_actions(&prepared.pruned, &step.truth, scfg)?;
    let chosen = step.truth.to_string();
    let prompt_tokens = whitespace_tokens(&prepared.prompt);
    Ok(negatives
        .into_iter()
        .map(|neg| PreferencePair {
            prompt: prepared.prompt.clone(),
            chosen: chosen.clone(),
            rejected: neg.action.to_string(),
            meta: PairMeta {
                step_digest: prepared.digest.clone(),
                negative_rank: neg.rank,
                distance: neg.distance,
                strategy: scfg.strategy.as_str().to_string(),
                seed: scfg.seed,
                prompt_tokens,
            },
        })
        .collect())
}

pub fn write_pairs<'a, W: Write>(
    pairs: impl IntoIterator<Item = &'a PreferencePair>,
    mut w: W,
) -> std::io::Result<usize> {
    let mut count = 0;
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
        count += 1;
    }
    w.flush()?;
    Ok(count)
}

/// Writes one JSON object per line in input order; returns lines written.
pub fn write_dataset<'a>(
    pairs: impl IntoIterator<Item = &'a PreferencePair>,
    path: &Path,
) -> Result<usize, PairError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    write_pairs(pairs, BufWriter::new(f)).map_err(|e| io_err(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PairError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PairError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<PreferencePair>, PairError> {
    read_jsonl(path)
}

pub fn read_corpus(path: &Path) -> Result<Vec<StepRecord>, PairError> {
    read_jsonl(path)
}

pub fn write_corpus(steps: &[StepRecord], path: &Path) -> Result<(), PairError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    for s in steps {
        serde_json::to_writer(&mut w, s).map_err(|e| io_err(path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub prune: PruneConfig,
    /// `seed` is the global seed; each step samples with [`step_seed`].
    pub sample: SampleConfig,
    pub template: PromptTemplate,
    /// Worker threads for per-step work; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Directory of `<step_digest>.tsv` score files.
    pub scores_dir: Option<PathBuf>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            prune: PruneConfig::default(),
            sample: SampleConfig::default(),
            template: PromptTemplate::default(),
            threads: None,
            scores_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BuildOutput {
    pub pairs: Vec<PreferencePair>,
    /// Indices of steps with fewer than two candidates.
    pub skipped: Vec<usize>,
}

fn build_step(index: usize, step: &StepRecord, opts: &BuildOptions) -> Result<Vec<PreferencePair>, PairError> {
    let scores = match &opts.scores_dir {
        Some(dir) => {
            let p = dir.join(format!("{}.tsv", step_digest(step)));
            if p.exists() {
                Some(load_scores(&p)?)
            } else {
                None
            }
        }
        None => None,
    };
    let scfg = SampleConfig {
        seed: step_seed(opts.sample.seed, index as u64),
        ..opts.sample
    };
    build_pairs(step, &opts.prune, &scfg, &opts.template, scores.as_ref())
}

/// Builds pairs for a whole corpus. Steps run in parallel; output order
/// follows the corpus and does not depend on the thread count.
pub fn build_dataset(corpus: &[StepRecord], opts: &BuildOptions) -> Result<BuildOutput, PairError> {
    let run = || -> Vec<Result<Vec<PreferencePair>, PairError>> {
        corpus
            .par_iter()
            .enumerate()
            .map(|(i, s)| build_step(i, s, opts))
            .collect()
    };
    let results = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| PairError::Io {
                path: "<thread pool>".into(),
                msg: e.to_string(),
            })?
            .install(run),
        None => run(),
    };
    let mut out = BuildOutput::default();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => out.pairs.extend(p),
            Err(PairError::SkippedStep { .. }) => out.skipped.push(index),
            Err(e) => {
                return Err(PairError::Step {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::OpKind;
    use crate::sampler::Strategy;

    fn step(html: &str, truth: Action, trajectory: Vec<Action>) -> StepRecord {
        StepRecord {
            intent: "Find a M2 Mac Air laptop".into(),
            raw_html: html.into(),
            trajectory,
            truth,
            split: Split::Train,
            task_id: None,
        }
    }

    const PAGE: &str = r#"<html><body><nav><a href="/">Home</a><a href="/deals">Deals</a></nav>
        <main><div class="search"><input type="text" placeholder="Search"><button>Go</button></div>
        <ul><li><a href="/mac">MacBook Air M2</a></li><li><a href="/pro">MacBook Pro</a></li></ul></main>
        </body></html>"#;

    #[test]
    fn prompt_sections_in_order() {
        let s = step(PAGE, Action::click(4), vec![]);
        let p = prepare_step(&s, &PruneConfig::default(), &PromptTemplate::default(), None).unwrap();
        let tmpl = PromptTemplate::default();
        let idx = |needle: &str| p.prompt.find(needle).unwrap();
        assert!(idx(&tmpl.system_preamble) < idx(&tmpl.instruction_block));
        assert!(idx(&tmpl.instruction_block) < idx(&tmpl.output_format_block));
        assert!(idx(&tmpl.output_format_block) < idx("Task: Find"));
        assert!(idx("Task: Find") < idx("Previous actions:\nNone\n"));
        assert!(idx("Previous actions:") < idx("HTML:\n<html>"));
    }

    #[test]
    fn prompt_view_round_trip() {
        let s = step(PAGE, Action::type_text(2, "m2 air"), vec![Action::click(1), Action::click(0)]);
        let p = prepare_step(&s, &PruneConfig::default(), &PromptTemplate::default(), None).unwrap();
        let v = PromptView::parse(&p.prompt).unwrap();
        assert_eq!(v.task, "Find a M2 Mac Air laptop");
        assert_eq!(v.history, vec!["CLICK [1]", "CLICK [0]"]);
        assert_eq!(v.html, p.pruned.serialize());
        assert_eq!(v.candidate_ids(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(v.element_context(4).unwrap(), r#"<a href="/mac" element_id="4">MacBook Air M2"#);
    }

    #[test]
    fn prompt_is_deterministic() {
        let s = step(PAGE, Action::click(4), vec![Action::click(1)]);
        let cfg = PruneConfig::default();
        let first = prepare_step(&s, &cfg, &PromptTemplate::default(), None).unwrap().prompt;
        let digest = hex::encode(Sha256::digest(first.as_bytes()));
        for _ in 0..100 {
            let again = prepare_step(&s, &cfg, &PromptTemplate::default(), None).unwrap().prompt;
            assert_eq!(hex::encode(Sha256::digest(again.as_bytes())), digest);
        }
    }

    #[test]
    fn prompt_token_count_matches_word_count() {
        let s = step(PAGE, Action::click(4), vec![Action::click(1)]);
        let p = prepare_step(&s, &PruneConfig::default(), &PromptTemplate::default(), None).unwrap();
        // independent count: walk bytes and count whitespace-to-nonwhitespace transitions
        let mut count = 0;
        let mut in_word = false;
        for c in p.prompt.chars() {
            if c.is_whitespace() {
                in_word = false;
            } else if !in_word {
                in_word = true;
                count += 1;
            }
        }
        assert_eq!(whitespace_tokens(&p.prompt), count);
    }

    #[test]
    fn pairs_share_prompt_and_chosen() {
        let s = step(PAGE, Action::type_text(2, "m2 air"), vec![]);
        let scfg = SampleConfig { seed: 5, ..SampleConfig::default() };
        let pairs = build_pairs(&s, &PruneConfig::default(), &scfg, &PromptTemplate::default(), None).unwrap();
        assert_eq!(pairs.len(), 3);
        for (i, p) in pairs.iter().enumerate() {
            assert_eq!(p.prompt, pairs[0].prompt);
            assert_eq!(p.chosen, "TYPE [2] [m2 air]");
            assert_ne!(p.chosen, p.rejected);
            assert_eq!(p.meta.negative_rank, i);
            assert_eq!(p.meta.strategy, "distance");
            let rejected: Action = p.rejected.parse().unwrap();
            assert!(PromptView::parse(&p.prompt).unwrap().candidate_ids().contains(&rejected.element()));
            if rejected.op() != OpKind::Click {
                assert_eq!(rejected.value(), Some("m2 air"));
            }
        }
    }

    #[test]
    fn two_candidates_give_one_pair() {
        let s = step("<div><a>x</a><a>y</a></div>", Action::click(0), vec![]);
        let pairs = build_pairs(&s, &PruneConfig::default(), &SampleConfig::default(), &PromptTemplate::default(), None).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].rejected, "CLICK [1]");
    }

    #[test]
    fn single_candidate_is_skipped() {
        let s = step("<div><a>x</a><p>y</p></div>", Action::click(0), vec![]);
        let err = build_pairs(&s, &PruneConfig::default(), &SampleConfig::default(), &PromptTemplate::default(), None);
        assert_eq!(err, Err(PairError::SkippedStep { candidates: 1 }));
        let s = step("<div><a>x</a></div>", Action::click(3), vec![]);
        let err = build_pairs(&s, &PruneConfig::default(), &SampleConfig::default(), &PromptTemplate::default(), None);
        assert_eq!(err, Err(PairError::UnknownTruthElement(3)));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        assert_eq!(write_dataset(&[], &path).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");

        let s = step(PAGE, Action::click(4), vec![]);
        let pairs = build_pairs(&s, &PruneConfig::default(), &SampleConfig::default(), &PromptTemplate::default(), None).unwrap();
        assert_eq!(write_dataset(&pairs, &path).unwrap(), 3);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
        assert_eq!(read_dataset(&path).unwrap(), pairs);
    }

    #[test]
    fn corpus_json_shape() {
        let line = r#"{"intent":"buy","raw_html":"<a>x</a>","trajectory":["CLICK [0]"],"truth":"TYPE [0] [hi]","split":"CROSS_TASK"}"#;
        let s: StepRecord = serde_json::from_str(line).unwrap();
        assert_eq!(s.truth, Action::type_text(0, "hi"));
        assert_eq!(s.split, Split::CrossTask);
        assert_eq!(s.task_key(), "buy");
        let back = serde_json::to_string(&s).unwrap();
        assert!(back.contains(r#""split":"cross_task""#));
        assert_eq!(step_digest(&s).len(), 64);
    }

    #[test]
    fn build_dataset_orders_and_skips() {
        let corpus = vec![
            step(PAGE, Action::click(4), vec![]),
            step("<div><a>x</a></div>", Action::click(0), vec![]),
            step("<div><a>x</a><a>y</a></div>", Action::click(1), vec![]),
        ];
        let opts = BuildOptions {
            sample: SampleConfig {
                strategy: Strategy::Random,
                seed: 9,
                ..SampleConfig::default()
            },
            ..BuildOptions::default()
        };
        let out = build_dataset(&corpus, &opts).unwrap();
        assert_eq!(out.skipped, vec![1]);
        assert_eq!(out.pairs.len(), 4);
        assert_eq!(out.pairs[3].chosen, "CLICK [1]");
        assert_eq!(out.pairs[0].meta.seed, step_seed(9, 0));

        let bad = vec![step("<div><a>x</a></div>", Action::click(7), vec![])];
        assert!(matches!(build_dataset(&bad, &opts), Err(PairError::Step { index: 0, .. })));
    }
}
