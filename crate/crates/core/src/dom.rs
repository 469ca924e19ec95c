//! Cleaned HTML trees.
//!
//! Raw markup is read by a small error-tolerant parser into an ordered rooted
//! tree of element nodes. Text is folded into the owning element, comments are
//! kept as `#comment` nodes until [`clean`] removes them. Interactable elements
//! carry a `candidate_id`, which the canonical serialization writes as an
//! `element_id="N"` attribute so that serialize/parse is lossless.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

/// Index of a node in [`DomTree::nodes`]; dense and in pre-order.
pub type NodeId = usize;

/// Identifier of an interactable element, referenced by actions.
pub type CandidateId = u32;

/// Attribute name carrying the candidate id in serialized trees.
pub const CANDIDATE_ATTR: &str = "element_id";

/// Tag used for comment nodes.
pub const COMMENT_TAG: &str = "#comment";

const VOID_TAGS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source",
    "track", "wbr",
];

const RAW_TEXT_TAGS: &[&str] = &["script", "style"];

/// Tags dropped, with their subtrees, by [`clean`].
pub const REMOVED_TAGS: &[&str] = &["script", "style", COMMENT_TAG, "meta", "link", "noscript"];

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum DomError {
    #[error("input html is empty")]
    EmptyInput,
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomNode {
    pub node_id: NodeId,
    pub tag: String,
    pub attributes: Vec<(String, String)>,
    pub text: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub candidate_id: Option<CandidateId>,
}

impl DomNode {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn is_comment(&self) -> bool {
        self.tag == COMMENT_TAG
    }
}

/// An immutable, ordered, rooted element tree.
#[derive(Debug, Clone)]
pub struct DomTree {
    nodes: Vec<DomNode>,
    root: NodeId,
    source_digest: String,
    depth: Vec<u32>,
    subtree_size: Vec<usize>,
}

impl PartialEq for DomTree {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.nodes == other.nodes
    }
}

impl Eq for DomTree {}

/// Mutable arena used to assemble a tree in any order. [`TreeBuilder::build`]
/// renumbers the reachable nodes in pre-order.
#[derive(Debug, Default, Clone)]
pub struct TreeBuilder {
    nodes: Vec<DomNode>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a node under `parent` (or as a free node when `None`) and
    /// returns its builder index.
    pub fn add(&mut self, parent: Option<usize>, tag: &str) -> usize {
        let id = self.nodes.len();
        self.nodes.push(DomNode {
            node_id: id,
            tag: tag.to_string(),
            attributes: Vec::new(),
            text: String::new(),
            parent,
            children: Vec::new(),
            candidate_id: None,
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        id
    }

    pub fn set_text(&mut self, id: usize, text: &str) {
        self.nodes[id].text = text.to_string();
    }

    pub fn push_attr(&mut self, id: usize, name: &str, value: &str) {
        self.nodes[id]
            .attributes
            .push((name.to_string(), value.to_string()));
    }

    pub fn set_candidate(&mut self, id: usize, cid: Option<CandidateId>) {
        self.nodes[id].candidate_id = cid;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Finalizes the subtree hanging from `root`.
    pub fn build(self, root: usize) -> DomTree {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            order.push(n);
            for &c in self.nodes[n].children.iter().rev() {
                stack.push(c);
            }
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let mut nodes: Vec<DomNode> = Vec::with_capacity(order.len());
        for (new, &old) in order.iter().enumerate() {
            let src = &self.nodes[old];
            nodes.push(DomNode {
                node_id: new,
                tag: src.tag.clone(),
                attributes: src.attributes.clone(),
                text: src.text.clone(),
                parent: if new == 0 { None } else { src.parent.map(|p| remap[p]) },
                children: src.children.iter().map(|&c| remap[c]).collect(),
                candidate_id: src.candidate_id,
            });
        }
        DomTree::from_nodes(nodes)
    }
}

impl DomTree {
    fn from_nodes(nodes: Vec<DomNode>) -> Self {
        let n = nodes.len();
        let mut depth = vec![0u32; n];
        for i in 1..n {
            if let Some(p) = nodes[i].parent {
                depth[i] = depth[p] + 1;
            }
        }
        let mut subtree_size = vec![1usize; n];
        for i in (1..n).rev() {
            if let Some(p) = nodes[i].parent {
                subtree_size[p] += subtree_size[i];
            }
        }
        let mut tree = DomTree {
            nodes,
            root: 0,
            source_digest: String::new(),
            depth,
            subtree_size,
        };
        tree.source_digest = hex::encode(Sha256::digest(tree.serialize().as_bytes()));
        tree
    }

    pub fn nodes(&self) -> &[DomNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&DomNode, DomError> {
        self.nodes.get(id).ok_or(DomError::UnknownNode(id))
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    /// Number of element nodes (comments excluded).
    pub fn element_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_comment()).count()
    }

    pub fn depth(&self, id: NodeId) -> Result<u32, DomError> {
        self.depth.get(id).copied().ok_or(DomError::UnknownNode(id))
    }

    /// Size of the subtree rooted at `id`, the node itself included.
    pub fn subtree_size(&self, id: NodeId) -> Result<usize, DomError> {
        self.subtree_size
            .get(id)
            .copied()
            .ok_or(DomError::UnknownNode(id))
    }

    /// Half-open pre-order range covered by the subtree of `id`.
    pub fn subtree_range(&self, id: NodeId) -> Result<std::ops::Range<NodeId>, DomError> {
        Ok(id..id + self.subtree_size(id)?)
    }

    /// Candidate elements in document order.
    pub fn candidates(&self) -> impl Iterator<Item = (CandidateId, NodeId)> + '_ {
        self.nodes
            .iter()
            .filter_map(|n| n.candidate_id.map(|c| (c, n.node_id)))
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates().count()
    }

    pub fn node_of_candidate(&self, cid: CandidateId) -> Option<NodeId> {
        self.candidates().find(|&(c, _)| c == cid).map(|(_, n)| n)
    }

    /// Ancestors of `id`, nearest first, `id` excluded.
    pub fn ancestors(&self, id: NodeId) -> Result<Vec<NodeId>, DomError> {
        let mut out = Vec::new();
        let mut cur = self.node(id)?.parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        Ok(out)
    }

    /// Space-joined text of every node in the subtree of `id`.
    pub fn subtree_text(&self, id: NodeId) -> Result<String, DomError> {
        let range = self.subtree_range(id)?;
        let parts: Vec<&str> = self.nodes[range]
            .iter()
            .filter(|n| !n.is_comment() && !n.text.is_empty())
            .map(|n| n.text.as_str())
            .collect();
        Ok(parts.join(" "))
    }

    /// Keeps the nodes flagged in `keep`, which must contain the root and be
    /// closed under taking parents. Candidate ids for which `keep_candidate`
    /// returns false are cleared.
    pub fn retain(&self, keep: &[bool], keep_candidate: impl Fn(CandidateId) -> bool) -> DomTree {
        debug_assert!(keep[self.root]);
        let mut b = TreeBuilder::new();
        let mut map = vec![usize::MAX; self.nodes.len()];
        for n in &self.nodes {
            if !keep[n.node_id] {
                continue;
            }
            let parent = n.parent.map(|p| map[p]);
            debug_assert!(parent.map_or(true, |p| p != usize::MAX));
            let id = b.add(parent, &n.tag);
            map[n.node_id] = id;
            b.nodes[id].attributes = n.attributes.clone();
            b.nodes[id].text = n.text.clone();
            b.nodes[id].candidate_id = n.candidate_id.filter(|&c| keep_candidate(c));
        }
        b.build(0)
    }

    /// Canonical HTML: explicit end tags for non-void elements, attributes in
    /// stored order followed by the candidate marker, text before children.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        if !self.nodes.is_empty() {
            self.write_node(self.root, &mut out);
        }
        out
    }

    fn write_node(&self, id: NodeId, out: &mut String) {
        let n = &self.nodes[id];
        if n.is_comment() {
            out.push_str("<!--");
            out.push_str(&n.text.replace("--", "- -"));
            out.push_str("-->");
            return;
        }
        out.push('<');
        out.push_str(&n.tag);
        for (k, v) in &n.attributes {
            let _ = write!(out, " {}=\"{}\"", k, escape_attr(v));
        }
        if let Some(c) = n.candidate_id {
            let _ = write!(out, " {CANDIDATE_ATTR}=\"{c}\"");
        }
        out.push('>');
        if VOID_TAGS.contains(&n.tag.as_str()) && n.text.is_empty() && n.children.is_empty() {
            return;
        }
        if RAW_TEXT_TAGS.contains(&n.tag.as_str()) {
            out.push_str(&n.text);
        } else {
            out.push_str(&escape_text(&n.text));
        }
        for &c in &n.children {
            self.write_node(c, out);
        }
        out.push_str("</");
        out.push_str(&n.tag);
        out.push('>');
    }

    /// Deepest node that is an ancestor-or-self of both `a` and `b`.
    pub fn lca(&self, a: NodeId, b: NodeId) -> Result<NodeId, DomError> {
        let (mut a, mut b) = (a, b);
        let (mut da, mut db) = (self.depth(a)?, self.depth(b)?);
        while da > db {
            a = self.nodes[a].parent.expect("non-root has parent");
            da -= 1;
        }
        while db > da {
            b = self.nodes[b].parent.expect("non-root has parent");
            db -= 1;
        }
        while a != b {
            a = self.nodes[a].parent.expect("distinct nodes share the root");
            b = self.nodes[b].parent.expect("distinct nodes share the root");
        }
        Ok(a)
    }

    /// Edge count from `a` up to `lca(a, b)` plus from `b` up to it.
    pub fn step_distance(&self, a: NodeId, b: NodeId) -> Result<u32, DomError> {
        let l = self.lca(a, b)?;
        Ok(self.depth[a] + self.depth[b] - 2 * self.depth[l])
    }
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn escape_attr(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('"', "&quot;")
        .replace('<', "&lt;")
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let end = rest[1..]
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '#'))
            .map(|e| e + 1)
            .unwrap_or(rest.len());
        let name = &rest[1..end];
        let decoded = match name {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some('\u{a0}'),
            _ if name.starts_with("#x") || name.starts_with("#X") => {
                u32::from_str_radix(&name[2..], 16).ok().and_then(char::from_u32)
            }
            _ if name.starts_with('#') => name[1..].parse::<u32>().ok().and_then(char::from_u32),
            _ => None,
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[end..];
                if rest.starts_with(';') {
                    rest = &rest[1..];
                }
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Whether an open `top` element is implicitly closed by a new `incoming` start tag.
fn closes_implicitly(top: &str, incoming: &str) -> bool {
    match top {
        "p" => matches!(
            incoming,
            "p" | "div"
                | "ul"
                | "ol"
                | "table"
                | "form"
                | "section"
                | "header"
                | "footer"
                | "nav"
                | "article"
                | "aside"
                | "blockquote"
                | "pre"
                | "hr"
                | "h1"
                | "h2"
                | "h3"
                | "h4"
                | "h5"
                | "h6"
        ),
        "li" => incoming == "li",
        "option" => matches!(incoming, "option" | "optgroup"),
        "dt" | "dd" => matches!(incoming, "dt" | "dd"),
        "tr" => incoming == "tr",
        "td" | "th" => matches!(incoming, "td" | "th" | "tr"),
        _ => false,
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    b: TreeBuilder,
    stack: Vec<usize>,
    texts: Vec<Vec<String>>,
    top_level: Vec<usize>,
    top_text: Vec<String>,
    seen_cids: BTreeSet<CandidateId>,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn push_text(&mut self, t: String) {
        match self.stack.last() {
            Some(&top) => self.texts[top].push(t),
            None => self.top_text.push(t),
        }
    }

    fn open(&mut self, tag: &str) -> usize {
        let parent = self.stack.last().copied();
        let id = self.b.add(parent, tag);
        self.texts.push(Vec::new());
        if parent.is_none() {
            self.top_level.push(id);
        }
        id
    }

    fn run(mut self) -> DomTree {
        while self.pos < self.src.len() {
            let rest = self.rest();
            if rest.starts_with("<!--") {
                let body_end = rest[4..].find("-->");
                let (body, adv) = match body_end {
                    Some(e) => (&rest[4..4 + e], 4 + e + 3),
                    None => (&rest[4..], rest.len()),
                };
                self.pos += adv;
                if !self.stack.is_empty() {
                    let id = self.open(COMMENT_TAG);
                    self.b.set_text(id, &collapse_whitespace(body));
                }
            } else if rest.starts_with("<!") || rest.starts_with("<?") {
                self.pos += rest.find('>').map(|e| e + 1).unwrap_or(rest.len());
            } else if rest.starts_with("</") {
                let close = rest.find('>');
                let name = rest[2..close.unwrap_or(rest.len())]
                    .split_whitespace()
                    .next()
                    .unwrap_or("")
                    .to_ascii_lowercase();
                self.pos += close.map(|e| e + 1).unwrap_or(rest.len());
                if let Some(idx) = self
                    .stack
                    .iter()
                    .rposition(|&n| self.b.nodes[n].tag == name)
                {
                    self.stack.truncate(idx);
                }
            } else if rest.starts_with('<')
                && rest[1..].chars().next().is_some_and(|c| c.is_ascii_alphabetic())
            {
                self.start_tag();
            } else {
                let first = rest.chars().next().map_or(1, char::len_utf8);
                let end = rest[first..]
                    .find('<')
                    .map(|e| e + first)
                    .unwrap_or(rest.len());
                let text = decode_entities(&rest[..end]);
                self.pos += end;
                self.push_text(text);
            }
        }
        self.finish()
    }

    fn start_tag(&mut self) {
        let rest = self.rest();
        let bytes = rest.as_bytes();
        let mut i = 1;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'>' && bytes[i] != b'/'
        {
            i += 1;
        }
        let tag = rest[1..i].to_ascii_lowercase();
        let mut attrs: Vec<(String, String)> = Vec::new();
        let mut self_closing = false;
        loop {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i >= bytes.len() {
                break;
            }
            if bytes[i] == b'>' {
                i += 1;
                break;
            }
            if bytes[i] == b'/' {
                i += 1;
                if i < bytes.len() && bytes[i] == b'>' {
                    self_closing = true;
                    i += 1;
                    break;
                }
                continue;
            }
            let ns = i;
            while i < bytes.len()
                && !bytes[i].is_ascii_whitespace()
                && !matches!(bytes[i], b'=' | b'>' | b'/')
            {
                i += 1;
            }
            let name = rest[ns..i].to_ascii_lowercase();
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            let mut value = String::new();
            if i < bytes.len() && bytes[i] == b'=' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'"' || bytes[i] == b'\'') {
                    let q = bytes[i];
                    let vs = i + 1;
                    let ve = rest[vs..]
                        .find(q as char)
                        .map(|e| vs + e)
                        .unwrap_or(rest.len());
                    value = decode_entities(&rest[vs..ve]);
                    i = (ve + 1).min(rest.len());
                } else {
                    let vs = i;
                    while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'>' {
                        i += 1;
                    }
                    value = decode_entities(&rest[vs..i]);
                }
            }
            if !name.is_empty() && !attrs.iter().any(|(k, _)| *k == name) {
                attrs.push((name, value));
            }
        }
        self.pos += i;

        while let Some(&top) = self.stack.last() {
            if closes_implicitly(&self.b.nodes[top].tag, &tag) {
                self.stack.pop();
            } else {
                break;
            }
        }
        let id = self.open(&tag);
        for (k, v) in attrs {
            if k == CANDIDATE_ATTR {
                match v.trim().parse::<CandidateId>() {
                    Ok(c) if self.seen_cids.insert(c) => self.b.set_candidate(id, Some(c)),
                    _ => {}
                }
            } else {
                self.b.push_attr(id, &k, &v);
            }
        }
        if self_closing || VOID_TAGS.contains(&tag.as_str()) {
            return;
        }
        if RAW_TEXT_TAGS.contains(&tag.as_str()) {
            let rest = self.rest();
            let close = format!("</{tag}");
            let lower = rest.to_ascii_lowercase();
            let end = lower.find(&close).unwrap_or(rest.len());
            self.texts[id].push(rest[..end].to_string());
            self.pos += end;
            let rest = self.rest();
            self.pos += rest.find('>').map(|e| e + 1).unwrap_or(rest.len());
            return;
        }
        self.stack.push(id);
    }

    fn finish(mut self) -> DomTree {
        for (id, parts) in self.texts.iter().enumerate() {
            if self.b.nodes[id].tag == COMMENT_TAG {
                continue;
            }
            self.b.nodes[id].text = collapse_whitespace(&parts.join(" "));
        }
        let stray = collapse_whitespace(&self.top_text.join(" "));
        let root = if self.top_level.len() == 1 && stray.is_empty() {
            self.top_level[0]
        } else {
            let root = self.b.add(None, "html");
            self.b.nodes[root].text = stray;
            let tops = self.top_level.clone();
            for t in tops {
                self.b.nodes[t].parent = Some(root);
                self.b.nodes[root].children.push(t);
            }
            root
        };
        self.b.build(root)
    }
}

/// Parses raw markup with error recovery: unmatched end tags are ignored,
/// unclosed elements end at the end of input, and several elements (`p`,
/// `li`, `option`, table cells) close implicitly. A synthetic `html` root
/// wraps the document when it has several top-level elements or stray text.
pub fn parse_html(raw: &str) -> Result<DomTree, DomError> {
    if raw.trim().is_empty() {
        return Err(DomError::EmptyInput);
    }
    let parser = Parser {
        src: raw,
        pos: 0,
        b: TreeBuilder::new(),
        stack: Vec::new(),
        texts: Vec::new(),
        top_level: Vec::new(),
        top_text: Vec::new(),
        seen_cids: BTreeSet::new(),
    };
    Ok(parser.run())
}

/// Attribute filtering applied by [`clean`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanConfig {
    /// Attribute names to keep, in output order.
    pub keep_attrs: Vec<String>,
    pub max_attr_chars: usize,
    pub max_class_tokens: usize,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            keep_attrs: [
                "id",
                "class",
                "name",
                "title",
                "alt",
                "type",
                "value",
                "role",
                "aria-label",
                "placeholder",
                "href",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            max_attr_chars: 100,
            max_class_tokens: 3,
        }
    }
}

impl CleanConfig {
    pub fn with_keep_attrs<I, S>(attrs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            keep_attrs: attrs.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }
}

/// Removes non-content nodes and unkept attributes. The root is never removed.
pub fn clean(tree: &DomTree, cfg: &CleanConfig) -> DomTree {
    let mut keep = vec![true; tree.len()];
    for n in tree.nodes() {
        if let Some(p) = n.parent {
            if !keep[p] || REMOVED_TAGS.contains(&n.tag.as_str()) {
                keep[n.node_id] = false;
            }
        }
    }
    let mut b = TreeBuilder::new();
    let mut map = vec![usize::MAX; tree.len()];
    for n in tree.nodes() {
        if !keep[n.node_id] {
            continue;
        }
        let id = b.add(n.parent.map(|p| map[p]), &n.tag);
        map[n.node_id] = id;
        b.set_text(id, &collapse_whitespace(&n.text));
        b.set_candidate(id, n.candidate_id);
        for name in &cfg.keep_attrs {
            if let Some(v) = n.attr(name) {
                let v = if name == "class" {
                    v.split_whitespace()
                        .take(cfg.max_class_tokens)
                        .collect::<Vec<_>>()
                        .join(" ")
                } else {
                    v.to_string()
                };
                let v: String = v.chars().take(cfg.max_attr_chars).collect();
                b.push_attr(id, name, &v);
            }
        }
    }
    b.build(0)
}

/// Which elements count as interactable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractableSet {
    pub tags: BTreeSet<String>,
    /// Values of the `role` attribute that make any element interactable.
    pub click_roles: BTreeSet<String>,
}

impl Default for InteractableSet {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            tags: set(&["a", "button", "input", "select", "option", "textarea"]),
            click_roles: set(&[
                "button", "link", "checkbox", "radio", "menuitem", "tab", "option", "switch",
                "combobox", "textbox", "searchbox",
            ]),
        }
    }
}

impl InteractableSet {
    pub fn none() -> Self {
        Self {
            tags: BTreeSet::new(),
            click_roles: BTreeSet::new(),
        }
    }

    pub fn matches(&self, node: &DomNode) -> bool {
        self.tags.contains(&node.tag)
            || node
                .attr("role")
                .is_some_and(|r| self.click_roles.contains(&r.trim().to_ascii_lowercase()))
    }
}

/// Replaces all candidate ids with consecutive ids over interactable nodes
/// in document order.
pub fn assign_candidate_ids(tree: &DomTree, set: &InteractableSet) -> DomTree {
    let mut next: CandidateId = 0;
    let mut b = TreeBuilder::new();
    for n in tree.nodes() {
        let id = b.add(n.parent, &n.tag);
        b.nodes[id].attributes = n.attributes.clone();
        b.nodes[id].text = n.text.clone();
        if !n.is_comment() && set.matches(n) {
            b.set_candidate(id, Some(next));
            next += 1;
        }
    }
    b.build(tree.root())
}

/// Parse, clean with defaults, and assign candidate ids with the default
/// interactable set unless the markup already carries `element_id` markers.
pub fn prepare_tree(raw: &str) -> Result<DomTree, DomError> {
    let cleaned = clean(&parse_html(raw)?, &CleanConfig::default());
    if cleaned.candidate_count() > 0 {
        Ok(cleaned)
    } else {
        Ok(assign_candidate_ids(&cleaned, &InteractableSet::default()))
    }
}
