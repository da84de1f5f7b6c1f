//! Tree-adjoining grammars: elementary trees, the grammar file format,
//! a chart parser over items `[X, i, j, k, l]` and spinal grammar
//! extraction from a treebank.
//!
//! Grammar files hold an optional `start: <label>` header and one
//! elementary tree per line, `name<TAB>logprob<TAB>tree`. In the tree,
//! `(X! )` is a substitution site, `(X* )` the foot of an auxiliary tree and
//! `(X @)` the anchor. An unlexicalized anchor `@` matches tokens equal to
//! its label (its part of speech); `(X @word)` matches the token `word`.

mod extract;
mod parser;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::tree::{markov_label, read_sexps, Sexp, Tree, TreebankError, NEW_PREFIX};

pub use extract::{extract_spinal, tag_gold_tree, HeadRules, TagCorpus};
pub use parser::{
    best_derivation, check_adjunction_soundness, tag_parse, Attachment, Derivation, Operation,
    TagChart, TagParser,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TagError {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Brackets(#[from] TreebankError),
    #[error("tree '{name}': {msg}")]
    Invalid { name: String, msg: String },
    #[error("no head rule for label(s): {0}")]
    MissingHeadRule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Internal,
    /// Preterminal whose leaf is the lexical anchor.
    Anchor,
    /// Substitution site (a leaf).
    Subst,
    /// Foot of an auxiliary tree (a leaf).
    Foot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElemNode {
    pub label: String,
    pub kind: NodeKind,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Introduced by binarizing the elementary tree.
    pub is_new: bool,
}

/// An initial or auxiliary tree. Node 0 is the root; nodes are stored in
/// pre-order.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryTree {
    pub name: String,
    pub logprob: f64,
    pub nodes: Vec<ElemNode>,
    pub anchor: usize,
    pub foot: Option<usize>,
    /// Anchor word; `None` when the anchor matches its own label.
    pub word: Option<String>,
}

impl ElementaryTree {
    /// Parse a bracketed elementary tree.
    pub fn parse(name: &str, logprob: f64, text: &str) -> Result<ElementaryTree, TagError> {
        let mut sexps = read_sexps(text)?;
        if sexps.len() != 1 {
            return Err(invalid(
                name,
                format!("expected one bracketing, found {}", sexps.len()),
            ));
        }
        let mut nodes = Vec::new();
        let mut anchor = Vec::new();
        let mut word = None;
        build_nodes(
            name,
            sexps.pop().unwrap(),
            None,
            &mut nodes,
            &mut anchor,
            &mut word,
        )?;
        if anchor.len() != 1 {
            return Err(invalid(
                name,
                format!("expected exactly one anchor, found {}", anchor.len()),
            ));
        }
        let feet: Vec<usize> = (0..nodes.len())
            .filter(|&i| nodes[i].kind == NodeKind::Foot)
            .collect();
        if feet.len() > 1 {
            return Err(invalid(name, format!("{} foot nodes", feet.len())));
        }
        if let Some(&f) = feet.first() {
            if nodes[f].label != nodes[0].label {
                return Err(invalid(
                    name,
                    format!(
                        "foot label '{}' differs from root label '{}'",
                        nodes[f].label, nodes[0].label
                    ),
                ));
            }
        }
        if matches!(nodes[0].kind, NodeKind::Subst | NodeKind::Foot) {
            return Err(invalid(
                name,
                "root cannot be a substitution or foot node".into(),
            ));
        }
        let t = ElementaryTree {
            name: name.to_string(),
            logprob,
            nodes,
            anchor: anchor[0],
            foot: feet.first().copied(),
            word,
        };
        t.check_logprob()?;
        Ok(t)
    }

    fn check_logprob(&self) -> Result<(), TagError> {
        if !(self.logprob <= 0.0) {
            return Err(invalid(
                &self.name,
                format!("log probability {} must be finite and <= 0", self.logprob),
            ));
        }
        Ok(())
    }

    pub fn is_auxiliary(&self) -> bool {
        self.foot.is_some()
    }

    pub fn root_label(&self) -> &str {
        &self.nodes[0].label
    }

    /// Label of the anchor's preterminal.
    pub fn anchor_label(&self) -> &str {
        &self.nodes[self.anchor].label
    }

    /// The token this tree is indexed under.
    pub fn lexicon_key(&self) -> &str {
        self.word.as_deref().unwrap_or(self.anchor_label())
    }

    /// Same shape, anchored to `word` (or unlexicalized for `None`).
    pub fn lexicalize(&self, word: Option<&str>) -> ElementaryTree {
        ElementaryTree {
            word: word.map(str::to_string),
            ..self.clone()
        }
    }

    /// Bracketed form, e.g. `(S (NP! ) (VP (V @) (S* )))`.
    pub fn to_bracket(&self) -> String {
        let mut s = String::new();
        self.write_node(0, &mut s);
        s
    }

    fn write_node(&self, idx: usize, out: &mut String) {
        let n = &self.nodes[idx];
        match n.kind {
            NodeKind::Subst => write!(out, "({}! )", n.label).unwrap(),
            NodeKind::Foot => write!(out, "({}* )", n.label).unwrap(),
            NodeKind::Anchor => {
                write!(out, "({} @{})", n.label, self.word.as_deref().unwrap_or("")).unwrap()
            }
            NodeKind::Internal => {
                write!(out, "({}", n.label).unwrap();
                for &c in &n.children {
                    out.push(' ');
                    self.write_node(c, out);
                }
                out.push(')');
            }
        }
    }

    /// The tree with anchor and substitution and foot sites as plain nodes,
    /// for display.
    pub fn to_tree(&self) -> Tree {
        fn go(t: &ElementaryTree, idx: usize) -> Tree {
            let n = &t.nodes[idx];
            match n.kind {
                NodeKind::Subst => Tree::leaf(format!("{}!", n.label)),
                NodeKind::Foot => Tree::leaf(format!("{}*", n.label)),
                NodeKind::Anchor => Tree::node(n.label.clone(), vec![Tree::leaf(t.lexicon_key())]),
                NodeKind::Internal => Tree {
                    label: n.label.clone(),
                    children: n.children.iter().map(|&c| go(t, c)).collect(),
                    is_new: n.is_new,
                },
            }
        }
        go(self, 0)
    }
}

fn invalid(name: &str, msg: String) -> TagError {
    TagError::Invalid {
        name: name.to_string(),
        msg,
    }
}

fn build_nodes(
    name: &str,
    s: Sexp,
    parent: Option<usize>,
    nodes: &mut Vec<ElemNode>,
    anchors: &mut Vec<usize>,
    word: &mut Option<String>,
) -> Result<usize, TagError> {
    let (label, children) = match s {
        Sexp::Atom(a) => {
            // Bare `NP!` / `S*` leaves are accepted as shorthand.
            if a.ends_with('!') || a.ends_with('*') {
                (a, Vec::new())
            } else {
                return Err(invalid(name, format!("unexpected terminal '{a}'")));
            }
        }
        Sexp::List {
            label: Some(l),
            children,
            ..
        } => (l, children),
        Sexp::List { label: None, .. } => return Err(invalid(name, "node without label".into())),
    };
    let idx = nodes.len();
    let is_new = label.starts_with(NEW_PREFIX);
    if children.is_empty() {
        let (base, kind) = if let Some(b) = label.strip_suffix('!') {
            (b, NodeKind::Subst)
        } else if let Some(b) = label.strip_suffix('*') {
            (b, NodeKind::Foot)
        } else {
            return Err(invalid(
                name,
                format!("leaf node '{label}' must end in '!' or '*'"),
            ));
        };
        if base.is_empty() {
            return Err(invalid(name, "empty label".into()));
        }
        nodes.push(ElemNode {
            label: base.to_string(),
            kind,
            children: Vec::new(),
            parent,
            is_new: false,
        });
        return Ok(idx);
    }
    if let [Sexp::Atom(a)] = children.as_slice() {
        if let Some(w) = a.strip_prefix('@') {
            nodes.push(ElemNode {
                label,
                kind: NodeKind::Anchor,
                children: Vec::new(),
                parent,
                is_new: false,
            });
            anchors.push(idx);
            *word = if w.is_empty() {
                None
            } else {
                Some(w.to_string())
            };
            return Ok(idx);
        }
    }
    nodes.push(ElemNode {
        label,
        kind: NodeKind::Internal,
        children: Vec::new(),
        parent,
        is_new,
    });
    for c in children {
        if matches!(&c, Sexp::Atom(a) if a.starts_with('@')) {
            return Err(invalid(
                name,
                "the anchor '@' must be the only child of its node".into(),
            ));
        }
        let ci = build_nodes(name, c, Some(idx), nodes, anchors, word)?;
        nodes[idx].children.push(ci);
    }
    Ok(idx)
}

/// A weighted TAG. Logprobs are weights and need not normalize, but must
/// not be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TagGrammar {
    start: String,
    trees: Vec<ElementaryTree>,
    lexicon: BTreeMap<String, Vec<usize>>,
}

impl TagGrammar {
    pub fn new(
        start: impl Into<String>,
        trees: Vec<ElementaryTree>,
    ) -> Result<TagGrammar, TagError> {
        let mut lexicon: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (idx, t) in trees.iter().enumerate() {
            t.check_logprob()?;
            lexicon
                .entry(t.lexicon_key().to_string())
                .or_default()
                .push(idx);
        }
        Ok(TagGrammar {
            start: start.into(),
            trees,
            lexicon,
        })
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn trees(&self) -> &[ElementaryTree] {
        &self.trees
    }

    pub fn tree_index(&self, name: &str) -> Option<usize> {
        self.trees.iter().position(|t| t.name == name)
    }

    /// Trees anchored by `token`, in file order.
    pub fn lexicon(&self, token: &str) -> &[usize] {
        self.lexicon.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("start: {}\n", self.start);
        for t in &self.trees {
            writeln!(out, "{}\t{}\t{}", t.name, t.logprob, t.to_bracket()).unwrap();
        }
        out
    }
}

/// Read a grammar file. Lines starting with `#` are comments. Without a
/// `start:` header the start label is the root label of the first initial
/// tree.
pub fn read_tag_grammar(text: &str) -> Result<TagGrammar, TagError> {
    let mut start = None;
    let mut trees = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fmt = |msg: String| TagError::Format { line, msg };
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        if let Some(s) = raw.strip_prefix("start:") {
            start = Some(s.trim().to_string());
            continue;
        }
        let fields: Vec<&str> = raw.splitn(3, '\t').collect();
        let [name, lp, tree] = fields.as_slice() else {
            return Err(fmt("expected 'name<TAB>logprob<TAB>tree'".into()));
        };
        let logprob: f64 = lp
            .trim()
            .parse()
            .map_err(|_| fmt(format!("bad logprob '{lp}'")))?;
        let t =
            ElementaryTree::parse(name.trim(), logprob, tree).map_err(|e| fmt(e.to_string()))?;
        trees.push(t);
    }
    let start = match start {
        Some(s) => s,
        None => trees
            .iter()
            .find(|t| !t.is_auxiliary())
            .map(|t| t.root_label().to_string())
            .ok_or(TagError::Format {
                line: 1,
                msg: "no start header and no initial tree".into(),
            })?,
    };
    TagGrammar::new(start, trees)
}

/// Right-binarize every node of every elementary tree that has more than
/// two children. Intermediate nodes are flagged `is_new`; adjunction is
/// not possible at them.
pub fn binarize_tag_grammar(g: &TagGrammar, h: usize) -> TagGrammar {
    let trees = g.trees.iter().map(|t| binarize_elementary(t, h)).collect();
    TagGrammar::new(g.start.clone(), trees).expect("binarization keeps weights")
}

fn binarize_elementary(t: &ElementaryTree, h: usize) -> ElementaryTree {
    let mut nodes = Vec::new();
    let mut anchor = 0;
    let mut foot = None;

    fn copy(
        t: &ElementaryTree,
        idx: usize,
        parent: Option<usize>,
        h: usize,
        nodes: &mut Vec<ElemNode>,
        anchor: &mut usize,
        foot: &mut Option<usize>,
    ) -> usize {
        let src = &t.nodes[idx];
        let me = nodes.len();
        nodes.push(ElemNode {
            children: Vec::new(),
            parent,
            ..src.clone()
        });
        match src.kind {
            NodeKind::Anchor => *anchor = me,
            NodeKind::Foot => *foot = Some(me),
            _ => {}
        }
        let kids = &src.children;
        if kids.len() <= 2 {
            for &c in kids {
                let ci = copy(t, c, Some(me), h, nodes, anchor, foot);
                nodes[me].children.push(ci);
            }
            return me;
        }
        let labels: Vec<&str> = kids.iter().map(|&c| t.nodes[c].label.as_str()).collect();
        let base = crate::tree::base_label(&src.label).to_string();
        let mut cur = me;
        for (j, &c) in kids.iter().enumerate() {
            let remaining = kids.len() - j;
            if remaining == 1 {
                let ci = copy(t, c, Some(cur), h, nodes, anchor, foot);
                nodes[cur].children.push(ci);
                break;
            }
            let ci = copy(t, c, Some(cur), h, nodes, anchor, foot);
            nodes[cur].children.push(ci);
            if remaining > 2 {
                let ctx = &labels[(j + 1).saturating_sub(h)..j + 1];
                let new = nodes.len();
                nodes.push(ElemNode {
                    label: markov_label(&base, ctx),
                    kind: NodeKind::Internal,
                    children: Vec::new(),
                    parent: Some(cur),
                    is_new: true,
                });
                nodes[cur].children.push(new);
                cur = new;
            }
        }
        me
    }

    copy(t, 0, None, h, &mut nodes, &mut anchor, &mut foot);
    ElementaryTree {
        name: t.name.clone(),
        logprob: t.logprob,
        nodes,
        anchor,
        foot,
        word: t.word.clone(),
    }
}
