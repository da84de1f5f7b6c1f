//! Constituent trees, Penn-Treebank bracket I/O and (de)binarization.

use std::fmt;

use thiserror::Error;

/// Prefix reserved for nonterminals introduced by binarization.
pub const NEW_PREFIX: char = '@';

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreebankError {
    #[error("unbalanced at line {line}")]
    Unbalanced { line: usize },
    #[error("line {line}: empty constituent '{label}'")]
    EmptyConstituent { line: usize, label: String },
    #[error("line {line}: label '{label}' uses the reserved '@' prefix")]
    ReservedLabel { line: usize, label: String },
    #[error("line {line}: expected a label after '('")]
    MissingLabel { line: usize },
    #[error("line {line}: token outside of any bracketing: '{token}'")]
    StrayToken { line: usize, token: String },
}

/// A labeled ordered tree. Leaves (no children) are the tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tree {
    pub label: String,
    pub children: Vec<Tree>,
    /// Set on nodes introduced by binarization.
    pub is_new: bool,
}

/// Which side of an n-ary node the binarization chain grows on.
///
/// `Right` produces `(A B (@A[B] C D))`: intermediate nodes share their end
/// with the parent and start at a child boundary. `Left` produces
/// `(A (@A[D] B C) D)`: intermediates share the start and end at a child
/// boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Factoring {
    Left,
    #[default]
    Right,
}

impl std::str::FromStr for Factoring {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "left" => Ok(Factoring::Left),
            "right" => Ok(Factoring::Right),
            other => Err(format!("unknown factoring '{other}' (expected left|right)")),
        }
    }
}

impl Tree {
    pub fn leaf(label: impl Into<String>) -> Tree {
        Tree {
            label: label.into(),
            children: Vec::new(),
            is_new: false,
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Tree {
        Tree {
            label: label.into(),
            children,
            is_new: false,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// A node whose only child is a leaf.
    pub fn is_preterminal(&self) -> bool {
        self.children.len() == 1 && self.children[0].is_leaf()
    }

    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        if self.is_leaf() {
            out.push(&self.label);
        } else {
            for c in &self.children {
                c.collect_leaves(out);
            }
        }
    }

    /// Labels of the nodes directly above the leaves, in order. Only
    /// meaningful for trees with a preterminal layer.
    pub fn preterminals(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_preterminals(&mut out);
        out
    }

    fn collect_preterminals<'a>(&'a self, out: &mut Vec<&'a str>) {
        if self.is_preterminal() {
            out.push(&self.label);
        } else {
            for c in &self.children {
                c.collect_preterminals(out);
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(Tree::num_leaves).sum()
        }
    }

    /// Every internal node as `(label, start, end, is_new)`, in pre-order.
    /// Spans are end-exclusive token offsets.
    pub fn spans(&self) -> Vec<(&str, usize, usize, bool)> {
        let mut out = Vec::new();
        self.collect_spans(0, &mut out);
        out
    }

    fn collect_spans<'a>(
        &'a self,
        start: usize,
        out: &mut Vec<(&'a str, usize, usize, bool)>,
    ) -> usize {
        if self.is_leaf() {
            return start + 1;
        }
        let slot = out.len();
        out.push((&self.label, start, start, self.is_new));
        let mut pos = start;
        for c in &self.children {
            pos = c.collect_spans(pos, out);
        }
        out[slot].2 = pos;
        pos
    }

    /// Replace the leaves left to right with `tokens`. Panics if the counts differ.
    pub fn with_leaves<S: AsRef<str>>(&self, tokens: &[S]) -> Tree {
        assert_eq!(self.num_leaves(), tokens.len(), "leaf count mismatch");
        let mut it = tokens.iter();
        self.map_leaves(&mut |_| it.next().unwrap().as_ref().to_string())
    }

    pub(crate) fn map_leaves(&self, f: &mut impl FnMut(&str) -> String) -> Tree {
        if self.is_leaf() {
            Tree {
                label: f(&self.label),
                children: Vec::new(),
                is_new: self.is_new,
            }
        } else {
            Tree {
                label: self.label.clone(),
                children: self.children.iter().map(|c| c.map_leaves(f)).collect(),
                is_new: self.is_new,
            }
        }
    }

    /// Replace every word by its preterminal label, so that `(DT the)`
    /// becomes `(DT DT)`. Used when POS tags serve as terminals.
    pub fn pos_as_terminals(&self) -> Tree {
        if self.is_preterminal() {
            return Tree {
                label: self.label.clone(),
                children: vec![Tree::leaf(self.label.clone())],
                is_new: self.is_new,
            };
        }
        Tree {
            label: self.label.clone(),
            children: self.children.iter().map(Tree::pos_as_terminals).collect(),
            is_new: self.is_new,
        }
    }

    pub fn to_ptb(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_leaf() {
            return f.write_str(&self.label);
        }
        write!(f, "({}", self.label)?;
        for c in &self.children {
            write!(f, " {c}")?;
        }
        f.write_str(")")
    }
}

/// Untyped s-expression node as read from bracketed text. Nodes may have
/// zero children (the TAG grammar format uses that for foot and
/// substitution nodes).
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Sexp {
    Atom(String),
    List {
        label: Option<String>,
        children: Vec<Sexp>,
        line: usize,
    },
}

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Open(usize),
    Close(usize),
    Atom(&'a str, usize),
}

fn tokenize(text: &str) -> Vec<Tok<'_>> {
    let mut toks = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let mut start: Option<usize> = None;
        for (idx, ch) in line.char_indices() {
            match ch {
                '(' | ')' => {
                    if let Some(s) = start.take() {
                        toks.push(Tok::Atom(&line[s..idx], line_no));
                    }
                    toks.push(if ch == '(' {
                        Tok::Open(line_no)
                    } else {
                        Tok::Close(line_no)
                    });
                }
                c if c.is_whitespace() => {
                    if let Some(s) = start.take() {
                        toks.push(Tok::Atom(&line[s..idx], line_no));
                    }
                }
                _ => {
                    if start.is_none() {
                        start = Some(idx);
                    }
                }
            }
        }
        if let Some(s) = start {
            toks.push(Tok::Atom(&line[s..], line_no));
        }
    }
    toks
}

/// Parse a sequence of top-level bracketings.
pub(crate) fn read_sexps(text: &str) -> Result<Vec<Sexp>, TreebankError> {
    let toks = tokenize(text);
    let mut out = Vec::new();
    // stack of open lists: (label, children, line)
    let mut stack: Vec<(Option<String>, Vec<Sexp>, usize)> = Vec::new();
    let mut expect_label = false;
    let mut last_line = 1;
    for tok in toks {
        match tok {
            Tok::Open(line) => {
                last_line = line;
                stack.push((None, Vec::new(), line));
                expect_label = true;
            }
            Tok::Atom(a, line) => {
                last_line = line;
                let Some(top) = stack.last_mut() else {
                    return Err(TreebankError::StrayToken {
                        line,
                        token: a.to_string(),
                    });
                };
                if expect_label {
                    top.0 = Some(a.to_string());
                } else {
                    top.1.push(Sexp::Atom(a.to_string()));
                }
                expect_label = false;
            }
            Tok::Close(line) => {
                last_line = line;
                expect_label = false;
                let Some((label, children, open_line)) = stack.pop() else {
                    return Err(TreebankError::Unbalanced { line });
                };
                let node = Sexp::List {
                    label,
                    children,
                    line: open_line,
                };
                match stack.last_mut() {
                    Some(parent) => parent.1.push(node),
                    None => out.push(node),
                }
            }
        }
    }
    if !stack.is_empty() {
        return Err(TreebankError::Unbalanced { line: last_line });
    }
    Ok(out)
}

fn sexp_to_tree(s: Sexp) -> Result<Tree, TreebankError> {
    match s {
        Sexp::Atom(a) => Ok(Tree::leaf(a)),
        Sexp::List {
            label,
            children,
            line,
        } => {
            let Some(label) = label else {
                return Err(TreebankError::MissingLabel { line });
            };
            if children.is_empty() {
                return Err(TreebankError::EmptyConstituent { line, label });
            }
            if label.starts_with(NEW_PREFIX) {
                return Err(TreebankError::ReservedLabel { line, label });
            }
            let children = children
                .into_iter()
                .map(sexp_to_tree)
                .collect::<Result<_, _>>()?;
            Ok(Tree::node(label, children))
        }
    }
}

/// Strip `( ... )` wrappers with an empty label around a single tree.
fn unwrap_outer(mut s: Sexp) -> Sexp {
    loop {
        match s {
            Sexp::List {
                label: None,
                mut children,
                ..
            } if children.len() == 1 => {
                s = children.pop().unwrap();
            }
            other => return other,
        }
    }
}

/// Read Penn-Treebank bracketed trees. All nodes come back with
/// `is_new == false`; labels with the reserved `@` prefix are rejected.
pub fn read_ptb(text: &str) -> Result<Vec<Tree>, TreebankError> {
    read_sexps(text)?
        .into_iter()
        .map(|s| sexp_to_tree(unwrap_outer(s)))
        .collect()
}

/// Read trees that may contain binarization nodes; `@`-prefixed internal
/// labels are accepted and flagged `is_new`.
pub fn read_ptb_binarized(text: &str) -> Result<Vec<Tree>, TreebankError> {
    fn convert(s: Sexp) -> Result<Tree, TreebankError> {
        match s {
            Sexp::Atom(a) => Ok(Tree::leaf(a)),
            Sexp::List {
                label,
                children,
                line,
            } => {
                let Some(label) = label else {
                    return Err(TreebankError::MissingLabel { line });
                };
                if children.is_empty() {
                    return Err(TreebankError::EmptyConstituent { line, label });
                }
                let is_new = label.starts_with(NEW_PREFIX);
                let children = children
                    .into_iter()
                    .map(convert)
                    .collect::<Result<_, _>>()?;
                Ok(Tree {
                    label,
                    children,
                    is_new,
                })
            }
        }
    }
    read_sexps(text)?
        .into_iter()
        .map(|s| convert(unwrap_outer(s)))
        .collect()
}

pub fn write_ptb(trees: &[Tree]) -> String {
    let mut out = String::new();
    for t in trees {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

/// Label for an intermediate binarization node of `parent` whose
/// markovization context is `context`.
pub fn markov_label(parent: &str, context: &[&str]) -> String {
    format!("{NEW_PREFIX}{parent}[{}]", context.join("|"))
}

/// Strip binarization decoration: `@NP[DT|JJ]` becomes `NP`.
pub fn base_label(label: &str) -> &str {
    match label.strip_prefix(NEW_PREFIX) {
        Some(rest) => rest.find('[').map_or(rest, |b| &rest[..b]),
        None => label,
    }
}

/// Right-binarize with horizontal markovization order `h`.
pub fn binarize(t: &Tree, h: usize) -> Tree {
    binarize_with(t, h, Factoring::Right)
}

/// Binarize every node with more than two children into a chain of
/// `is_new` intermediate nodes labeled `@A[σ]`, where σ holds the labels
/// of the (at most `h`) siblings nearest to the intermediate node that it
/// does not cover.
pub fn binarize_with(t: &Tree, h: usize, factoring: Factoring) -> Tree {
    if t.is_leaf() {
        return t.clone();
    }
    let children: Vec<Tree> = t
        .children
        .iter()
        .map(|c| binarize_with(c, h, factoring))
        .collect();
    if children.len() <= 2 {
        return Tree {
            label: t.label.clone(),
            children,
            is_new: t.is_new,
        };
    }
    let labels: Vec<&str> = t.children.iter().map(|c| c.label.as_str()).collect();
    let parent = base_label(&t.label);
    let m = children.len();
    match factoring {
        Factoring::Right => {
            // Build from the right: the last two children form the deepest node.
            let mut iter = children.into_iter().rev();
            let last = iter.next().unwrap();
            let second = iter.next().unwrap();
            // The node covering children j..m has consumed labels 0..j.
            let j = m - 2;
            let ctx = &labels[j.saturating_sub(h)..j];
            let mut acc = Tree {
                label: markov_label(parent, ctx),
                children: vec![second, last],
                is_new: true,
            };
            for (offset, child) in iter.enumerate() {
                let j = m - 3 - offset;
                if j == 0 {
                    return Tree {
                        label: t.label.clone(),
                        children: vec![child, acc],
                        is_new: t.is_new,
                    };
                }
                let ctx = &labels[j.saturating_sub(h)..j];
                acc = Tree {
                    label: markov_label(parent, ctx),
                    children: vec![child, acc],
                    is_new: true,
                };
            }
            unreachable!("m > 2 guarantees the loop reaches j == 0")
        }
        Factoring::Left => {
            let mut iter = children.into_iter();
            let first = iter.next().unwrap();
            let second = iter.next().unwrap();
            // The node covering children 0..j has the labels j..m still to come.
            let ctx = &labels[2..h.saturating_add(2).min(m)];
            let mut acc = Tree {
                label: markov_label(parent, ctx),
                children: vec![first, second],
                is_new: true,
            };
            for (offset, child) in iter.enumerate() {
                let j = 3 + offset;
                if j == m {
                    return Tree {
                        label: t.label.clone(),
                        children: vec![acc, child],
                        is_new: t.is_new,
                    };
                }
                let ctx = &labels[j..h.saturating_add(j).min(m)];
                acc = Tree {
                    label: markov_label(parent, ctx),
                    children: vec![acc, child],
                    is_new: true,
                };
            }
            unreachable!("m > 2 guarantees the loop reaches j == m")
        }
    }
}

/// Splice out every `is_new` node, re-attaching its children in order.
pub fn debinarize(t: &Tree) -> Tree {
    fn splice(t: &Tree, out: &mut Vec<Tree>) {
        if t.is_new {
            for c in &t.children {
                splice(c, out);
            }
        } else {
            out.push(debinarize(t));
        }
    }
    if t.is_leaf() {
        return t.clone();
    }
    let mut children = Vec::with_capacity(t.children.len());
    for c in &t.children {
        splice(c, &mut children);
    }
    Tree {
        label: t.label.clone(),
        children,
        is_new: t.is_new,
    }
}
