//! Independent reference implementations and generators shared by the
//! oracle, property and acceptance tests. Nothing here calls the parsers.

#![allow(dead_code)]

use std::collections::HashMap;

use chartcons::tag::{binarize_tag_grammar, read_tag_grammar, NodeKind, TagGrammar};
use chartcons::{BeginEndConstraints, NtId, Pcfg, Rhs, Tree};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const TERMINALS: [&str; 3] = ["a", "b", "c"];

/// A random binarized PCFG over [`TERMINALS`] with unary rules (cycles
/// included) and binarization intermediates. Weights are arbitrary
/// negative logprobs.
pub fn random_pcfg<R: Rng>(rng: &mut R) -> Pcfg {
    let plain = rng.random_range(2..=4);
    let new = rng.random_range(0..=2);
    let mut names: Vec<String> = (0..plain).map(|i| format!("N{i}")).collect();
    names.extend((0..new).map(|i| format!("@N0[N{i}]")));
    let mut b = Pcfg::builder();
    let lp = |rng: &mut R| -rng.random_range(0.05..3.0);
    for name in &names {
        for t in TERMINALS {
            if rng.random_bool(0.5) {
                b.add_terminal_rule(name, t, lp(rng));
            }
        }
        for child in &names {
            if child != name && rng.random_bool(0.25) {
                b.add_unary_rule(name, child, lp(rng));
            }
        }
        for _ in 0..rng.random_range(1..=4) {
            let l = names.choose(rng).unwrap();
            let r = names.choose(rng).unwrap();
            b.add_binary_rule(name, l, r, lp(rng));
        }
    }
    b.build("N0")
}

pub fn random_sentence<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| TERMINALS.choose(rng).unwrap().to_string())
        .collect()
}

/// Random begin/end constraints for a sentence of length `n`.
pub fn random_constraints<R: Rng>(rng: &mut R, n: usize) -> BeginEndConstraints {
    let p = rng.random_range(0.1..0.7);
    let begin: Vec<usize> = (0..n.saturating_sub(1))
        .filter(|_| rng.random_bool(p))
        .collect();
    let end: Vec<usize> = (2..=n).filter(|_| rng.random_bool(p)).collect();
    BeginEndConstraints::new(n, begin, end).unwrap()
}

/// Viterbi scores of every derivable `(i, k, A)` by fixpoint relaxation
/// over all spans and rules until nothing improves.
pub fn brute_force_cky(g: &Pcfg, tokens: &[String]) -> HashMap<(usize, usize, NtId), f64> {
    let n = tokens.len();
    let mut best: HashMap<(usize, usize, NtId), f64> = HashMap::new();
    let get = |m: &HashMap<(usize, usize, NtId), f64>, key| {
        m.get(&key).copied().unwrap_or(f64::NEG_INFINITY)
    };
    loop {
        let mut changed = false;
        for w in 1..=n {
            for i in 0..=n - w {
                let k = i + w;
                for r in g.rules() {
                    let cand = match r.rhs {
                        Rhs::Terminal(t) if w == 1 && g.terminal(t) == tokens[i] => r.logprob,
                        Rhs::Terminal(_) => f64::NEG_INFINITY,
                        Rhs::Unary(b) => get(&best, (i, k, b)) + r.logprob,
                        Rhs::Binary(b, c) => (i + 1..k)
                            .map(|j| get(&best, (i, j, b)) + get(&best, (j, k, c)) + r.logprob)
                            .fold(f64::NEG_INFINITY, f64::max),
                    };
                    if cand > get(&best, (i, k, r.lhs)) {
                        best.insert((i, k, r.lhs), cand);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return best;
        }
    }
}

/// Small TAG grammars exercising substitution, adjunction at internal,
/// root and anchor nodes, wrapping auxiliary trees, stacked adjunction,
/// ternary nodes and unlexicalized anchors.
pub const SUITE: [(&str, &str); 4] = [
    (
        "basic",
        "start: S\n\
         intrans\t-0.1\t(S (NP! ) (VP (V @sleeps)))\n\
         trans\t-0.7\t(S (NP! ) (V @sees) (NP! ))\n\
         name\t-0.2\t(NP (N @john))\n\
         det\t-0.5\t(NP (D @the) (N! ))\n\
         noun\t-0.3\t(N @dog)\n\
         pre\t-1.1\t(VP (ADV @often) (VP* ))\n\
         post\t-1.3\t(VP (VP* ) (ADV @often))\n",
    ),
    (
        "wrapping",
        "start: S\n\
         e\t-0.2\t(S (E @e))\n\
         wrap\t-0.6\t(S (A @a) (S* ) (B! ))\n\
         b\t-0.1\t(B @b)\n\
         right\t-0.4\t(S (S* ) (C @c))\n",
    ),
    (
        "ambiguous",
        "start: S\n\
         pair\t-0.5\t(S (S! ) (P @p) (S! ))\n\
         w\t-0.3\t(S (W @w))\n\
         q\t-0.8\t(S (S* ) (Q @q))\n\
         r\t-0.4\t(W (R @r) (W* ))\n",
    ),
    (
        "pos",
        "start: S\n\
         verb\t-0.4\t(S (NP! ) (VP (V @) (NP! )))\n\
         bare\t-0.2\t(NP (N @))\n\
         det\t-0.5\t(NP (D! ) (N @))\n\
         d\t-0.1\t(D @)\n\
         npp\t-0.9\t(NP (NP* ) (PP (P @) (NP! )))\n\
         vpp\t-1.0\t(VP (VP* ) (PP (P @) (NP! )))\n",
    ),
];

/// Every suite grammar as written and right-binarized with markovization
/// orders 1 and 2.
pub fn suite_grammars() -> Vec<(String, TagGrammar)> {
    let mut out = Vec::new();
    for (name, text) in SUITE {
        let g = read_tag_grammar(text).unwrap();
        out.push((format!("{name}/bin1"), binarize_tag_grammar(&g, 1)));
        out.push((format!("{name}/bin2"), binarize_tag_grammar(&g, 2)));
        out.push((name.to_string(), g));
    }
    out
}

/// Tokens that anchor some tree of `g`, sorted.
pub fn alphabet(g: &TagGrammar) -> Vec<String> {
    let mut a: Vec<String> = g
        .trees()
        .iter()
        .map(|t| t.lexicon_key().to_string())
        .collect();
    a.sort();
    a.dedup();
    a
}

const FOOT: &str = "\u{0}foot";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Sym {
    Tok(String),
    Foot,
}

/// Derived trees of one node, grouped by yield, each with its best score.
type Table = HashMap<Vec<Sym>, HashMap<Tree, f64>>;

fn tokens_in(y: &[Sym]) -> usize {
    y.iter().filter(|s| matches!(s, Sym::Tok(_))).count()
}

fn add(t: &mut Table, y: Vec<Sym>, tree: Tree, score: f64) {
    let e = t
        .entry(y)
        .or_default()
        .entry(tree)
        .or_insert(f64::NEG_INFINITY);
    if score > *e {
        *e = score;
    }
}

fn plug(t: &Tree, sub: &Tree) -> Tree {
    if t.is_leaf() && t.label == FOOT {
        return sub.clone();
    }
    Tree {
        label: t.label.clone(),
        children: t.children.iter().map(|c| plug(c, sub)).collect(),
        is_new: t.is_new,
    }
}

fn splice(outer: &[Sym], inner: &[Sym]) -> Vec<Sym> {
    let mut out = Vec::with_capacity(outer.len() + inner.len());
    for s in outer {
        match s {
            Sym::Foot => out.extend(inner.iter().cloned()),
            tok => out.push(tok.clone()),
        }
    }
    out
}

/// Best derived tree per string, for every string of at most `max_len`
/// tokens derivable from `g`: all derived trees are enumerated by
/// fixpoint iteration over per-node tables of derived trees, allowing at
/// most one adjunction per adjoinable node.
pub struct TagOracle {
    /// String to (best score, debinarized trees reaching it).
    pub strings: HashMap<Vec<String>, (f64, Vec<Tree>)>,
}

impl TagOracle {
    pub fn new(g: &TagGrammar, max_len: usize) -> TagOracle {
        let trees = g.trees();
        // Top table of every tree's root from the previous round.
        let mut roots: Vec<Table> = vec![Table::new(); trees.len()];
        loop {
            let mut next: Vec<Table> = Vec::with_capacity(trees.len());
            for ti in 0..trees.len() {
                next.push(Self::top(g, ti, 0, &roots, max_len));
            }
            let same = next.iter().zip(&roots).all(|(a, b)| a == b);
            roots = next;
            if same {
                break;
            }
        }
        let mut strings: HashMap<Vec<String>, (f64, Vec<Tree>)> = HashMap::new();
        for (ti, t) in trees.iter().enumerate() {
            if t.is_auxiliary() || t.root_label() != g.start() {
                continue;
            }
            for (y, derived) in &roots[ti] {
                let toks: Vec<String> = y
                    .iter()
                    .map(|s| match s {
                        Sym::Tok(w) => w.clone(),
                        Sym::Foot => unreachable!("initial trees have no foot"),
                    })
                    .collect();
                for (tree, &score) in derived {
                    let e = strings
                        .entry(toks.clone())
                        .or_insert((f64::NEG_INFINITY, Vec::new()));
                    let tree = chartcons::debinarize(tree);
                    if score > e.0 + 1e-9 {
                        *e = (score, vec![tree]);
                    } else if (score - e.0).abs() <= 1e-9 && !e.1.contains(&tree) {
                        e.1.push(tree);
                    }
                }
            }
        }
        TagOracle { strings }
    }

    fn bottom(g: &TagGrammar, ti: usize, ni: usize, roots: &[Table], max_len: usize) -> Table {
        let t = &g.trees()[ti];
        let node = &t.nodes[ni];
        let mut out = Table::new();
        match node.kind {
            NodeKind::Anchor => {
                let w = t.lexicon_key().to_string();
                add(
                    &mut out,
                    vec![Sym::Tok(w.clone())],
                    Tree::node(node.label.clone(), vec![Tree::leaf(w)]),
                    t.logprob,
                );
            }
            NodeKind::Foot => add(&mut out, vec![Sym::Foot], Tree::leaf(FOOT), 0.0),
            NodeKind::Subst => {
                for (oi, o) in g.trees().iter().enumerate() {
                    if !o.is_auxiliary() && o.root_label() == node.label {
                        for (y, ds) in &roots[oi] {
                            for (tree, &s) in ds {
                                add(&mut out, y.clone(), tree.clone(), s);
                            }
                        }
                    }
                }
            }
            NodeKind::Internal => {
                let mut acc: Vec<(Vec<Sym>, Vec<Tree>, f64)> = vec![(Vec::new(), Vec::new(), 0.0)];
                for &c in &node.children {
                    let ct = Self::top(g, ti, c, roots, max_len);
                    let mut grown = Vec::new();
                    for (y, kids, s) in &acc {
                        for (cy, ds) in &ct {
                            if tokens_in(y) + tokens_in(cy) > max_len {
                                continue;
                            }
                            for (tree, &cs) in ds {
                                let mut y2 = y.clone();
                                y2.extend(cy.iter().cloned());
                                let mut k2 = kids.clone();
                                k2.push(tree.clone());
                                grown.push((y2, k2, s + cs));
                            }
                        }
                    }
                    acc = grown;
                }
                for (y, kids, s) in acc {
                    add(
                        &mut out,
                        y,
                        Tree {
                            label: node.label.clone(),
                            children: kids,
                            is_new: node.is_new,
                        },
                        s,
                    );
                }
            }
        }
        out
    }

    fn top(g: &TagGrammar, ti: usize, ni: usize, roots: &[Table], max_len: usize) -> Table {
        let node = &g.trees()[ti].nodes[ni];
        let bottom = Self::bottom(g, ti, ni, roots, max_len);
        let adjoinable = !node.is_new && matches!(node.kind, NodeKind::Internal | NodeKind::Anchor);
        if !adjoinable || matches!(node.kind, NodeKind::Subst) {
            return bottom;
        }
        let mut out = bottom.clone();
        for (ai, aux) in g.trees().iter().enumerate() {
            if !aux.is_auxiliary() || aux.root_label() != node.label {
                continue;
            }
            for (ay, ads) in &roots[ai] {
                for (by, bds) in &bottom {
                    if tokens_in(ay) + tokens_in(by) > max_len {
                        continue;
                    }
                    let y = splice(ay, by);
                    for (at, &as_) in ads {
                        for (bt, &bs) in bds {
                            add(&mut out, y.clone(), plug(at, bt), as_ + bs);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Every string over `alphabet` with length in `1..=max_len`.
pub fn all_strings(alphabet: &[String], max_len: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<String>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|p| {
                alphabet.iter().map(move |a| {
                    let mut q = p.clone();
                    q.push(a.clone());
                    q
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}
