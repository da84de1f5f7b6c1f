//! Agenda-driven TAG parsing over dotted elementary-tree nodes.
//!
//! Items are `[X, i, j, k, l]` where `X` is a node together with a dot
//! state: `Partial(d)` after its first `d` children, `Bottom` once all
//! children are recognized and `Top` after adjunction or null adjunction.
//! Items are finalized in order of decreasing score; since all weights are
//! non-positive, the first time an item is popped its score is optimal.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use indexmap::IndexSet;

use super::{NodeKind, TagGrammar};
use crate::item::{Allowable, DotState, TagItem};
use crate::tree::Tree;

type Span = (usize, Option<(usize, usize)>, usize);

#[derive(Debug, Clone)]
struct GNode {
    tree: u32,
    local: u32,
    label: u32,
    kind: NodeKind,
    parent: Option<u32>,
    /// Position among the parent's children.
    child_index: u16,
    children: Vec<u32>,
    is_new: bool,
    is_root: bool,
    adjoinable: bool,
}

#[derive(Debug)]
struct Compiled {
    nodes: Vec<GNode>,
    labels: IndexSet<String>,
    tree_names: Vec<String>,
    tree_logprobs: Vec<f64>,
    tree_is_aux: Vec<bool>,
    tree_root: Vec<u32>,
    tree_anchor: Vec<u32>,
    lexicon: HashMap<String, Vec<u32>>,
    subst_by_label: Vec<Vec<u32>>,
    feet_by_label: Vec<Vec<u32>>,
    start: Option<u32>,
}

/// A grammar prepared for parsing.
#[derive(Debug, Clone)]
pub struct TagParser {
    c: Arc<Compiled>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Back {
    Scan,
    Foot,
    /// Bottom from an only child, `Partial(1)` from a first child, `Top`
    /// by null adjunction, or a substitution site from an initial root.
    Unary(u32),
    Combine(u32, u32),
    /// Auxiliary root, adjunction site.
    Adjoin(u32, u32),
}

#[derive(Debug, Clone)]
struct Entry {
    item: TagItem,
    score: f64,
    back: Back,
    done: bool,
}

/// The result of [`tag_parse`]: every derived item with its best score.
#[derive(Debug, Clone)]
pub struct TagChart {
    c: Arc<Compiled>,
    tokens: Vec<String>,
    entries: Vec<Entry>,
    index: HashMap<TagItem, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operation {
    Substitution,
    Adjunction,
}

/// One elementary tree instance and the trees attached to it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Derivation {
    /// Index into the grammar's trees.
    pub tree: usize,
    /// Token position of the anchor.
    pub anchor: usize,
    /// Sorted by node.
    pub attachments: Vec<Attachment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Attachment {
    pub op: Operation,
    /// Node of the parent tree (index into its `nodes`).
    pub node: usize,
    /// Span of the attached tree's root.
    pub span: Span,
    /// Span of the node it attaches to: for adjunction, the site before
    /// adjunction; for substitution, equal to `span`.
    pub site: Span,
    pub child: Derivation,
}

impl Derivation {
    /// Number of elementary tree instances.
    pub fn size(&self) -> usize {
        1 + self
            .attachments
            .iter()
            .map(|a| a.child.size())
            .sum::<usize>()
    }

    /// Tree index anchored at each position, for derivations that anchor
    /// every position exactly once.
    pub fn supertags(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        fn go(d: &Derivation, out: &mut Vec<Option<usize>>) {
            if d.anchor < out.len() {
                out[d.anchor] = Some(d.tree);
            }
            for a in &d.attachments {
                go(&a.child, out);
            }
        }
        go(self, &mut out);
        out
    }

    /// Sum of the weights of all instances.
    pub fn score(&self, g: &TagGrammar) -> f64 {
        g.trees()[self.tree].logprob
            + self
                .attachments
                .iter()
                .map(|a| a.child.score(g))
                .sum::<f64>()
    }
}

/// Every adjunction in `d` wraps `(i, (j, k), l)` around a site `(j, _, k)`.
pub fn check_adjunction_soundness(d: &Derivation) -> bool {
    d.attachments.iter().all(|a| {
        let here = match a.op {
            Operation::Adjunction => match (a.span, a.site) {
                ((i, Some((j, k)), l), (j2, gap, k2)) => {
                    i <= j
                        && j == j2
                        && k == k2
                        && k <= l
                        && gap.is_none_or(|(r, s)| j <= r && r <= s && s <= k)
                }
                _ => false,
            },
            Operation::Substitution => a.span == a.site && a.span.1.is_none(),
        };
        here && check_adjunction_soundness(&a.child)
    })
}

impl TagParser {
    pub fn new(g: &TagGrammar) -> TagParser {
        let mut labels: IndexSet<String> = IndexSet::new();
        let mut nodes = Vec::new();
        let mut tree_root = Vec::new();
        let mut tree_anchor = Vec::new();
        let mut lexicon: HashMap<String, Vec<u32>> = HashMap::new();
        for (ti, t) in g.trees().iter().enumerate() {
            let offset = nodes.len() as u32;
            tree_root.push(offset);
            tree_anchor.push(offset + t.anchor as u32);
            lexicon
                .entry(t.lexicon_key().to_string())
                .or_default()
                .push(ti as u32);
            for (li, n) in t.nodes.iter().enumerate() {
                let label = labels.insert_full(n.label.clone()).0 as u32;
                let child_index = n
                    .parent
                    .map(|p| t.nodes[p].children.iter().position(|&c| c == li).unwrap() as u16)
                    .unwrap_or(0);
                nodes.push(GNode {
                    tree: ti as u32,
                    local: li as u32,
                    label,
                    kind: n.kind,
                    parent: n.parent.map(|p| offset + p as u32),
                    child_index,
                    children: n.children.iter().map(|&c| offset + c as u32).collect(),
                    is_new: n.is_new,
                    is_root: li == 0,
                    adjoinable: !n.is_new
                        && matches!(n.kind, NodeKind::Internal | NodeKind::Anchor),
                });
            }
        }
        let mut subst_by_label = vec![Vec::new(); labels.len()];
        let mut feet_by_label = vec![Vec::new(); labels.len()];
        for (gi, n) in nodes.iter().enumerate() {
            match n.kind {
                NodeKind::Subst => subst_by_label[n.label as usize].push(gi as u32),
                NodeKind::Foot => feet_by_label[n.label as usize].push(gi as u32),
                _ => {}
            }
        }
        let start = labels.get_index_of(g.start()).map(|s| s as u32);
        TagParser {
            c: Arc::new(Compiled {
                nodes,
                tree_names: g.trees().iter().map(|t| t.name.clone()).collect(),
                tree_logprobs: g.trees().iter().map(|t| t.logprob).collect(),
                tree_is_aux: g.trees().iter().map(|t| t.is_auxiliary()).collect(),
                labels,
                tree_root,
                tree_anchor,
                lexicon,
                subst_by_label,
                feet_by_label,
                start,
            }),
        }
    }

    /// Exhaustively derive all items allowed by `allow`.
    pub fn parse<S: AsRef<str>, A: Allowable<TagItem> + ?Sized>(
        &self,
        tokens: &[S],
        allow: &A,
    ) -> TagChart {
        let mut st = State {
            c: &self.c,
            allow,
            entries: Vec::new(),
            index: HashMap::new(),
            agenda: BinaryHeap::new(),
            partial_at_end: HashMap::new(),
            top_at_start: HashMap::new(),
            bottom_by_span: HashMap::new(),
            aux_by_gap: HashMap::new(),
        };
        let c = &*self.c;
        let missing = tokens.iter().any(|t| !c.lexicon.contains_key(t.as_ref()));
        if !missing {
            for (p, tok) in tokens.iter().enumerate() {
                for &ti in &c.lexicon[tok.as_ref()] {
                    let anchor = c.tree_anchor[ti as usize];
                    st.push(
                        st.item(anchor, DotState::Bottom, p, None, p + 1),
                        c.tree_logprobs[ti as usize],
                        Back::Scan,
                    );
                }
            }
            while let Some(Cand(score, Reverse(item), id)) = st.agenda.pop() {
                let e = &st.entries[id as usize];
                if e.done || e.score != score.0 || e.item != item {
                    continue;
                }
                st.entries[id as usize].done = true;
                st.process(id);
            }
        }
        TagChart {
            c: self.c.clone(),
            tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
            entries: st.entries,
            index: st.index,
        }
    }

    /// The chart items of a derivation over `n` tokens; `None` if the
    /// derivation does not fit the grammar.
    pub fn derivation_items(&self, d: &Derivation) -> Option<Vec<TagItem>> {
        let mut out = Vec::new();
        self.instance_items(d, None, &mut out)?;
        Some(out)
    }

    fn instance_items(
        &self,
        d: &Derivation,
        foot: Option<(usize, usize)>,
        out: &mut Vec<TagItem>,
    ) -> Option<Span> {
        let c = &*self.c;
        let root = *c.tree_root.get(d.tree)?;
        self.node_items(d, root, foot, out)
    }

    fn node_items(
        &self,
        d: &Derivation,
        g: u32,
        foot: Option<(usize, usize)>,
        out: &mut Vec<TagItem>,
    ) -> Option<Span> {
        let c = &*self.c;
        let n = &c.nodes[g as usize];
        let attached = |op| {
            d.attachments
                .iter()
                .find(|a| a.op == op && a.node == n.local as usize)
        };
        let mk = |state, (i, gap, l): Span| c.item(g, state, i, gap, l);
        let bottom: Span = match n.kind {
            NodeKind::Foot => {
                let (j, k) = foot?;
                out.push(mk(DotState::Top, (j, Some((j, k)), k)));
                return Some((j, Some((j, k)), k));
            }
            NodeKind::Subst => {
                let a = attached(Operation::Substitution)?;
                let span = self.instance_items(&a.child, None, out)?;
                out.push(mk(DotState::Top, span));
                return Some(span);
            }
            NodeKind::Anchor => (d.anchor, None, d.anchor + 1),
            NodeKind::Internal => {
                let mut acc: Option<Span> = None;
                let m = n.children.len();
                for (idx, &ch) in n.children.iter().enumerate() {
                    let s = self.node_items(d, ch, foot, out)?;
                    acc = Some(match acc {
                        None => s,
                        Some((i, g1, j)) => {
                            if j != s.0 {
                                return None;
                            }
                            (i, g1.or(s.1), s.2)
                        }
                    });
                    if idx + 1 < m {
                        out.push(mk(DotState::Partial(idx as u16 + 1), acc.unwrap()));
                    }
                }
                acc?
            }
        };
        out.push(mk(DotState::Bottom, bottom));
        let top = match attached(Operation::Adjunction) {
            Some(a) => {
                let (i, _, l) = self.instance_items(&a.child, Some((bottom.0, bottom.2)), out)?;
                (i, bottom.1, l)
            }
            None => bottom,
        };
        out.push(mk(DotState::Top, top));
        Some(top)
    }
}

impl Compiled {
    fn item(
        &self,
        node: u32,
        state: DotState,
        i: usize,
        gap: Option<(usize, usize)>,
        l: usize,
    ) -> TagItem {
        TagItem {
            node,
            state,
            i,
            gap,
            l,
            open_begin: self.nodes[node as usize].is_new,
            open_end: matches!(state, DotState::Partial(_)),
        }
    }
}

/// Agenda entry: best score first, then the smallest item.
#[derive(Debug, PartialEq)]
struct Cand(Score, Reverse<TagItem>, u32);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0).then_with(|| self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Score(f64);

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct State<'a, A: ?Sized> {
    c: &'a Compiled,
    allow: &'a A,
    entries: Vec<Entry>,
    index: HashMap<TagItem, u32>,
    agenda: BinaryHeap<Cand>,
    /// (node, d, end) -> finalized `Partial(d)` items
    partial_at_end: HashMap<(u32, u16, usize), Vec<u32>>,
    /// (node, start) -> finalized `Top` items of non-first children
    top_at_start: HashMap<(u32, usize), Vec<u32>>,
    /// (label, i, l) -> finalized `Bottom` items of adjoinable nodes
    bottom_by_span: HashMap<(u32, usize, usize), Vec<u32>>,
    /// (label, j, k) -> finalized `Top` items of auxiliary roots
    aux_by_gap: HashMap<(u32, usize, usize), Vec<u32>>,
}

impl<A: Allowable<TagItem> + ?Sized> State<'_, A> {
    fn item(
        &self,
        node: u32,
        state: DotState,
        i: usize,
        gap: Option<(usize, usize)>,
        l: usize,
    ) -> TagItem {
        self.c.item(node, state, i, gap, l)
    }

    fn push(&mut self, item: TagItem, score: f64, back: Back) {
        match self.index.get(&item) {
            Some(&id) => {
                let e = &mut self.entries[id as usize];
                if !e.done && score > e.score {
                    e.score = score;
                    e.back = back;
                    self.agenda.push(Cand(Score(score), Reverse(item), id));
                }
            }
            None => {
                if !self.allow.allows(&item) {
                    return;
                }
                let id = self.entries.len() as u32;
                self.entries.push(Entry {
                    item,
                    score,
                    back,
                    done: false,
                });
                self.index.insert(item, id);
                self.agenda.push(Cand(Score(score), Reverse(item), id));
            }
        }
    }

    /// Combine a finalized partial item with a finalized child item.
    fn combine(&mut self, partial: u32, child: u32) {
        let p = &self.entries[partial as usize];
        let ch = &self.entries[child as usize];
        if p.item.gap.is_some() && ch.item.gap.is_some() {
            return;
        }
        let DotState::Partial(d) = p.item.state else {
            unreachable!()
        };
        let node = p.item.node;
        let arity = self.c.nodes[node as usize].children.len();
        let state = if d as usize + 1 == arity {
            DotState::Bottom
        } else {
            DotState::Partial(d + 1)
        };
        let it = self.item(node, state, p.item.i, p.item.gap.or(ch.item.gap), ch.item.l);
        let score = p.score + ch.score;
        self.push(it, score, Back::Combine(partial, child));
    }

    fn process(&mut self, id: u32) {
        let c = self.c;
        let Entry { item, score, .. } = self.entries[id as usize].clone();
        let node = &c.nodes[item.node as usize];
        match item.state {
            DotState::Top => {
                if node.is_root {
                    if c.tree_is_aux[node.tree as usize] {
                        let (j, k) = item.gap.expect("auxiliary root item has a gap");
                        self.aux_by_gap
                            .entry((node.label, j, k))
                            .or_default()
                            .push(id);
                        let sites = self
                            .bottom_by_span
                            .get(&(node.label, j, k))
                            .cloned()
                            .unwrap_or_default();
                        for site in sites {
                            self.adjoin(id, site);
                        }
                    } else {
                        for &s in &c.subst_by_label[node.label as usize] {
                            let it = self.item(s, DotState::Top, item.i, None, item.l);
                            self.push(it, score, Back::Unary(id));
                        }
                    }
                    return;
                }
                let parent = node.parent.expect("non-root node has a parent");
                let arity = c.nodes[parent as usize].children.len();
                if node.child_index == 0 {
                    let state = if arity == 1 {
                        DotState::Bottom
                    } else {
                        DotState::Partial(1)
                    };
                    let it = self.item(parent, state, item.i, item.gap, item.l);
                    self.push(it, score, Back::Unary(id));
                } else {
                    self.top_at_start
                        .entry((item.node, item.i))
                        .or_default()
                        .push(id);
                    let key = (parent, node.child_index, item.i);
                    let partials = self.partial_at_end.get(&key).cloned().unwrap_or_default();
                    for p in partials {
                        self.combine(p, id);
                    }
                }
            }
            DotState::Partial(d) => {
                self.partial_at_end
                    .entry((item.node, d, item.l))
                    .or_default()
                    .push(id);
                let next = node.children[d as usize];
                let tops = self
                    .top_at_start
                    .get(&(next, item.l))
                    .cloned()
                    .unwrap_or_default();
                for t in tops {
                    self.combine(id, t);
                }
            }
            DotState::Bottom => {
                let it = self.item(item.node, DotState::Top, item.i, item.gap, item.l);
                self.push(it, score, Back::Unary(id));
                if node.adjoinable {
                    let label = node.label;
                    self.bottom_by_span
                        .entry((label, item.i, item.l))
                        .or_default()
                        .push(id);
                    let auxs = self
                        .aux_by_gap
                        .get(&(label, item.i, item.l))
                        .cloned()
                        .unwrap_or_default();
                    for a in auxs {
                        self.adjoin(a, id);
                    }
                    for &f in &c.feet_by_label[label as usize] {
                        let it =
                            self.item(f, DotState::Top, item.i, Some((item.i, item.l)), item.l);
                        self.push(it, 0.0, Back::Foot);
                    }
                }
            }
        }
    }

    fn adjoin(&mut self, aux: u32, site: u32) {
        let a = &self.entries[aux as usize];
        let s = &self.entries[site as usize];
        let it = self.item(s.item.node, DotState::Top, a.item.i, s.item.gap, a.item.l);
        let score = a.score + s.score;
        self.push(it, score, Back::Adjoin(aux, site));
    }
}

/// Parse `tokens` with a one-off [`TagParser`].
pub fn tag_parse<S: AsRef<str>, A: Allowable<TagItem> + ?Sized>(
    g: &TagGrammar,
    tokens: &[S],
    allow: &A,
) -> TagChart {
    TagParser::new(g).parse(tokens, allow)
}

const FOOT_MARK: &str = "\u{0}foot";

impl TagChart {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of derived items.
    pub fn item_count(&self) -> usize {
        self.entries.len()
    }

    pub fn items(&self) -> impl Iterator<Item = &TagItem> + '_ {
        self.entries.iter().map(|e| &e.item)
    }

    pub fn contains(&self, item: &TagItem) -> bool {
        self.index.contains_key(item)
    }

    pub fn score(&self, item: &TagItem) -> Option<f64> {
        self.index
            .get(item)
            .map(|&id| self.entries[id as usize].score)
    }

    /// Label of a chart item's node.
    pub fn label(&self, item: &TagItem) -> &str {
        &self.c.labels[self.c.nodes[item.node as usize].label as usize]
    }

    /// Name of the elementary tree a chart item's node belongs to.
    pub fn tree_name(&self, item: &TagItem) -> &str {
        &self.c.tree_names[self.c.nodes[item.node as usize].tree as usize]
    }

    /// Best goal item: an initial root with the start label over the whole
    /// input. Ties go to the smallest item.
    fn goal(&self) -> Option<u32> {
        let start = self.c.start?;
        let n = self.tokens.len();
        if n == 0 {
            return None;
        }
        let mut best: Option<u32> = None;
        for (tree, &root) in self.c.tree_root.iter().enumerate() {
            if self.c.tree_is_aux[tree] || self.c.nodes[root as usize].label != start {
                continue;
            }
            let it = self.c.item(root, DotState::Top, 0, None, n);
            if let Some(&id) = self.index.get(&it) {
                let better = match best {
                    None => true,
                    Some(b) => {
                        let (eb, ei) = (&self.entries[b as usize], &self.entries[id as usize]);
                        ei.score > eb.score || (ei.score == eb.score && ei.item < eb.item)
                    }
                };
                if better {
                    best = Some(id);
                }
            }
        }
        best
    }

    pub fn goal_score(&self) -> Option<f64> {
        self.goal().map(|g| self.entries[g as usize].score)
    }

    fn derivation(&self, id: u32) -> Derivation {
        let c = &*self.c;
        let tree = c.nodes[self.entries[id as usize].item.node as usize].tree as usize;
        let mut d = Derivation {
            tree,
            anchor: usize::MAX,
            attachments: Vec::new(),
        };
        self.walk(id, &mut d);
        d.attachments.sort_by_key(|a| (a.node, a.op));
        d
    }

    fn span(&self, id: u32) -> Span {
        let it = &self.entries[id as usize].item;
        (it.i, it.gap, it.l)
    }

    fn walk(&self, id: u32, d: &mut Derivation) {
        let e = &self.entries[id as usize];
        let node = &self.c.nodes[e.item.node as usize];
        match e.back {
            Back::Scan => d.anchor = e.item.i,
            Back::Foot => {}
            Back::Unary(child) => {
                if node.kind == NodeKind::Subst {
                    d.attachments.push(Attachment {
                        op: Operation::Substitution,
                        node: node.local as usize,
                        span: self.span(child),
                        site: self.span(id),
                        child: self.derivation(child),
                    });
                } else {
                    self.walk(child, d);
                }
            }
            Back::Combine(a, b) => {
                self.walk(a, d);
                self.walk(b, d);
            }
            Back::Adjoin(aux, site) => {
                self.walk(site, d);
                d.attachments.push(Attachment {
                    op: Operation::Adjunction,
                    node: node.local as usize,
                    span: self.span(aux),
                    site: self.span(site),
                    child: self.derivation(aux),
                });
            }
        }
    }

    /// Derived forest of an item: one tree for node items, the recognized
    /// children for partial items.
    fn derived(&self, id: u32) -> Vec<Tree> {
        let e = &self.entries[id as usize];
        let node = &self.c.nodes[e.item.node as usize];
        let label = &self.c.labels[node.label as usize];
        match e.back {
            Back::Scan => vec![Tree::node(
                label.clone(),
                vec![Tree::leaf(self.tokens[e.item.i].clone())],
            )],
            Back::Foot => vec![Tree::leaf(FOOT_MARK)],
            Back::Unary(child) => {
                let inner = self.derived(child);
                match e.item.state {
                    DotState::Bottom if node.kind == NodeKind::Internal => {
                        vec![Tree {
                            label: label.clone(),
                            children: inner,
                            is_new: node.is_new,
                        }]
                    }
                    _ => inner,
                }
            }
            Back::Combine(a, b) => {
                let mut kids = self.derived(a);
                kids.extend(self.derived(b));
                if e.item.state == DotState::Bottom {
                    vec![Tree {
                        label: label.clone(),
                        children: kids,
                        is_new: node.is_new,
                    }]
                } else {
                    kids
                }
            }
            Back::Adjoin(aux, site) => {
                let mut outer = self.derived(aux).pop().unwrap();
                let inner = self.derived(site).pop().unwrap();
                assert!(
                    replace_foot(&mut outer, inner),
                    "auxiliary tree without foot"
                );
                vec![outer]
            }
        }
    }
}

fn replace_foot(t: &mut Tree, inner: Tree) -> bool {
    let mut slot = Some(inner);
    fn go(t: &mut Tree, slot: &mut Option<Tree>) -> bool {
        for c in t.children.iter_mut() {
            if c.is_leaf() && c.label == FOOT_MARK {
                *c = slot.take().unwrap();
                return true;
            }
            if go(c, slot) {
                return true;
            }
        }
        false
    }
    go(t, &mut slot)
}

/// Best derivation, its derived tree (with binarization nodes flagged
/// `is_new`) and its score. `None` if no goal item was derived.
pub fn best_derivation(chart: &TagChart) -> Option<(Derivation, Tree, f64)> {
    let goal = chart.goal()?;
    let d = chart.derivation(goal);
    let t = chart.derived(goal).pop().unwrap();
    Some((d, t, chart.entries[goal as usize].score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{BeginEndConstraints, TagConstraintFilter, TagStrategy};
    use crate::item::AllowAll;
    use crate::tag::{binarize_tag_grammar, read_tag_grammar};
    use crate::tree::debinarize;

    fn ab() -> TagGrammar {
        read_tag_grammar("alpha\t0\t(S (b @))\nbeta\t0\t(S (a @) (S* ))\n").unwrap()
    }

    fn best(g: &TagGrammar, toks: &[&str]) -> Option<(Derivation, Tree, f64)> {
        best_derivation(&tag_parse(g, toks, &AllowAll))
    }

    #[test]
    fn adjunction_at_root() {
        let (d, t, s) = best(&ab(), &["a", "b"]).unwrap();
        assert_eq!(t.to_string(), "(S (a a) (S (b b)))");
        assert_eq!(s, 0.0);
        assert_eq!(d.tree, 0);
        assert_eq!(d.anchor, 1);
        assert_eq!(d.attachments.len(), 1);
        let a = &d.attachments[0];
        assert_eq!(a.op, Operation::Adjunction);
        assert_eq!(a.span, (0, Some((1, 2)), 2));
        assert_eq!(a.site, (1, None, 2));
        assert!(check_adjunction_soundness(&d));
    }

    #[test]
    fn double_adjunction_and_failure() {
        let (d, t, _) = best(&ab(), &["a", "a", "b"]).unwrap();
        assert_eq!(t.to_string(), "(S (a a) (S (a a) (S (b b))))");
        assert_eq!(d.size(), 3);
        assert!(best(&ab(), &["b", "a"]).is_none());
        assert!(best(&ab(), &["c"]).is_none());
        assert!(best(&ab(), &[]).is_none());
    }

    #[test]
    fn substitution_and_wrapping_adjunction() {
        let g = read_tag_grammar(
            "start: S\n\
             s\t-0.1\t(S (NP! ) (VP (V @)))\n\
             np\t-0.2\t(NP (N @))\n\
             adv\t-0.3\t(VP (VP* ) (ADV @))\n\
             wrap\t-0.4\t(VP (L @) (VP* ) (R! ))\n\
             r\t0\t(R (Y @))\n",
        )
        .unwrap();
        let (d, t, s) = best(&g, &["N", "V", "ADV"]).unwrap();
        assert_eq!(t.to_string(), "(S (NP (N N)) (VP (VP (V V)) (ADV ADV)))");
        assert!((s + 0.6).abs() < 1e-12);
        assert_eq!(d.attachments.len(), 2);
        // Wrapping adjunction leaves a gap in the middle.
        let (d, t, _) = best(&g, &["N", "L", "V", "Y"]).unwrap();
        assert_eq!(
            t.to_string(),
            "(S (NP (N N)) (VP (L L) (VP (V V)) (R (Y Y))))"
        );
        assert!(check_adjunction_soundness(&d));
        let adj = d
            .attachments
            .iter()
            .find(|a| a.op == Operation::Adjunction)
            .unwrap();
        assert_eq!(adj.span, (1, Some((2, 3)), 4));
    }

    #[test]
    fn derivation_items_are_in_chart() {
        let g = ab();
        let toks = ["a", "a", "b"];
        let p = TagParser::new(&g);
        let chart = p.parse(&toks, &AllowAll);
        let (d, _, _) = best_derivation(&chart).unwrap();
        let items = p.derivation_items(&d).unwrap();
        assert!(items.len() >= 6);
        for it in &items {
            assert!(chart.contains(it), "{it:?}");
        }
    }

    #[test]
    fn binarized_grammar_gives_same_derived_tree() {
        let g = read_tag_grammar(
            "start: S\n\
             s\t0\t(S (NP! ) (V @) (NP! ) (PP! ))\n\
             np\t0\t(NP (N @))\n\
             pp\t0\t(PP (P @) (NP! ))\n",
        )
        .unwrap();
        let toks = ["N", "V", "N", "P", "N"];
        let (_, t, _) = best(&g, &toks).unwrap();
        let bg = binarize_tag_grammar(&g, 2);
        let (_, bt, _) = best(&bg, &toks).unwrap();
        assert!(bt.spans().iter().any(|s| s.3));
        assert_eq!(debinarize(&bt), t);
    }

    #[test]
    fn pruning_with_constraints() {
        let g = ab();
        let toks = ["a", "a", "a", "b"];
        let full = tag_parse(&g, &toks, &AllowAll);
        let c = BeginEndConstraints::new(4, [1], []).unwrap();
        let cc = tag_parse(&g, &toks, &TagConstraintFilter::new(&c, TagStrategy::Cc));
        let be = tag_parse(&g, &toks, &TagConstraintFilter::new(&c, TagStrategy::Be));
        assert!(cc.item_count() <= be.item_count() && be.item_count() < full.item_count());
        for it in cc.items() {
            assert!(be.contains(it));
        }
        for it in be.items() {
            assert!(full.contains(it));
        }
        // The only tree is right-branching, so a begin ban at 1 kills it.
        assert!(best_derivation(&be).is_none());
    }

    #[test]
    fn prefers_higher_weight() {
        let g =
            read_tag_grammar("x\t-1\t(S (a @))\ny\t-0.5\t(S (a @))\nz\t-0.5\t(T (a @))\n").unwrap();
        let (d, _, s) = best(&g, &["a"]).unwrap();
        assert_eq!((d.tree, s), (1, -0.5));
    }
}
