//! Spinal TAG extraction from a constituent treebank.
//!
//! Every token receives one elementary tree: the chain of nodes it heads
//! (its spine), with argument children along the spine as substitution
//! sites. Head rules may list, per label, which non-head children are
//! arguments; the remaining children outside the span of head and
//! arguments are modifiers. Each modifier is split off into its own node
//! with the parent's label, nested around the head (right modifiers
//! innermost), and anchors an auxiliary tree with a single foot. A node
//! whose head child carries its own label is an adjunction in any case: the
//! child closest to the head child anchors the auxiliary tree and the head
//! child continues the spine. Stacked adjunctions attach to the root of the
//! auxiliary tree below them, so every node receives at most one
//! adjunction and no token is lost.
//!
//! The nested trees are the gold standard for TAG parsing; they are
//! returned in [`TagCorpus::trees`] and by [`tag_gold_tree`].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::parser::{Attachment, Derivation, Operation};
use super::{ElemNode, ElementaryTree, NodeKind, TagError, TagGrammar};
use crate::tree::Tree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
struct HeadRule {
    dir: Direction,
    priority: Vec<String>,
    /// `None`: every non-head child is an argument.
    arguments: Option<Vec<String>>,
}

/// Head-percolation table. Each line is
/// `PARENT<TAB>left|right<TAB>C1 C2 ...[<TAB>A1 A2 ...]`: the first label in
/// the priority list that occurs among the children, scanning in the given
/// direction, marks the head; if none occurs, the first child in scan
/// direction is the head. The optional fourth column lists the argument
/// labels (`-` for none); without it every non-head child is an argument.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeadRules {
    rules: BTreeMap<String, HeadRule>,
}

impl HeadRules {
    pub fn from_text(text: &str) -> Result<HeadRules, TagError> {
        let mut rules = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let (parent, dir, prio, args) = match fields.as_slice() {
                [p, d] => (*p, *d, "", None),
                [p, d, c] => (*p, *d, *c, None),
                [p, d, c, a] => (*p, *d, *c, Some(*a)),
                _ => {
                    return Err(TagError::Format {
                        line,
                        msg: "expected 'PARENT<TAB>left|right<TAB>labels[<TAB>arguments]'".into(),
                    })
                }
            };
            let dir = match dir.trim() {
                "left" => Direction::Left,
                "right" => Direction::Right,
                other => {
                    return Err(TagError::Format {
                        line,
                        msg: format!("bad direction '{other}'"),
                    })
                }
            };
            let arguments = args.map(|a| {
                a.split_whitespace()
                    .filter(|&l| l != "-")
                    .map(str::to_string)
                    .collect::<Vec<_>>()
            });
            rules.insert(
                parent.trim().to_string(),
                HeadRule {
                    dir,
                    priority: prio.split_whitespace().map(str::to_string).collect(),
                    arguments,
                },
            );
        }
        Ok(HeadRules { rules })
    }

    /// Index of the head child of an internal node, or the node's label if
    /// no rule covers it.
    pub fn head_child(&self, t: &Tree) -> Result<usize, String> {
        if t.children.len() == 1 {
            return Ok(0);
        }
        let rule = self.rules.get(&t.label).ok_or_else(|| t.label.clone())?;
        let order: Vec<usize> = match rule.dir {
            Direction::Left => (0..t.children.len()).collect(),
            Direction::Right => (0..t.children.len()).rev().collect(),
        };
        for p in &rule.priority {
            if let Some(&i) = order.iter().find(|&&i| &t.children[i].label == p) {
                return Ok(i);
            }
        }
        Ok(order[0])
    }

    fn arguments(&self, label: &str) -> Option<&[String]> {
        self.rules.get(label).and_then(|r| r.arguments.as_deref())
    }
}

/// Extracted grammar plus, for each sentence, its gold tree with modifiers
/// split off and its gold derivation.
#[derive(Debug, Clone)]
pub struct TagCorpus {
    /// Unlexicalized trees named `t0, t1, ...` in order of first
    /// occurrence; the weight of a tree is `ln P(tree | POS of its anchor)`.
    pub grammar: TagGrammar,
    /// Gold trees as derived by the gold derivations.
    pub trees: Vec<Tree>,
    /// Gold supertag (index into `grammar.trees()`) per token.
    pub supertags: Vec<Vec<usize>>,
    pub derivations: Vec<Derivation>,
    /// Occurrences of each elementary tree.
    pub counts: Vec<usize>,
}

/// A tree with the head child of every internal node marked.
struct Headed {
    label: String,
    head: usize,
    children: Vec<Headed>,
}

impl Headed {
    fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn is_preterminal(&self) -> bool {
        self.children.len() == 1 && self.children[0].is_leaf()
    }

    fn to_tree(&self) -> Tree {
        if self.is_leaf() {
            Tree::leaf(self.label.clone())
        } else {
            Tree::node(
                self.label.clone(),
                self.children.iter().map(Headed::to_tree).collect(),
            )
        }
    }
}

fn split_modifiers(t: &Tree, hr: &HeadRules, missing: &mut BTreeSet<String>) -> Headed {
    if t.is_leaf() {
        return Headed {
            label: t.label.clone(),
            head: 0,
            children: Vec::new(),
        };
    }
    let kids: Vec<Headed> = t
        .children
        .iter()
        .map(|c| split_modifiers(c, hr, missing))
        .collect();
    if t.is_preterminal() {
        return Headed {
            label: t.label.clone(),
            head: 0,
            children: kids,
        };
    }
    let h = hr.head_child(t).unwrap_or_else(|l| {
        missing.insert(l);
        0
    });
    let Some(args) = hr.arguments(&t.label) else {
        return Headed {
            label: t.label.clone(),
            head: h,
            children: kids,
        };
    };
    let is_arg = |i: usize| i == h || args.contains(&t.children[i].label);
    let a = (0..kids.len()).find(|&i| is_arg(i)).unwrap();
    let b = (0..kids.len()).rev().find(|&i| is_arg(i)).unwrap();
    if a == 0 && b == kids.len() - 1 {
        return Headed {
            label: t.label.clone(),
            head: h,
            children: kids,
        };
    }
    let mut kids = kids;
    let right = kids.split_off(b + 1);
    let core = kids.split_off(a);
    let left = kids;
    let mut inner = if core.len() == 1 && core[0].label == t.label {
        core.into_iter().next().unwrap()
    } else {
        Headed {
            label: t.label.clone(),
            head: h - a,
            children: core,
        }
    };
    for r in right {
        inner = Headed {
            label: t.label.clone(),
            head: 0,
            children: vec![inner, r],
        };
    }
    for l in left.into_iter().rev() {
        inner = Headed {
            label: t.label.clone(),
            head: 1,
            children: vec![l, inner],
        };
    }
    inner
}

/// The gold tree that TAG parses of `t` are scored against: `t` with every
/// modifier split off into its own node.
pub fn tag_gold_tree(t: &Tree, rules: &HeadRules) -> Result<Tree, TagError> {
    let mut missing = BTreeSet::new();
    let h = split_modifiers(t, rules, &mut missing);
    if !missing.is_empty() {
        return Err(TagError::MissingHeadRule(
            missing.into_iter().collect::<Vec<_>>().join(", "),
        ));
    }
    Ok(h.to_tree())
}

struct ANode {
    label: String,
    children: Vec<usize>,
    parent: Option<usize>,
    head: usize,
    adjunction: bool,
    start: usize,
    end: usize,
    preterminal: bool,
}

fn arena(t: &Headed) -> Vec<ANode> {
    fn go(t: &Headed, parent: Option<usize>, pos: &mut usize, out: &mut Vec<ANode>) -> usize {
        let me = out.len();
        let preterminal = t.is_preterminal();
        out.push(ANode {
            label: t.label.clone(),
            children: Vec::new(),
            parent,
            head: t.head,
            adjunction: !preterminal
                && t.children.len() >= 2
                && t.children[t.head].label == t.label,
            start: *pos,
            end: *pos,
            preterminal,
        });
        if preterminal {
            *pos += 1;
        } else {
            for c in &t.children {
                let ci = go(c, Some(me), pos, out);
                out[me].children.push(ci);
            }
        }
        out[me].end = *pos;
        me
    }
    let mut out = Vec::new();
    go(t, None, &mut 0, &mut out);
    out
}

/// Per-instance bookkeeping while building elementary trees.
#[derive(Default)]
struct Instance {
    nodes: Vec<ElemNode>,
    anchor: usize,
    foot: Option<usize>,
}

impl Instance {
    fn push(&mut self, label: &str, kind: NodeKind, parent: Option<usize>) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(ElemNode {
            label: label.to_string(),
            kind,
            children: Vec::new(),
            parent,
            is_new: false,
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(idx);
        }
        idx
    }
}

/// Where treebank nodes ended up: spine nodes and substitution sites, as
/// (instance, local node).
#[derive(Default)]
struct Placement {
    spine: HashMap<usize, (usize, usize)>,
    site: HashMap<usize, (usize, usize)>,
}

fn build_spine(
    a: &[ANode],
    x: usize,
    parent: Option<usize>,
    inst_id: usize,
    inst: &mut Instance,
    pl: &mut Placement,
) {
    let node = &a[x];
    if node.adjunction {
        // Merged with its head child; the adjunction site is that node.
        let h = node.children[node.head];
        build_spine(a, h, parent, inst_id, inst, pl);
        let local = pl.spine[&h];
        pl.spine.insert(x, local);
        return;
    }
    if node.preterminal {
        let me = inst.push(&node.label, NodeKind::Anchor, parent);
        inst.anchor = me;
        pl.spine.insert(x, (inst_id, me));
        return;
    }
    let me = inst.push(&node.label, NodeKind::Internal, parent);
    pl.spine.insert(x, (inst_id, me));
    for (ci, &c) in node.children.iter().enumerate() {
        if ci == node.head {
            build_spine(a, c, Some(me), inst_id, inst, pl);
        } else {
            let s = inst.push(&a[c].label, NodeKind::Subst, Some(me));
            pl.site.insert(c, (inst_id, s));
        }
    }
}

/// The non-head child of an adjunction node that anchors its auxiliary
/// tree: the one closest to the head child, preferring the left one.
fn anchoring_modifier(a: &[ANode], x: usize) -> usize {
    let n = &a[x];
    let h = n.head;
    (0..n.children.len())
        .filter(|&i| i != h)
        .min_by_key(|&i| (i.abs_diff(h), i))
        .map(|i| n.children[i])
        .unwrap()
}

/// Extract a spinal TAG from `trees` (words at the leaves, parts of speech
/// as preterminals).
pub fn extract_spinal(trees: &[Tree], rules: &HeadRules) -> Result<TagCorpus, TagError> {
    let mut missing = BTreeSet::new();
    let headed: Vec<Headed> = trees
        .iter()
        .map(|t| split_modifiers(t, rules, &mut missing))
        .collect();
    if !missing.is_empty() {
        return Err(TagError::MissingHeadRule(
            missing.into_iter().collect::<Vec<_>>().join(", "),
        ));
    }

    let mut shapes: Vec<ElementaryTree> = Vec::new();
    let mut by_shape: HashMap<String, usize> = HashMap::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut supertags = Vec::with_capacity(headed.len());
    let mut derivations = Vec::with_capacity(headed.len());

    for t in &headed {
        let a = arena(t);
        let pre: Vec<usize> = (0..a.len()).filter(|&i| a[i].preterminal).collect();
        let mut pl = Placement::default();
        let mut insts: Vec<Instance> = Vec::with_capacity(pre.len());
        // Top of each token's spine and, for auxiliary trees, the
        // adjunction node they wrap.
        let mut tops = Vec::with_capacity(pre.len());
        let mut aux_at: Vec<Option<usize>> = Vec::with_capacity(pre.len());
        for (tok, &p) in pre.iter().enumerate() {
            let mut x = p;
            while let Some(par) = a[x].parent {
                if a[par].children[a[par].head] != x {
                    break;
                }
                x = par;
            }
            let mut inst = Instance::default();
            let wraps = a[x]
                .parent
                .filter(|&par| a[par].adjunction && anchoring_modifier(&a, par) == x);
            if let Some(par) = wraps {
                let root = inst.push(&a[par].label, NodeKind::Internal, None);
                for (ci, &c) in a[par].children.iter().enumerate() {
                    if ci == a[par].head {
                        inst.foot = Some(inst.push(&a[par].label, NodeKind::Foot, Some(root)));
                    } else if c == x {
                        build_spine(&a, x, Some(root), tok, &mut inst, &mut pl);
                    } else {
                        let s = inst.push(&a[c].label, NodeKind::Subst, Some(root));
                        pl.site.insert(c, (tok, s));
                    }
                }
            } else {
                build_spine(&a, x, None, tok, &mut inst, &mut pl);
            }
            tops.push(x);
            aux_at.push(wraps);
            insts.push(inst);
        }
        // A modifier stacked on top of another adjoins at the root of the
        // auxiliary tree below it.
        for (tok, wraps) in aux_at.iter().enumerate() {
            if let Some(par) = *wraps {
                pl.spine.insert(par, (tok, 0));
            }
        }

        let mut tags = Vec::with_capacity(insts.len());
        for inst in &insts {
            let et = ElementaryTree {
                name: String::new(),
                logprob: 0.0,
                nodes: inst.nodes.clone(),
                anchor: inst.anchor,
                foot: inst.foot,
                word: None,
            };
            let key = et.to_bracket();
            let idx = *by_shape.entry(key).or_insert_with(|| {
                shapes.push(ElementaryTree {
                    name: format!("t{}", shapes.len()),
                    ..et
                });
                counts.push(0);
                shapes.len() - 1
            });
            counts[idx] += 1;
            tags.push(idx);
        }

        // Attach every instance to its parent instance.
        let mut children: Vec<Vec<(usize, Operation, usize)>> = vec![Vec::new(); insts.len()];
        let mut root = None;
        for tok in 0..insts.len() {
            let x = tops[tok];
            match (a[x].parent, aux_at[tok]) {
                (None, _) => root = Some(tok),
                (Some(_), Some(adj)) => {
                    let (pi, local) = pl.spine[&a[adj].children[a[adj].head]];
                    children[pi].push((tok, Operation::Adjunction, local));
                }
                (Some(_), None) => {
                    let (pi, local) = pl.site[&x];
                    children[pi].push((tok, Operation::Substitution, local));
                }
            }
        }
        let root = root.expect("the sentence root tops some spine");

        fn assemble(
            tok: usize,
            a: &[ANode],
            tops: &[usize],
            aux_at: &[Option<usize>],
            tags: &[usize],
            children: &[Vec<(usize, Operation, usize)>],
        ) -> Derivation {
            let mut attachments: Vec<Attachment> = children[tok]
                .iter()
                .map(|&(c, op, node)| {
                    let (span, site) = match op {
                        Operation::Substitution => {
                            let x = &a[tops[c]];
                            ((x.start, None, x.end), (x.start, None, x.end))
                        }
                        Operation::Adjunction => {
                            let adj = &a[aux_at[c].unwrap()];
                            let h = &a[adj.children[adj.head]];
                            let gap = h.adjunction.then(|| {
                                let f = &a[h.children[h.head]];
                                (f.start, f.end)
                            });
                            (
                                (adj.start, Some((h.start, h.end)), adj.end),
                                (h.start, gap, h.end),
                            )
                        }
                    };
                    Attachment {
                        op,
                        node,
                        span,
                        site,
                        child: assemble(c, a, tops, aux_at, tags, children),
                    }
                })
                .collect();
            attachments.sort_by_key(|at| (at.node, at.op));
            Derivation {
                tree: tags[tok],
                anchor: tok,
                attachments,
            }
        }
        derivations.push(assemble(root, &a, &tops, &aux_at, &tags, &children));
        supertags.push(tags);
    }

    let mut pos_totals: HashMap<&str, usize> = HashMap::new();
    for (t, &c) in shapes.iter().zip(&counts) {
        *pos_totals.entry(t.anchor_label()).or_insert(0) += c;
    }
    let weights: Vec<f64> = shapes
        .iter()
        .zip(&counts)
        .map(|(t, &c)| (c as f64 / pos_totals[t.anchor_label()] as f64).ln())
        .collect();
    for (t, w) in shapes.iter_mut().zip(weights) {
        t.logprob = w;
    }
    let trees: Vec<Tree> = headed.iter().map(Headed::to_tree).collect();
    let start = majority_root(&trees);
    Ok(TagCorpus {
        grammar: TagGrammar::new(start, shapes)?,
        trees,
        supertags,
        derivations,
        counts,
    })
}

fn majority_root(trees: &[Tree]) -> String {
    let mut roots: BTreeMap<&str, usize> = BTreeMap::new();
    for t in trees {
        *roots.entry(&t.label).or_insert(0) += 1;
    }
    roots
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(l, _)| l.to_string())
        .unwrap_or_default()
}
