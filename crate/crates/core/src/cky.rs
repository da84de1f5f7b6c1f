//! CKY parsing for binarized PCFGs with consequent-side item filtering.

use std::collections::HashSet;

use crate::grammar::{NtId, Pcfg, Rhs};
use crate::item::{Allowable, PcfgItem};
use crate::tree::Tree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Back {
    None,
    Lexical { rule: u32 },
    Unary { rule: u32 },
    Binary { rule: u32, split: u32 },
}

/// Rule indexes for repeated parsing with one grammar.
#[derive(Debug, Clone)]
pub struct CkyParser<'g> {
    grammar: &'g Pcfg,
    /// terminal -> (lhs, logprob, rule)
    lexical: Vec<Vec<(NtId, f64, u32)>>,
    /// child -> (lhs, logprob, rule)
    unary: Vec<Vec<(NtId, f64, u32)>>,
    /// left child -> (right child, lhs, logprob, rule), in rule order
    binary: Vec<Vec<(NtId, NtId, f64, u32)>>,
}

const NO_CELL: u32 = u32::MAX;

/// Span-indexed chart with a dense label table per cell, allocated when
/// the cell receives its first item. Absent items have score `-inf`.
#[derive(Debug, Clone)]
pub struct Chart {
    n: usize,
    num_labels: usize,
    /// Start of each cell's block in `scores`/`back`, or `NO_CELL`.
    offsets: Vec<u32>,
    scores: Vec<f64>,
    back: Vec<Back>,
    present: Vec<Vec<NtId>>,
    is_new: Vec<bool>,
    items: usize,
}

impl<'g> CkyParser<'g> {
    pub fn new(grammar: &'g Pcfg) -> Self {
        let nn = grammar.num_nonterminals();
        let mut lexical = vec![Vec::new(); grammar.num_terminals()];
        let mut unary = vec![Vec::new(); nn];
        let mut binary = vec![Vec::new(); nn];
        for (idx, r) in grammar.rules().iter().enumerate() {
            let idx = idx as u32;
            match r.rhs {
                Rhs::Terminal(t) => lexical[t].push((r.lhs, r.logprob, idx)),
                Rhs::Unary(b) => unary[b].push((r.lhs, r.logprob, idx)),
                Rhs::Binary(b, c) => binary[b].push((c, r.lhs, r.logprob, idx)),
            }
        }
        CkyParser {
            grammar,
            lexical,
            unary,
            binary,
        }
    }

    pub fn grammar(&self) -> &'g Pcfg {
        self.grammar
    }

    /// Fill a chart for `tokens`. Every consequent item of width two or
    /// more is entered only if `allow` accepts it; width-one items are
    /// never filtered. Unknown tokens leave their column empty.
    pub fn parse<S: AsRef<str>, A: Allowable<PcfgItem> + ?Sized>(
        &self,
        tokens: &[S],
        allow: &A,
    ) -> Chart {
        let g = self.grammar;
        let n = tokens.len();
        let nl = g.num_nonterminals();
        let cells = (n + 1) * (n + 1);
        let mut chart = Chart {
            n,
            num_labels: nl,
            offsets: vec![NO_CELL; cells],
            scores: Vec::new(),
            back: Vec::new(),
            present: vec![Vec::new(); cells],
            is_new: (0..nl).map(|a| g.is_new(a)).collect(),
            items: 0,
        };
        let mut allowed = vec![true; nl];

        for (i, tok) in tokens.iter().enumerate() {
            if let Some(t) = g.terminal_id(tok.as_ref()) {
                for &(lhs, lp, rule) in &self.lexical[t] {
                    chart.relax(i, i + 1, lhs, lp, Back::Lexical { rule });
                }
            }
            allowed.iter_mut().for_each(|a| *a = true);
            self.unary_closure(&mut chart, i, i + 1, &allowed);
        }

        for width in 2..=n {
            for i in 0..=n - width {
                let k = i + width;
                let verdict = [
                    allow.span_verdict(i, k, false),
                    allow.span_verdict(i, k, true),
                ];
                if verdict == [Some(false), Some(false)] {
                    continue;
                }
                let mut any = false;
                for (a, slot) in allowed.iter_mut().enumerate() {
                    let is_new = chart.is_new[a];
                    *slot = match verdict[is_new as usize] {
                        Some(v) => v,
                        None => allow.allows(&PcfgItem {
                            label: a,
                            is_new,
                            i,
                            k,
                        }),
                    };
                    any |= *slot;
                }
                if !any {
                    continue;
                }
                for j in i + 1..k {
                    if chart.present[chart.cell(i, j)].is_empty()
                        || chart.present[chart.cell(j, k)].is_empty()
                    {
                        continue;
                    }
                    // Index loop: `relax` mutates the chart.
                    let left_cell = chart.cell(i, j);
                    let left = chart.offsets[left_cell] as usize;
                    let right = chart.offsets[chart.cell(j, k)] as usize;
                    for li in 0..chart.present[left_cell].len() {
                        let b = chart.present[left_cell][li];
                        let sb = chart.scores[left + b];
                        for &(c, lhs, lp, rule) in &self.binary[b] {
                            if !allowed[lhs] {
                                continue;
                            }
                            let sc = chart.scores[right + c];
                            if sc == f64::NEG_INFINITY {
                                continue;
                            }
                            chart.relax(
                                i,
                                k,
                                lhs,
                                sb + sc + lp,
                                Back::Binary {
                                    rule,
                                    split: j as u32,
                                },
                            );
                        }
                    }
                }
                self.unary_closure(&mut chart, i, k, &allowed);
            }
        }
        chart
    }

    /// Apply unary rules to a fixed point, at most once per label.
    fn unary_closure(&self, chart: &mut Chart, i: usize, k: usize, allowed: &[bool]) {
        let cell = chart.cell(i, k);
        for _ in 0..chart.num_labels {
            let mut changed = false;
            for pi in 0..chart.present[cell].len() {
                let b = chart.present[cell][pi];
                let sb = chart.score(i, k, b);
                for &(lhs, lp, rule) in &self.unary[b] {
                    if allowed[lhs] && chart.relax_strict(i, k, lhs, sb + lp, Back::Unary { rule })
                    {
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
}

/// Parse with a one-off index over `g`.
pub fn parse<S: AsRef<str>, A: Allowable<PcfgItem> + ?Sized>(
    g: &Pcfg,
    tokens: &[S],
    allow: &A,
) -> Chart {
    CkyParser::new(g).parse(tokens, allow)
}

impl Chart {
    #[inline]
    fn cell(&self, i: usize, k: usize) -> usize {
        i * (self.n + 1) + k
    }

    /// Index of `[a, i, k]` in `scores`, if its cell is allocated.
    #[inline]
    fn slot(&self, i: usize, k: usize, a: NtId) -> Option<usize> {
        match self.offsets[self.cell(i, k)] {
            NO_CELL => None,
            off => Some(off as usize + a),
        }
    }

    fn slot_mut(&mut self, i: usize, k: usize, a: NtId) -> usize {
        let cell = self.cell(i, k);
        if self.offsets[cell] == NO_CELL {
            self.offsets[cell] = u32::try_from(self.scores.len()).expect("chart too large");
            self.scores
                .resize(self.scores.len() + self.num_labels, f64::NEG_INFINITY);
            self.back
                .resize(self.back.len() + self.num_labels, Back::None);
        }
        self.offsets[cell] as usize + a
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.items == 0
    }

    /// Best log score of `[a, i, k]`, `-inf` if not derived.
    pub fn score(&self, i: usize, k: usize, a: NtId) -> f64 {
        self.slot(i, k, a)
            .map_or(f64::NEG_INFINITY, |s| self.scores[s])
    }

    pub fn contains(&self, i: usize, k: usize, a: NtId) -> bool {
        self.score(i, k, a) > f64::NEG_INFINITY
    }

    /// Number of derived items.
    pub fn item_count(&self) -> usize {
        self.items
    }

    /// All derived items, ordered by span then label.
    pub fn items(&self) -> impl Iterator<Item = PcfgItem> + '_ {
        (0..self.n).flat_map(move |i| {
            (i + 1..=self.n).flat_map(move |k| {
                let mut labels = self.present[self.cell(i, k)].clone();
                labels.sort_unstable();
                labels.into_iter().map(move |a| PcfgItem {
                    label: a,
                    is_new: self.is_new[a],
                    i,
                    k,
                })
            })
        })
    }

    fn insert(&mut self, slot: usize, i: usize, k: usize, a: NtId) {
        if self.scores[slot] == f64::NEG_INFINITY {
            let cell = self.cell(i, k);
            self.present[cell].push(a);
            self.items += 1;
        }
    }

    /// Binary and lexical update. Ties keep the earlier split, then the
    /// earlier rule.
    fn relax(&mut self, i: usize, k: usize, a: NtId, score: f64, back: Back) {
        let slot = self.slot_mut(i, k, a);
        let cur = self.scores[slot];
        let better = score > cur
            || (score == cur
                && match (back, self.back[slot]) {
                    (
                        Back::Binary { rule, split },
                        Back::Binary {
                            rule: r0,
                            split: s0,
                        },
                    ) => (split, rule) < (s0, r0),
                    (Back::Lexical { rule }, Back::Lexical { rule: r0 }) => rule < r0,
                    _ => false,
                });
        if better {
            self.insert(slot, i, k, a);
            self.scores[slot] = score;
            self.back[slot] = back;
        }
    }

    fn relax_strict(&mut self, i: usize, k: usize, a: NtId, score: f64, back: Back) -> bool {
        let slot = self.slot_mut(i, k, a);
        if score > self.scores[slot] {
            self.insert(slot, i, k, a);
            self.scores[slot] = score;
            self.back[slot] = back;
            true
        } else {
            false
        }
    }
}

/// Best derivation of `[start, 0, n]`, or `None` if the goal item was not
/// derived. The tree keeps binarization nodes (flagged `is_new`).
pub fn viterbi<S: AsRef<str>>(
    chart: &Chart,
    g: &Pcfg,
    start: NtId,
    tokens: &[S],
) -> Option<(Tree, f64)> {
    let n = chart.n;
    if n == 0 || !chart.contains(0, n, start) {
        return None;
    }
    let tree = build(chart, g, 0, n, start, tokens, 0);
    Some((tree, chart.score(0, n, start)))
}

fn build<S: AsRef<str>>(
    chart: &Chart,
    g: &Pcfg,
    i: usize,
    k: usize,
    a: NtId,
    tokens: &[S],
    depth: usize,
) -> Tree {
    assert!(
        depth <= chart.num_labels * (chart.n + 1) * 2,
        "backpointer cycle"
    );
    let label = g.nonterminal(a).to_string();
    let is_new = g.is_new(a);
    let children = match chart.back[chart.slot(i, k, a).expect("derived item")] {
        Back::None => unreachable!("derived item without backpointer"),
        Back::Lexical { .. } => vec![Tree::leaf(tokens[i].as_ref())],
        Back::Unary { rule } => {
            let Rhs::Unary(b) = g.rules()[rule as usize].rhs else {
                unreachable!()
            };
            vec![build(chart, g, i, k, b, tokens, depth + 1)]
        }
        Back::Binary { rule, split } => {
            let Rhs::Binary(b, c) = g.rules()[rule as usize].rhs else {
                unreachable!()
            };
            let j = split as usize;
            vec![
                build(chart, g, i, j, b, tokens, depth + 1),
                build(chart, g, j, k, c, tokens, depth + 1),
            ]
        }
    };
    Tree {
        label,
        children,
        is_new,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartStats {
    pub item_count: usize,
    /// Fraction of items whose span is the span of some node of the gold
    /// tree; 0 for an empty chart.
    pub gold_fraction: f64,
}

/// `% gold`: pass the binarized gold tree so that its intermediate spans
/// count as gold.
pub fn chart_stats(chart: &Chart, gold: &Tree) -> ChartStats {
    let spans: HashSet<(usize, usize)> = gold
        .spans()
        .into_iter()
        .map(|(_, i, k, _)| (i, k))
        .collect();
    let mut hits = 0usize;
    for i in 0..chart.n {
        for k in i + 1..=chart.n {
            if spans.contains(&(i, k)) {
                hits += chart.present[chart.cell(i, k)].len();
            }
        }
    }
    let item_count = chart.items;
    let gold_fraction = if item_count == 0 {
        0.0
    } else {
        hits as f64 / item_count as f64
    };
    ChartStats {
        item_count,
        gold_fraction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::item::AllowAll;
    use crate::tree::read_ptb;

    fn toy() -> Pcfg {
        let mut b = Pcfg::builder();
        b.add_binary_rule("S", "NP", "VP", 0.0);
        b.add_terminal_rule("NP", "a", 0.6f64.ln());
        b.add_terminal_rule("NP", "b", 0.4f64.ln());
        b.add_terminal_rule("VP", "c", 0.0);
        b.build("S")
    }

    #[test]
    fn parses_toy_sentence() {
        let g = toy();
        let chart = parse(&g, &["a", "c"], &AllowAll);
        let (tree, score) = viterbi(&chart, &g, g.start(), &["a", "c"]).unwrap();
        assert_eq!(tree.to_string(), "(S (NP a) (VP c))");
        assert!((score - 0.6f64.ln()).abs() < 1e-12);
        assert_eq!(chart.item_count(), 3);
    }

    #[test]
    fn pruning_everything_fails() {
        let g = toy();
        let chart = parse(&g, &["a", "c"], &|it: &PcfgItem| it.width() < 2);
        assert!(viterbi(&chart, &g, g.start(), &["a", "c"]).is_none());
        assert_eq!(chart.item_count(), 2);
    }

    #[test]
    fn unknown_token_fails_without_error() {
        let g = toy();
        let chart = parse(&g, &["a", "zzz"], &AllowAll);
        assert!(viterbi(&chart, &g, g.start(), &["a", "zzz"]).is_none());
    }

    #[test]
    fn empty_chart() {
        let g = toy();
        let chart = parse::<&str, _>(&g, &[], &AllowAll);
        assert!(viterbi::<&str>(&chart, &g, g.start(), &[]).is_none());
        let gold = Tree::leaf("x");
        assert_eq!(
            chart_stats(&chart, &gold),
            ChartStats {
                item_count: 0,
                gold_fraction: 0.0
            }
        );
    }

    #[test]
    fn ties_prefer_lower_split() {
        // X -> X X is ambiguous on three tokens with equal weights.
        let mut b = Pcfg::builder();
        b.add_binary_rule("X", "X", "X", 0.5f64.ln());
        b.add_terminal_rule("X", "x", 0.5f64.ln());
        let g = b.build("X");
        let toks = ["x", "x", "x"];
        let chart = parse(&g, &toks, &AllowAll);
        let (t1, s1) = viterbi(&chart, &g, g.start(), &toks).unwrap();
        let (t2, s2) = viterbi(&parse(&g, &toks, &AllowAll), &g, g.start(), &toks).unwrap();
        assert_eq!(t1.to_string(), "(X (X x) (X (X x) (X x)))");
        assert_eq!((t1, s1), (t2, s2));
    }

    #[test]
    fn unary_chains_and_cycles() {
        let mut b = Pcfg::builder();
        b.add_unary_rule("S", "A", 0.5f64.ln());
        b.add_unary_rule("A", "S", 0.0);
        b.add_unary_rule("A", "B", 0.5f64.ln());
        b.add_terminal_rule("B", "b", 0.0);
        b.add_binary_rule("S", "B", "B", 0.5f64.ln());
        let g = b.build("S");
        let chart = parse(&g, &["b"], &AllowAll);
        let (t, s) = viterbi(&chart, &g, g.start(), &["b"]).unwrap();
        assert_eq!(t.to_string(), "(S (A (B b)))");
        assert!((s - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gold_fraction_counts_gold_spans() {
        let g = toy();
        let chart = parse(&g, &["a", "c"], &AllowAll);
        let gold = read_ptb("(S (NP a) (VP c))").unwrap().pop().unwrap();
        let st = chart_stats(&chart, &gold);
        assert_eq!(st.item_count, 3);
        assert_eq!(st.gold_fraction, 1.0);
        let other = read_ptb("(S (X a c))").unwrap().pop().unwrap();
        assert!((chart_stats(&chart, &other).gold_fraction - 1.0 / 3.0).abs() < 1e-12);
    }
}
