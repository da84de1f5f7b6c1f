//! Maximum-likelihood PCFG extraction and the rule-file format.
//!
//! Rule files have a `start: <symbol>` header followed by one rule per
//! line, `LHS -> RHS1 [RHS2]<TAB>logprob`. Terminals are written in double
//! quotes; nonterminals with the `@` prefix are binarization intermediates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use indexmap::IndexSet;
use thiserror::Error;

use crate::tree::{Tree, NEW_PREFIX};

pub type NtId = usize;
pub type TermId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("cannot extract a grammar from an empty corpus")]
    EmptyCorpus,
    #[error("node '{label}' has {arity} children; binarize before extraction")]
    NotBinarized { label: String, arity: usize },
    #[error("node '{label}' mixes terminals and nonterminals")]
    MixedRhs { label: String },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("probabilities of '{lhs}' sum to {sum}")]
    NotNormalized { lhs: String, sum: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rhs {
    Terminal(TermId),
    Unary(NtId),
    Binary(NtId, NtId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub lhs: NtId,
    pub rhs: Rhs,
    pub logprob: f64,
}

/// A binarized PCFG with interned symbols. Probabilities are kept in log
/// space.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcfg {
    nonterminals: IndexSet<String>,
    is_new: Vec<bool>,
    terminals: IndexSet<String>,
    start: NtId,
    rules: Vec<Rule>,
}

impl Pcfg {
    pub fn builder() -> PcfgBuilder {
        PcfgBuilder::default()
    }

    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn num_nonterminals(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn nonterminal(&self, id: NtId) -> &str {
        &self.nonterminals[id]
    }

    pub fn nonterminal_id(&self, name: &str) -> Option<NtId> {
        self.nonterminals.get_index_of(name)
    }

    pub fn is_new(&self, id: NtId) -> bool {
        self.is_new[id]
    }

    pub fn terminal(&self, id: TermId) -> &str {
        &self.terminals[id]
    }

    pub fn terminal_id(&self, name: &str) -> Option<TermId> {
        self.terminals.get_index_of(name)
    }

    pub fn num_terminals(&self) -> usize {
        self.terminals.len()
    }

    /// Checks that every left-hand side's rule probabilities sum to one.
    pub fn check_normalized(&self, tol: f64) -> Result<(), GrammarError> {
        for (lhs, sum) in self.lhs_sums() {
            if (sum - 1.0).abs() > tol {
                return Err(GrammarError::NotNormalized {
                    lhs: self.nonterminal(lhs).to_string(),
                    sum,
                });
            }
        }
        Ok(())
    }

    pub fn lhs_sums(&self) -> BTreeMap<NtId, f64> {
        let mut sums = BTreeMap::new();
        for r in &self.rules {
            *sums.entry(r.lhs).or_insert(0.0) += r.logprob.exp();
        }
        sums
    }

    fn rhs_string(&self, rhs: Rhs) -> String {
        match rhs {
            Rhs::Terminal(t) => format!("\"{}\"", self.terminal(t)),
            Rhs::Unary(b) => self.nonterminal(b).to_string(),
            Rhs::Binary(b, c) => format!("{} {}", self.nonterminal(b), self.nonterminal(c)),
        }
    }

    /// Serialize to the rule-file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "start: {}", self.nonterminal(self.start)).unwrap();
        for r in &self.rules {
            writeln!(
                out,
                "{} -> {}\t{}",
                self.nonterminal(r.lhs),
                self.rhs_string(r.rhs),
                r.logprob
            )
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Pcfg, GrammarError> {
        let mut b = PcfgBuilder::default();
        let mut start = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: &str| GrammarError::Format {
                line,
                msg: msg.to_string(),
            };
            if raw.trim().is_empty() {
                continue;
            }
            if let Some(s) = raw.strip_prefix("start:") {
                b.nt(s.trim());
                start = Some(s.trim().to_string());
                continue;
            }
            let (rule, lp) = raw
                .split_once('\t')
                .ok_or_else(|| err("missing tab before logprob"))?;
            let logprob: f64 = lp.trim().parse().map_err(|_| err("bad logprob"))?;
            let (lhs, rhs) = rule
                .split_once(" -> ")
                .ok_or_else(|| err("missing ' -> '"))?;
            let syms: Vec<&str> = rhs.split_whitespace().collect();
            let lhs = lhs.trim();
            match syms.as_slice() {
                [t] if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') => {
                    b.add_terminal_rule(lhs, &t[1..t.len() - 1], logprob);
                }
                [u] => b.add_unary_rule(lhs, u, logprob),
                [l, r] => b.add_binary_rule(lhs, l, r, logprob),
                _ => return Err(err("right-hand side must have one or two symbols")),
            }
        }
        let start = start.ok_or(GrammarError::Format {
            line: 1,
            msg: "missing 'start:' header".into(),
        })?;
        Ok(b.build(&start))
    }
}

/// Incremental construction of a [`Pcfg`]; rule order is preserved.
#[derive(Debug, Default)]
pub struct PcfgBuilder {
    nonterminals: IndexSet<String>,
    terminals: IndexSet<String>,
    rules: Vec<Rule>,
}

impl PcfgBuilder {
    pub fn nt(&mut self, name: &str) -> NtId {
        self.nonterminals.insert_full(name.to_string()).0
    }

    fn t(&mut self, name: &str) -> TermId {
        self.terminals.insert_full(name.to_string()).0
    }

    pub fn add_terminal_rule(&mut self, lhs: &str, word: &str, logprob: f64) {
        let lhs = self.nt(lhs);
        let t = self.t(word);
        self.rules.push(Rule {
            lhs,
            rhs: Rhs::Terminal(t),
            logprob,
        });
    }

    pub fn add_unary_rule(&mut self, lhs: &str, child: &str, logprob: f64) {
        let lhs = self.nt(lhs);
        let c = self.nt(child);
        self.rules.push(Rule {
            lhs,
            rhs: Rhs::Unary(c),
            logprob,
        });
    }

    pub fn add_binary_rule(&mut self, lhs: &str, left: &str, right: &str, logprob: f64) {
        let lhs = self.nt(lhs);
        let l = self.nt(left);
        let r = self.nt(right);
        self.rules.push(Rule {
            lhs,
            rhs: Rhs::Binary(l, r),
            logprob,
        });
    }

    pub fn build(mut self, start: &str) -> Pcfg {
        let start = self.nt(start);
        let is_new = self
            .nonterminals
            .iter()
            .map(|n| n.starts_with(NEW_PREFIX))
            .collect();
        Pcfg {
            nonterminals: self.nonterminals,
            is_new,
            terminals: self.terminals,
            start,
            rules: self.rules,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum RhsKey {
    Terminal(String),
    Unary(String),
    Binary(String, String),
}

/// Relative-frequency estimate over binarized trees.
///
/// With `pos_as_terminals`, each preterminal's word is replaced by the
/// preterminal label itself, so the grammar has lexical rules `DT -> "DT"`
/// and parses sequences of POS tags.
pub fn extract_pcfg(trees: &[Tree], pos_as_terminals: bool) -> Result<Pcfg, GrammarError> {
    if trees.is_empty() {
        return Err(GrammarError::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, BTreeMap<RhsKey, u64>> = BTreeMap::new();
    let mut roots: BTreeMap<&str, usize> = BTreeMap::new();

    fn visit(
        t: &Tree,
        pos: bool,
        counts: &mut BTreeMap<String, BTreeMap<RhsKey, u64>>,
    ) -> Result<(), GrammarError> {
        if t.is_leaf() {
            return Ok(());
        }
        let key = if t.is_preterminal() {
            let word = if pos {
                t.label.clone()
            } else {
                t.children[0].label.clone()
            };
            RhsKey::Terminal(word)
        } else {
            if t.children.iter().any(Tree::is_leaf) {
                return Err(GrammarError::MixedRhs {
                    label: t.label.clone(),
                });
            }
            match t.children.as_slice() {
                [c] => RhsKey::Unary(c.label.clone()),
                [l, r] => RhsKey::Binary(l.label.clone(), r.label.clone()),
                _ => {
                    return Err(GrammarError::NotBinarized {
                        label: t.label.clone(),
                        arity: t.children.len(),
                    })
                }
            }
        };
        *counts
            .entry(t.label.clone())
            .or_default()
            .entry(key)
            .or_insert(0) += 1;
        if !t.is_preterminal() {
            for c in &t.children {
                visit(c, pos, counts)?;
            }
        }
        Ok(())
    }

    for t in trees {
        if t.is_leaf() {
            continue;
        }
        *roots.entry(&t.label).or_insert(0) += 1;
        visit(t, pos_as_terminals, &mut counts)?;
    }
    // Majority root label; ties go to the lexicographically smallest.
    let start = roots
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(l, _)| l.to_string())
        .ok_or(GrammarError::EmptyCorpus)?;

    let mut b = PcfgBuilder::default();
    b.nt(&start);
    for (lhs, rhss) in &counts {
        let total: u64 = rhss.values().sum();
        for (rhs, &c) in rhss {
            let lp = (c as f64 / total as f64).ln();
            match rhs {
                RhsKey::Terminal(w) => b.add_terminal_rule(lhs, w, lp),
                RhsKey::Unary(u) => b.add_unary_rule(lhs, u, lp),
                RhsKey::Binary(l, r) => b.add_binary_rule(lhs, l, r, lp),
            }
        }
    }
    Ok(b.build(&start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{binarize, read_ptb};

    fn prob(g: &Pcfg, lhs: &str, rhs: &str) -> f64 {
        let text = g.to_text();
        for l in text.lines().skip(1) {
            let (rule, lp) = l.split_once('\t').unwrap();
            if rule == format!("{lhs} -> {rhs}") {
                return lp.parse::<f64>().unwrap().exp();
            }
        }
        panic!("no rule {lhs} -> {rhs}");
    }

    #[test]
    fn single_tree() {
        let trees = read_ptb("(S (A a) (B b))").unwrap();
        let g = extract_pcfg(&trees, false).unwrap();
        assert_eq!(g.rules().len(), 3);
        assert_eq!(prob(&g, "S", "A B"), 1.0);
        assert_eq!(prob(&g, "A", "\"a\""), 1.0);
        assert_eq!(prob(&g, "B", "\"b\""), 1.0);
        assert_eq!(g.nonterminal(g.start()), "S");
    }

    #[test]
    fn relative_frequency() {
        let trees = read_ptb("(S (A a) (B b)) (S (A a) (C c))").unwrap();
        let g = extract_pcfg(&trees, false).unwrap();
        assert!((prob(&g, "S", "A B") - 0.5).abs() < 1e-12);
        assert!((prob(&g, "S", "A C") - 0.5).abs() < 1e-12);
        g.check_normalized(1e-9).unwrap();
    }

    #[test]
    fn pos_terminals_and_new_flags() {
        let trees = read_ptb("(S (NP (DT the) (JJ big) (NN dog)) (VP (VBD ran)))").unwrap();
        let bin: Vec<Tree> = trees.iter().map(|t| binarize(t, 2)).collect();
        let g = extract_pcfg(&bin, true).unwrap();
        assert_eq!(prob(&g, "DT", "\"DT\""), 1.0);
        let new = g.nonterminal_id("@NP[DT]").unwrap();
        assert!(g.is_new(new));
        assert!(!g.is_new(g.nonterminal_id("NP").unwrap()));
        assert!(g.terminal_id("the").is_none());
    }

    #[test]
    fn errors() {
        assert_eq!(extract_pcfg(&[], false), Err(GrammarError::EmptyCorpus));
        let flat = read_ptb("(S (A a) (B b) (C c))").unwrap();
        assert!(matches!(
            extract_pcfg(&flat, false),
            Err(GrammarError::NotBinarized { .. })
        ));
        let mixed = read_ptb("(S (A a) b)").unwrap();
        assert!(matches!(
            extract_pcfg(&mixed, false),
            Err(GrammarError::MixedRhs { .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let trees = read_ptb("(S (NP (DT the) (NN dog)) (VP (VBD saw) (NP (PRP it)))) (S (NP (PRP he)) (VP (VBD ran)))").unwrap();
        let g = extract_pcfg(&trees, false).unwrap();
        let text = g.to_text();
        let back = Pcfg::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back, g);
        assert!(text.starts_with("start: S\n"));
    }

    #[test]
    fn format_errors_carry_line_numbers() {
        let err = Pcfg::from_text("start: S\nS -> A B -0.5\n").unwrap_err();
        assert!(matches!(err, GrammarError::Format { line: 2, .. }));
    }
}
