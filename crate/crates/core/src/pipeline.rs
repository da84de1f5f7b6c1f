//! Per-sentence parsing pipelines shared by the command line tool and the
//! benchmark harness. Each run turns one input sentence into a
//! [`SentenceResult`] with timing, item counts and, when a gold tree is
//! known, bracket counts and the `% gold` fraction.

use thiserror::Error;

use crate::cky::{chart_stats, viterbi, CkyParser};
use crate::constraints::{
    BeginEndConstraints, PcfgConstraintFilter, TagConstraintFilter, TagStrategy,
};
use crate::ctf::{ctf_predicate, project, CoarseMap};
use crate::eval::{
    gold_bracket_count, measure, parseval, tag_gold_fraction, BracketCounts, EvalError,
    SentenceResult, Status,
};
use crate::grammar::Pcfg;
use crate::item::{AllowAll, Allowable, Both, PcfgItem, TagItem};
use crate::supertag::{
    artificial_string, relabel, sentence_grammar, Inventory, SupertagAssignment,
};
use crate::tag::{best_derivation, TagParser};
use crate::tree::{binarize_with, debinarize, read_ptb, Factoring, Tree, TreebankError};

#[derive(Debug, Error)]
pub enum InputError {
    #[error(transparent)]
    Treebank(#[from] TreebankError),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// A sentence to parse: words, their POS tags and optionally a gold tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub words: Vec<String>,
    pub pos: Vec<String>,
    pub gold: Option<Tree>,
}

impl Sentence {
    pub fn from_tree(t: &Tree) -> Sentence {
        Sentence {
            words: t.leaves().iter().map(|s| s.to_string()).collect(),
            pos: t.preterminals().iter().map(|s| s.to_string()).collect(),
            gold: Some(t.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Read parser input. Text whose first non-blank character is `(` is a
/// treebank and supplies gold trees. Otherwise every non-blank line is one
/// sentence of whitespace-separated `word/POS` tokens; a token without a
/// slash serves as both word and tag.
pub fn read_sentences(text: &str) -> Result<Vec<Sentence>, InputError> {
    if text.trim_start().starts_with('(') {
        let trees = read_ptb(text)?;
        for (i, t) in trees.iter().enumerate() {
            if t.preterminals().len() != t.num_leaves() {
                return Err(InputError::Format {
                    line: i + 1,
                    msg: "tree without a POS layer over every token".into(),
                });
            }
        }
        return Ok(trees.iter().map(Sentence::from_tree).collect());
    }
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (words, pos) = line
            .split_whitespace()
            .map(|tok| match tok.rsplit_once('/') {
                Some((w, p)) if !w.is_empty() && !p.is_empty() => (w.to_string(), p.to_string()),
                _ => (tok.to_string(), tok.to_string()),
            })
            .unzip();
        out.push(Sentence {
            words,
            pos,
            gold: None,
        });
    }
    Ok(out)
}

/// Coarse grammar and threshold for coarse-to-fine pruning.
#[derive(Debug, Clone)]
pub struct CtfSetup {
    pub coarse: Pcfg,
    pub map: CoarseMap,
    pub tau: f64,
}

impl CtfSetup {
    pub fn new(fine: &Pcfg, map: CoarseMap, tau: f64) -> CtfSetup {
        CtfSetup {
            coarse: project(fine, &map),
            map,
            tau,
        }
    }
}

fn result(
    sent_id: usize,
    s: &Sentence,
    pred: Option<Tree>,
    items: usize,
    gold_fraction: f64,
    chart_ms: f64,
    total_ms: f64,
) -> Result<SentenceResult, EvalError> {
    match &s.gold {
        Some(g) => SentenceResult::new(sent_id, g, pred, items, gold_fraction, chart_ms, total_ms),
        None => Ok(SentenceResult {
            sent_id,
            n: s.len(),
            items,
            chart_ms,
            total_ms,
            gold_fraction: f64::NAN,
            status: if pred.is_some() {
                Status::Parsed
            } else {
                Status::Failed
            },
            brackets: BracketCounts::default(),
            tree: pred,
        }),
    }
}

/// CKY parsing with optional coarse-to-fine pruning and chart constraints.
pub struct PcfgRun<'a> {
    pub parser: &'a CkyParser<'a>,
    pub ctf: Option<&'a CtfSetup>,
    /// Parse the POS sequence instead of the words.
    pub pos_terminals: bool,
    /// Markovization used to binarize gold trees for `% gold`.
    pub markov: usize,
    pub factoring: Factoring,
}

impl PcfgRun<'_> {
    pub fn run(
        &self,
        sent_id: usize,
        s: &Sentence,
        constraints: Option<&BeginEndConstraints>,
    ) -> Result<SentenceResult, EvalError> {
        let g = self.parser.grammar();
        let terminals = if self.pos_terminals { &s.pos } else { &s.words };
        let (chart, best, chart_ms, total_ms) = measure(
            || {
                let cc = constraints.map(|c| PcfgConstraintFilter {
                    constraints: c,
                    factoring: self.factoring,
                });
                let ctf = self
                    .ctf
                    .map(|x| ctf_predicate(&x.coarse, g, &x.map, terminals, x.tau));
                let allow: Box<dyn Allowable<PcfgItem> + '_> = match (ctf, cc) {
                    (Some(a), Some(b)) => Box::new(Both(a, b)),
                    (Some(a), None) => Box::new(a),
                    (None, Some(b)) => Box::new(b),
                    (None, None) => Box::new(AllowAll),
                };
                self.parser.parse(terminals, &allow)
            },
            |chart| viterbi(chart, g, g.start(), terminals),
        );
        let pred = best.map(|(t, _)| debinarize(&t).with_leaves(&s.words));
        let gold_fraction = match &s.gold {
            Some(gold) => {
                chart_stats(&chart, &binarize_with(gold, self.markov, self.factoring)).gold_fraction
            }
            None => f64::NAN,
        };
        result(
            sent_id,
            s,
            pred,
            chart.item_count(),
            gold_fraction,
            chart_ms,
            total_ms,
        )
    }
}

/// Where the elementary trees for a TAG parse come from.
pub enum TagSource<'a> {
    /// A whole grammar, lexicalized by words or by POS tags.
    Grammar {
        parser: &'a TagParser,
        pos_terminals: bool,
    },
    /// Sentence grammars built from per-token supertag candidates.
    Supertags { inventory: &'a Inventory },
}

pub struct TagRun<'a> {
    pub source: TagSource<'a>,
    pub strategy: TagStrategy,
}

impl TagRun<'_> {
    /// `assignment` is required for [`TagSource::Supertags`] and ignored
    /// otherwise.
    pub fn run(
        &self,
        sent_id: usize,
        s: &Sentence,
        constraints: Option<&BeginEndConstraints>,
        assignment: Option<&SupertagAssignment>,
    ) -> Result<SentenceResult, EvalError> {
        let filter = constraints.map(|c| TagConstraintFilter::new(c, self.strategy));
        let allow: &dyn Allowable<TagItem> = match &filter {
            Some(f) => f,
            None => &AllowAll,
        };
        let (chart, pred, chart_ms, total_ms) = match &self.source {
            TagSource::Grammar {
                parser,
                pos_terminals,
            } => {
                let terminals = if *pos_terminals { &s.pos } else { &s.words };
                let (chart, best, c, t) =
                    measure(|| parser.parse(terminals, allow), best_derivation);
                (chart, best.map(|(_, t, _)| t), c, t)
            }
            TagSource::Supertags { inventory } => {
                let a = assignment.expect("supertag run without an assignment");
                let (chart, best, c, t) = measure(
                    || {
                        let g = sentence_grammar(inventory, a);
                        TagParser::new(&g).parse(&artificial_string(s.len()), allow)
                    },
                    best_derivation,
                );
                let tree = best.map(|(_, t, _)| {
                    relabel(&t, &s.words).expect("sentence grammar yields positions")
                });
                (chart, tree, c, t)
            }
        };
        let pred = pred.map(|t| debinarize(&t).with_leaves(&s.words));
        let gold_fraction = s
            .gold
            .as_ref()
            .map_or(f64::NAN, |g| tag_gold_fraction(&chart, g));
        result(
            sent_id,
            s,
            pred,
            chart.item_count(),
            gold_fraction,
            chart_ms,
            total_ms,
        )
    }
}

/// Sum bracket counts of predicted trees against gold trees. `None`
/// predictions are failed parses and contribute only their gold brackets.
pub fn score_corpus(gold: &[Tree], pred: &[Option<Tree>]) -> Result<BracketCounts, EvalError> {
    let mut total = BracketCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        total += match p {
            Some(p) => parseval(g, p)?,
            None => BracketCounts {
                matched: 0,
                gold: gold_bracket_count(g),
                pred: 0,
            },
        };
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::gold_constraints;
    use crate::grammar::extract_pcfg;
    use crate::tree::binarize;

    #[test]
    fn reads_both_input_forms() {
        let s = read_sentences("the/DT dog/NN\n\nbarks\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].pos, ["DT", "NN"]);
        assert_eq!(s[1].words, ["barks"]);
        assert_eq!(s[1].pos, ["barks"]);
        let t = read_sentences("(S (NP (DT the) (NN dog)) (VP (VBZ barks)))").unwrap();
        assert_eq!(t[0].words, ["the", "dog", "barks"]);
        assert!(t[0].gold.is_some());
        assert!(read_sentences("(S (NP the dog))").is_err());
    }

    #[test]
    fn pcfg_run_recovers_gold_under_gold_constraints() {
        let trees = read_ptb(
            "(S (NP (DT the) (NN dog)) (VP (VBZ barks) (PP (IN at) (NP (DT the) (NN cat)))))",
        )
        .unwrap();
        let g = extract_pcfg(&[binarize(&trees[0].pos_as_terminals(), 2)], false).unwrap();
        let parser = CkyParser::new(&g);
        let run = PcfgRun {
            parser: &parser,
            ctf: None,
            pos_terminals: true,
            markov: 2,
            factoring: Factoring::Right,
        };
        let s = Sentence::from_tree(&trees[0]);
        let c = gold_constraints(&trees[0]);
        let r = run.run(0, &s, Some(&c)).unwrap();
        assert_eq!(r.status, Status::Parsed);
        assert_eq!(r.tree.as_ref(), Some(&trees[0]));
        assert_eq!(r.brackets.matched, r.brackets.gold);
        assert!((r.gold_fraction - 1.0).abs() < 1e-12);
        let ctf = CtfSetup::new(&g, CoarseMap::new(), 1e-5);
        let run = PcfgRun {
            ctf: Some(&ctf),
            ..run
        };
        assert_eq!(
            run.run(0, &s, Some(&c)).unwrap().tree.as_ref(),
            Some(&trees[0])
        );
    }
}
