//! Begin/end chart constraints and the allowability predicates built on them.
//!
//! Positions are string offsets `0..=n`. A begin constraint bans position
//! `i` as the start of any constituent of width two or more; an end
//! constraint bans `k` as the end of one. Banned begins range over
//! `0..=n-2`, banned ends over `2..=n`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::item::{Allowable, PcfgItem, TagItem};
use crate::tree::{Factoring, Tree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("begin position {pos} outside 0..={max} for n={n}")]
    BeginOutOfRange { pos: usize, max: isize, n: usize },
    #[error("end position {pos} outside 2..={n}")]
    EndOutOfRange { pos: usize, n: usize },
    #[error("threshold {0} outside [0.5, 1)")]
    BadThreshold(f64),
    #[error("expected {n} probabilities, got {got}")]
    LengthMismatch { n: usize, got: usize },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeginEndConstraints {
    n: usize,
    begin: Vec<bool>,
    end: Vec<bool>,
}

impl BeginEndConstraints {
    /// No position banned.
    pub fn empty(n: usize) -> Self {
        BeginEndConstraints {
            n,
            begin: vec![false; n + 1],
            end: vec![false; n + 1],
        }
    }

    pub fn new(
        n: usize,
        begin_banned: impl IntoIterator<Item = usize>,
        end_banned: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ConstraintError> {
        let mut c = Self::empty(n);
        for b in begin_banned {
            if n < 2 || b > n - 2 {
                return Err(ConstraintError::BeginOutOfRange {
                    pos: b,
                    max: n as isize - 2,
                    n,
                });
            }
            c.begin[b] = true;
        }
        for e in end_banned {
            if e < 2 || e > n {
                return Err(ConstraintError::EndOutOfRange { pos: e, n });
            }
            c.end[e] = true;
        }
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn begin_banned(&self, i: usize) -> bool {
        self.begin.get(i).copied().unwrap_or(false)
    }

    pub fn end_banned(&self, k: usize) -> bool {
        self.end.get(k).copied().unwrap_or(false)
    }

    pub fn begin_set(&self) -> BTreeSet<usize> {
        (0..=self.n).filter(|&i| self.begin[i]).collect()
    }

    pub fn end_set(&self) -> BTreeSet<usize> {
        (0..=self.n).filter(|&k| self.end[k]).collect()
    }

    /// Candidate begin positions, `0..=n-2`.
    pub fn begin_window(&self) -> std::ops::Range<usize> {
        0..self.n.saturating_sub(1)
    }

    /// Candidate end positions, `2..=n`.
    pub fn end_window(&self) -> std::ops::Range<usize> {
        if self.n < 2 {
            2..2
        } else {
            2..self.n + 1
        }
    }

    /// Positions banned in either.
    pub fn union(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        BeginEndConstraints {
            n: self.n,
            begin: self
                .begin
                .iter()
                .zip(&other.begin)
                .map(|(a, b)| *a || *b)
                .collect(),
            end: self
                .end
                .iter()
                .zip(&other.end)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }
}

/// Constraints implied by a gold tree: every position at which no
/// constituent of width two or more begins (ends).
pub fn gold_constraints(t: &Tree) -> BeginEndConstraints {
    let n = t.num_leaves();
    let mut begins = vec![false; n + 1];
    let mut ends = vec![false; n + 1];
    for (_, i, k, is_new) in t.spans() {
        if !is_new && k - i >= 2 {
            begins[i] = true;
            ends[k] = true;
        }
    }
    let mut c = BeginEndConstraints::empty(n);
    for i in 0..n.saturating_sub(1) {
        c.begin[i] = !begins[i];
    }
    for k in 2..=n {
        c.end[k] = !ends[k];
    }
    c
}

/// Threshold boundary probabilities into constraints.
///
/// `p_begin[i]` is the probability that a constituent begins at token `i`;
/// `p_end[i]` that one ends with token `i` (string position `i + 1`). A
/// position is banned when its probability falls below `1 - theta`.
/// Position 0 is never banned as a begin and `n` never as an end, since
/// the sentence itself spans `[0, n)`.
pub fn from_probs(
    p_begin: &[f64],
    p_end: &[f64],
    theta: f64,
) -> Result<BeginEndConstraints, ConstraintError> {
    if !(0.5..1.0).contains(&theta) {
        return Err(ConstraintError::BadThreshold(theta));
    }
    let n = p_begin.len();
    if p_end.len() != n {
        return Err(ConstraintError::LengthMismatch {
            n,
            got: p_end.len(),
        });
    }
    let cut = 1.0 - theta;
    let mut c = BeginEndConstraints::empty(n);
    for i in 1..n.saturating_sub(1) {
        c.begin[i] = p_begin[i] < cut;
    }
    for k in 2..n {
        c.end[k] = p_end[k - 1] < cut;
    }
    Ok(c)
}

fn in_begin(c: &BeginEndConstraints, i: usize) -> bool {
    c.begin_banned(i)
}

fn in_end(c: &BeginEndConstraints, k: usize) -> bool {
    c.end_banned(k)
}

/// PCFG allowability for grammars binarized with [`Factoring::Right`].
pub fn pcfg_allowable(item: &PcfgItem, c: &BeginEndConstraints) -> bool {
    pcfg_allowable_with(item, c, Factoring::Right)
}

/// `[A, i, k]` is allowable if it has width one, or if `i` is not a banned
/// begin and `k` is not a banned end. For a binarization nonterminal the
/// boundary that binarization leaves inside the parent (the end under left
/// factoring, the begin under right factoring) is exempt.
pub fn pcfg_allowable_with(item: &PcfgItem, c: &BeginEndConstraints, factoring: Factoring) -> bool {
    if item.width() == 1 {
        return true;
    }
    let (skip_begin, skip_end) = match (item.is_new, factoring) {
        (false, _) => (false, false),
        (true, Factoring::Left) => (false, true),
        (true, Factoring::Right) => (true, false),
    };
    (skip_begin || !in_begin(c, item.i)) && (skip_end || !in_end(c, item.k))
}

fn outer_ok(item: &TagItem, c: &BeginEndConstraints) -> bool {
    if item.width() < 2 {
        return true;
    }
    (item.open_begin || !in_begin(c, item.i)) && (item.open_end || !in_end(c, item.l))
}

/// TAG allowability checking both the outer span and the gap.
pub fn tag_allowable_cc(item: &TagItem, c: &BeginEndConstraints) -> bool {
    tag_allowable_cc_with(item, c, true)
}

/// As [`tag_allowable_cc`]; `exempt_unit_gaps` controls whether gaps of
/// width one skip the gap test.
pub fn tag_allowable_cc_with(
    item: &TagItem,
    c: &BeginEndConstraints,
    exempt_unit_gaps: bool,
) -> bool {
    if !outer_ok(item, c) {
        return false;
    }
    match item.gap {
        Some((j, k)) if !(exempt_unit_gaps && k - j == 1) => !in_begin(c, j) && !in_end(c, k),
        _ => true,
    }
}

/// TAG allowability checking only the outer span.
pub fn tag_allowable_be(item: &TagItem, c: &BeginEndConstraints) -> bool {
    outer_ok(item, c)
}

/// [`Allowable`] adapter for PCFG items.
#[derive(Debug, Clone, Copy)]
pub struct PcfgConstraintFilter<'a> {
    pub constraints: &'a BeginEndConstraints,
    pub factoring: Factoring,
}

impl<'a> PcfgConstraintFilter<'a> {
    pub fn new(constraints: &'a BeginEndConstraints) -> Self {
        PcfgConstraintFilter {
            constraints,
            factoring: Factoring::Right,
        }
    }
}

impl Allowable<PcfgItem> for PcfgConstraintFilter<'_> {
    fn allows(&self, item: &PcfgItem) -> bool {
        pcfg_allowable_with(item, self.constraints, self.factoring)
    }

    fn span_verdict(&self, i: usize, k: usize, is_new: bool) -> Option<bool> {
        Some(pcfg_allowable_with(
            &PcfgItem {
                label: 0,
                is_new,
                i,
                k,
            },
            self.constraints,
            self.factoring,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TagStrategy {
    /// Constrain outer span and gap.
    Cc,
    /// Constrain the outer span only.
    Be,
}

impl std::str::FromStr for TagStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cc" => Ok(TagStrategy::Cc),
            "be" => Ok(TagStrategy::Be),
            other => Err(format!("unknown strategy '{other}' (expected cc|be)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TagConstraintFilter<'a> {
    pub constraints: &'a BeginEndConstraints,
    pub strategy: TagStrategy,
    pub exempt_unit_gaps: bool,
}

impl<'a> TagConstraintFilter<'a> {
    pub fn new(constraints: &'a BeginEndConstraints, strategy: TagStrategy) -> Self {
        TagConstraintFilter {
            constraints,
            strategy,
            exempt_unit_gaps: true,
        }
    }
}

impl Allowable<TagItem> for TagConstraintFilter<'_> {
    fn allows(&self, item: &TagItem) -> bool {
        match self.strategy {
            TagStrategy::Cc => tag_allowable_cc_with(item, self.constraints, self.exempt_unit_gaps),
            TagStrategy::Be => tag_allowable_be(item, self.constraints),
        }
    }
}

fn join(set: &BTreeSet<usize>) -> String {
    let mut s = String::new();
    for (idx, p) in set.iter().enumerate() {
        if idx > 0 {
            s.push(' ');
        }
        write!(s, "{p}").unwrap();
    }
    s
}

/// One line of the constraints file, without trailing newline.
pub fn constraints_to_line(id: usize, c: &BeginEndConstraints) -> String {
    let b = join(&c.begin_set());
    let e = join(&c.end_set());
    let field = |tag: &str, v: String| {
        if v.is_empty() {
            format!("{tag}:")
        } else {
            format!("{tag}: {v}")
        }
    };
    format!("{id}\t{}\t{}\t{}", c.n, field("B", b), field("E", e))
}

pub fn constraints_to_file(entries: &[(usize, BeginEndConstraints)]) -> String {
    let mut out = String::new();
    for (id, c) in entries {
        out.push_str(&constraints_to_line(*id, c));
        out.push('\n');
    }
    out
}

pub fn constraints_from_file(
    text: &str,
) -> Result<Vec<(usize, BeginEndConstraints)>, ConstraintError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |msg: String| ConstraintError::Format { line, msg };
        let fields: Vec<&str> = raw.split('\t').collect();
        let [id, n, b, e] = fields.as_slice() else {
            return Err(err(format!(
                "expected 4 tab-separated fields, got {}",
                fields.len()
            )));
        };
        let id: usize = id
            .parse()
            .map_err(|_| err(format!("bad sentence id '{id}'")))?;
        let n: usize = n.parse().map_err(|_| err(format!("bad length '{n}'")))?;
        let positions = |field: &str, tag: &str| -> Result<Vec<usize>, ConstraintError> {
            let rest = field
                .strip_prefix(tag)
                .ok_or_else(|| err(format!("expected '{tag}' field")))?;
            rest.split_whitespace()
                .map(|p| p.parse().map_err(|_| err(format!("bad position '{p}'"))))
                .collect()
        };
        let begin = positions(b, "B:")?;
        let end = positions(e, "E:")?;
        let c = BeginEndConstraints::new(n, begin, end).map_err(|e| err(e.to_string()))?;
        out.push((id, c));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::read_ptb;

    fn tree(s: &str) -> Tree {
        read_ptb(s).unwrap().pop().unwrap()
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn gold_from_example_tree() {
        let t = tree("(S (NP (DT the) (NN cat)) (VP (VBD sat) (PP (IN on) (NN mats))))");
        let c = gold_constraints(&t);
        assert_eq!(c.begin_set(), set(&[1]));
        assert_eq!(c.end_set(), set(&[3, 4]));
    }

    #[test]
    fn gold_right_branching_has_no_begin_bans() {
        let t = tree("(A (a a) (B (b b) (C (c c) (D (d d) (e e)))))");
        let c = gold_constraints(&t);
        assert!(c.begin_set().is_empty());
        assert_eq!(c.end_set(), set(&[2, 3, 4]));
    }

    #[test]
    fn gold_two_tokens() {
        let c = gold_constraints(&tree("(S (A a) (B b))"));
        assert!(c.begin_set().is_empty() && c.end_set().is_empty());
    }

    #[test]
    fn range_checks() {
        assert!(BeginEndConstraints::new(5, [3], [5]).is_ok());
        assert!(matches!(
            BeginEndConstraints::new(5, [4], []),
            Err(ConstraintError::BeginOutOfRange { .. })
        ));
        assert!(matches!(
            BeginEndConstraints::new(5, [], [1]),
            Err(ConstraintError::EndOutOfRange { .. })
        ));
        assert!(matches!(
            BeginEndConstraints::new(5, [], [6]),
            Err(ConstraintError::EndOutOfRange { .. })
        ));
        assert!(BeginEndConstraints::new(1, [0], []).is_err());
    }

    #[test]
    fn thresholding() {
        let mut pb = vec![0.9; 6];
        pb[3] = 0.4;
        let pe = vec![0.9; 6];
        assert!(from_probs(&pb, &pe, 0.5).unwrap().begin_banned(3));
        assert!(!from_probs(&pb, &pe, 0.7).unwrap().begin_banned(3));
        assert!(matches!(
            from_probs(&pb, &pe, 0.4),
            Err(ConstraintError::BadThreshold(_))
        ));
        assert!(matches!(
            from_probs(&pb, &pe, 1.0),
            Err(ConstraintError::BadThreshold(_))
        ));
    }

    #[test]
    fn thresholding_never_bans_sentence_edges() {
        let c = from_probs(&[0.0; 5], &[0.0; 5], 0.5).unwrap();
        assert_eq!(c.begin_set(), set(&[1, 2, 3]));
        assert_eq!(c.end_set(), set(&[2, 3, 4]));
        let one = from_probs(&[0.0], &[0.0], 0.5).unwrap();
        assert!(one.begin_set().is_empty() && one.end_set().is_empty());
    }

    fn pitem(i: usize, k: usize, is_new: bool) -> PcfgItem {
        PcfgItem {
            label: 0,
            is_new,
            i,
            k,
        }
    }

    #[test]
    fn pcfg_predicate_examples() {
        let c = BeginEndConstraints::new(5, [1], []).unwrap();
        assert!(!pcfg_allowable(&pitem(1, 3, false), &c));
        let c = BeginEndConstraints::new(5, [2], [3]).unwrap();
        assert!(pcfg_allowable(&pitem(2, 3, false), &c));
        let c = BeginEndConstraints::new(5, [], [3]).unwrap();
        // The end-exemption for new nonterminals (left factoring).
        assert!(pcfg_allowable_with(&pitem(0, 3, true), &c, Factoring::Left));
        assert!(!pcfg_allowable_with(
            &pitem(0, 3, false),
            &c,
            Factoring::Left
        ));
        // Right-factored intermediates share their end with the parent.
        assert!(!pcfg_allowable_with(
            &pitem(0, 3, true),
            &c,
            Factoring::Right
        ));
        let c = BeginEndConstraints::new(5, [1], []).unwrap();
        assert!(pcfg_allowable_with(
            &pitem(1, 3, true),
            &c,
            Factoring::Right
        ));
        assert!(!pcfg_allowable_with(
            &pitem(1, 3, true),
            &c,
            Factoring::Left
        ));
    }

    #[test]
    fn tag_cc_examples() {
        let b1 = BeginEndConstraints::new(6, [1], []).unwrap();
        assert!(!tag_allowable_cc(&TagItem::new(1, None, 4), &b1));
        let b2 = BeginEndConstraints::new(6, [2], []).unwrap();
        assert!(tag_allowable_cc(&TagItem::new(0, Some((2, 3)), 5), &b2));
        assert!(!tag_allowable_cc_with(
            &TagItem::new(0, Some((2, 3)), 5),
            &b2,
            false
        ));
        assert!(!tag_allowable_cc(&TagItem::new(0, Some((2, 4)), 5), &b2));
        let none = BeginEndConstraints::empty(6);
        assert!(tag_allowable_cc(&TagItem::new(0, Some((2, 4)), 6), &none));
    }

    #[test]
    fn tag_be_examples() {
        let b2 = BeginEndConstraints::new(6, [2], []).unwrap();
        assert!(tag_allowable_be(&TagItem::new(0, Some((2, 4)), 6), &b2));
        let b1 = BeginEndConstraints::new(6, [1], []).unwrap();
        assert!(!tag_allowable_be(&TagItem::new(1, Some((2, 4)), 6), &b1));
    }

    #[test]
    fn open_boundaries_are_exempt() {
        let c = BeginEndConstraints::new(6, [1], [4]).unwrap();
        let mut it = TagItem::new(1, None, 4);
        assert!(!tag_allowable_cc(&it, &c));
        it.open_begin = true;
        assert!(!tag_allowable_cc(&it, &c));
        it.open_end = true;
        assert!(tag_allowable_cc(&it, &c));
    }

    #[test]
    fn cc_implies_be_exhaustive() {
        // Every index tuple for n <= 8 against every constraint set drawn
        // from a small family.
        for n in 2..=8usize {
            let sets: Vec<BeginEndConstraints> = (0..16u32)
                .map(|mask| {
                    let b: Vec<usize> = (0..n - 1).filter(|i| mask >> (i % 4) & 1 == 1).collect();
                    let e: Vec<usize> =
                        (2..=n).filter(|k| mask >> ((k + 1) % 4) & 1 == 0).collect();
                    BeginEndConstraints::new(n, b, e).unwrap()
                })
                .collect();
            for c in &sets {
                for i in 0..=n {
                    for l in i..=n {
                        let mut items = vec![TagItem::new(i, None, l)];
                        for j in i..=l {
                            for k in j..=l {
                                items.push(TagItem::new(i, Some((j, k)), l));
                            }
                        }
                        for it in items {
                            if tag_allowable_cc(&it, c) {
                                assert!(tag_allowable_be(&it, c), "{it:?}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn empty_constraints_allow_everything() {
        let c = BeginEndConstraints::empty(7);
        for i in 0..7 {
            for k in i + 1..=7 {
                assert!(pcfg_allowable(&pitem(i, k, false), &c));
                assert!(tag_allowable_cc(&TagItem::new(i, None, k), &c));
                assert!(tag_allowable_be(&TagItem::new(i, Some((i, k)), k), &c));
            }
        }
    }

    #[test]
    fn file_format() {
        let c = BeginEndConstraints::new(5, [1], [3, 4]).unwrap();
        assert_eq!(constraints_to_line(7, &c), "7\t5\tB: 1\tE: 3 4");
        assert_eq!(
            constraints_to_line(7, &BeginEndConstraints::empty(5)),
            "7\t5\tB:\tE:"
        );
        let parsed = constraints_from_file("7\t5\tB: 1\tE: 3 4\n7\t5\tB:\tE:\n").unwrap();
        assert_eq!(parsed[0], (7, c));
        assert_eq!(parsed[1], (7, BeginEndConstraints::empty(5)));
    }

    #[test]
    fn file_errors_have_line_numbers() {
        let err = constraints_from_file("1\t3\tB:\tE:\n2\t3\tB: x\tE:\n").unwrap_err();
        assert!(matches!(err, ConstraintError::Format { line: 2, .. }));
        let err = constraints_from_file("1\t3\tB: 5\tE:\n").unwrap_err();
        assert!(matches!(err, ConstraintError::Format { line: 1, .. }));
    }
}
