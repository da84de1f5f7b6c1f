//! Single-level coarse-to-fine pruning.
//!
//! The fine grammar is projected onto coarse symbols, the coarse grammar is
//! parsed with inside-outside, and a fine item `[A, i, k]` survives when the
//! posterior of its coarse image at `[i, k)` reaches a threshold.

use std::collections::BTreeMap;

use indexmap::IndexMap;

use crate::grammar::{GrammarError, NtId, Pcfg, Rhs};
use crate::item::{Allowable, PcfgItem};
use crate::tree::NEW_PREFIX;

/// Total mapping from fine to coarse nonterminals.
///
/// Explicit entries win; every other label maps to its default image: the
/// `@` prefix is dropped and the label is cut at the first character that
/// is not alphanumeric (`@NP[DT|JJ]` and `NP-SBJ` both become `NP`). Labels
/// that would become empty, such as punctuation tags, map to themselves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoarseMap {
    explicit: BTreeMap<String, String>,
}

impl CoarseMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, fine: impl Into<String>, coarse: impl Into<String>) {
        self.explicit.insert(fine.into(), coarse.into());
    }

    pub fn map<'a>(&'a self, label: &'a str) -> &'a str {
        if let Some(c) = self.explicit.get(label) {
            return c;
        }
        let stripped = label.strip_prefix(NEW_PREFIX).unwrap_or(label);
        let cut = stripped
            .find(|c: char| !c.is_alphanumeric())
            .unwrap_or(stripped.len());
        if cut == 0 {
            label
        } else {
            &stripped[..cut]
        }
    }

    /// Read `fine<TAB>coarse` lines.
    pub fn from_text(text: &str) -> Result<CoarseMap, GrammarError> {
        let mut m = CoarseMap::new();
        for (idx, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let (fine, coarse) = raw.split_once('\t').ok_or_else(|| GrammarError::Format {
                line: idx + 1,
                msg: "expected 'fine<TAB>coarse'".into(),
            })?;
            if fine.trim().is_empty() || coarse.trim().is_empty() {
                return Err(GrammarError::Format {
                    line: idx + 1,
                    msg: "empty symbol".into(),
                });
            }
            m.insert(fine.trim(), coarse.trim());
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        self.explicit
            .iter()
            .map(|(f, c)| format!("{f}\t{c}\n"))
            .collect()
    }
}

/// Map every rule symbol-wise, sum the probabilities of rules that collide
/// and renormalize per left-hand side.
pub fn project(g: &Pcfg, m: &CoarseMap) -> Pcfg {
    #[derive(PartialEq, Eq, Hash)]
    enum Key {
        T(String, String),
        U(String, String),
        B(String, String, String),
    }
    let name = |a: NtId| m.map(g.nonterminal(a)).to_string();
    let mut mass: IndexMap<Key, f64> = IndexMap::new();
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for r in g.rules() {
        let lhs = name(r.lhs);
        let key = match r.rhs {
            Rhs::Terminal(t) => Key::T(lhs.clone(), g.terminal(t).to_string()),
            Rhs::Unary(b) => Key::U(lhs.clone(), name(b)),
            Rhs::Binary(b, c) => Key::B(lhs.clone(), name(b), name(c)),
        };
        let p = r.logprob.exp();
        *mass.entry(key).or_insert(0.0) += p;
        *totals.entry(lhs).or_insert(0.0) += p;
    }
    let mut b = Pcfg::builder();
    let start = name(g.start());
    b.nt(&start);
    for (key, p) in mass {
        match key {
            Key::T(lhs, w) => {
                let lp = (p / totals[&lhs]).ln();
                b.add_terminal_rule(&lhs, &w, lp)
            }
            Key::U(lhs, c) => {
                let lp = (p / totals[&lhs]).ln();
                b.add_unary_rule(&lhs, &c, lp)
            }
            Key::B(lhs, l, r) => {
                let lp = (p / totals[&lhs]).ln();
                b.add_binary_rule(&lhs, &l, &r, lp)
            }
        }
    }
    b.build(&start)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Inside and outside log scores of every item of a coarse chart.
///
/// `inside` is taken above the unary chains of a cell and `outside` below
/// them, so `inside + outside` is the log expected count of the label at
/// that span.
#[derive(Debug, Clone)]
pub struct InsideOutsideTable {
    n: usize,
    labels: usize,
    inside: Vec<f64>,
    outside_pre: Vec<f64>,
    outside_post: Vec<f64>,
    log_z: f64,
}

impl InsideOutsideTable {
    fn slot(&self, i: usize, k: usize, a: NtId) -> usize {
        (i * (self.n + 1) + k) * self.labels + a
    }

    pub fn inside(&self, i: usize, k: usize, a: NtId) -> f64 {
        self.inside[self.slot(i, k, a)]
    }

    pub fn outside(&self, i: usize, k: usize, a: NtId) -> f64 {
        self.outside_pre[self.slot(i, k, a)]
    }

    /// Outside score above the cell's unary chains; zero for the goal item.
    pub fn outside_above_unaries(&self, i: usize, k: usize, a: NtId) -> f64 {
        self.outside_post[self.slot(i, k, a)]
    }

    /// Sentence log probability; `-inf` if the sentence has no parse.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// `inside + outside - log_z`.
    pub fn log_posterior(&self, i: usize, k: usize, a: NtId) -> f64 {
        self.inside(i, k, a) + self.outside(i, k, a) - self.log_z
    }
}

/// `Σ_{r=0}^{|N|} U^r` where `U[a][b]` is the probability of `a -> b`.
fn unary_closure(g: &Pcfg) -> Vec<Vec<(NtId, f64)>> {
    let nl = g.num_nonterminals();
    let mut u = vec![0.0; nl * nl];
    for r in g.rules() {
        if let Rhs::Unary(b) = r.rhs {
            u[r.lhs * nl + b] += r.logprob.exp();
        }
    }
    let mut closure = vec![0.0; nl * nl];
    let mut power = vec![0.0; nl * nl];
    for a in 0..nl {
        closure[a * nl + a] = 1.0;
        power[a * nl + a] = 1.0;
    }
    if u.iter().any(|&p| p > 0.0) {
        for _ in 0..nl {
            let mut next = vec![0.0; nl * nl];
            for a in 0..nl {
                for m in 0..nl {
                    let p = power[a * nl + m];
                    if p == 0.0 {
                        continue;
                    }
                    for b in 0..nl {
                        next[a * nl + b] += p * u[m * nl + b];
                    }
                }
            }
            if next.iter().all(|&p| p == 0.0) {
                break;
            }
            for (c, p) in closure.iter_mut().zip(&next) {
                *c += p;
            }
            power = next;
        }
    }
    (0..nl)
        .map(|a| {
            (0..nl)
                .filter(|&b| closure[a * nl + b] > 0.0)
                .map(|b| (b, closure[a * nl + b].ln()))
                .collect()
        })
        .collect()
}

/// Run inside-outside for `tokens` under `g`.
pub fn inside_outside<S: AsRef<str>>(g: &Pcfg, tokens: &[S]) -> InsideOutsideTable {
    let n = tokens.len();
    let nl = g.num_nonterminals();
    let size = (n + 1) * (n + 1) * nl;
    let mut t = InsideOutsideTable {
        n,
        labels: nl,
        inside: vec![f64::NEG_INFINITY; size],
        outside_pre: vec![f64::NEG_INFINITY; size],
        outside_post: vec![f64::NEG_INFINITY; size],
        log_z: f64::NEG_INFINITY,
    };
    if n == 0 {
        return t;
    }
    let closure = unary_closure(g);
    let mut transposed: Vec<Vec<(NtId, f64)>> = vec![Vec::new(); nl];
    for (a, row) in closure.iter().enumerate() {
        for &(b, lc) in row {
            transposed[b].push((a, lc));
        }
    }
    let binaries: Vec<(NtId, NtId, NtId, f64)> = g
        .rules()
        .iter()
        .filter_map(|r| match r.rhs {
            Rhs::Binary(b, c) => Some((r.lhs, b, c, r.logprob)),
            _ => None,
        })
        .collect();

    let mut inside_pre = vec![f64::NEG_INFINITY; size];
    let slot = |i: usize, k: usize, a: usize| (i * (n + 1) + k) * nl + a;
    for (i, tok) in tokens.iter().enumerate() {
        if let Some(w) = g.terminal_id(tok.as_ref()) {
            for r in g.rules() {
                if r.rhs == Rhs::Terminal(w) {
                    let s = slot(i, i + 1, r.lhs);
                    inside_pre[s] = log_add(inside_pre[s], r.logprob);
                }
            }
        }
    }
    for width in 1..=n {
        for i in 0..=n - width {
            let k = i + width;
            if width >= 2 {
                for &(a, b, c, lp) in &binaries {
                    let mut acc = f64::NEG_INFINITY;
                    for j in i + 1..k {
                        let l = t.inside[slot(i, j, b)];
                        let r = t.inside[slot(j, k, c)];
                        if l > f64::NEG_INFINITY && r > f64::NEG_INFINITY {
                            acc = log_add(acc, l + r);
                        }
                    }
                    if acc > f64::NEG_INFINITY {
                        let s = slot(i, k, a);
                        inside_pre[s] = log_add(inside_pre[s], acc + lp);
                    }
                }
            }
            for (a, row) in closure.iter().enumerate() {
                let mut acc = f64::NEG_INFINITY;
                for &(b, lc) in row {
                    let v = inside_pre[slot(i, k, b)];
                    if v > f64::NEG_INFINITY {
                        acc = log_add(acc, lc + v);
                    }
                }
                t.inside[slot(i, k, a)] = acc;
            }
        }
    }
    t.log_z = t.inside[slot(0, n, g.start())];
    if t.log_z == f64::NEG_INFINITY {
        return t;
    }

    t.outside_post[slot(0, n, g.start())] = 0.0;
    for width in (1..=n).rev() {
        for i in 0..=n - width {
            let k = i + width;
            // outside_post of this cell is complete once all wider cells
            // have pushed into it.
            for (b, col) in transposed.iter().enumerate() {
                let mut acc = f64::NEG_INFINITY;
                for &(a, lc) in col {
                    let v = t.outside_post[slot(i, k, a)];
                    if v > f64::NEG_INFINITY {
                        acc = log_add(acc, lc + v);
                    }
                }
                t.outside_pre[slot(i, k, b)] = acc;
            }
            if width < 2 {
                continue;
            }
            for &(a, b, c, lp) in &binaries {
                let out = t.outside_pre[slot(i, k, a)];
                if out == f64::NEG_INFINITY || inside_pre[slot(i, k, a)] == f64::NEG_INFINITY {
                    continue;
                }
                for j in i + 1..k {
                    let l = t.inside[slot(i, j, b)];
                    let r = t.inside[slot(j, k, c)];
                    if l == f64::NEG_INFINITY || r == f64::NEG_INFINITY {
                        continue;
                    }
                    let sl = slot(i, j, b);
                    t.outside_post[sl] = log_add(t.outside_post[sl], out + lp + r);
                    let sr = slot(j, k, c);
                    t.outside_post[sr] = log_add(t.outside_post[sr], out + lp + l);
                }
            }
        }
    }
    t
}

/// Allowability predicate from a coarse chart.
#[derive(Debug, Clone)]
pub struct CtfFilter {
    n: usize,
    labels: usize,
    /// Fine nonterminal id to coarse nonterminal id.
    fine_to_coarse: Vec<Option<NtId>>,
    allowed: Vec<bool>,
    fail_open: bool,
}

impl CtfFilter {
    /// The coarse sentence had no parse and every item is allowed.
    pub fn is_fail_open(&self) -> bool {
        self.fail_open
    }
}

impl Allowable<PcfgItem> for CtfFilter {
    fn allows(&self, item: &PcfgItem) -> bool {
        if self.fail_open {
            return true;
        }
        match self.fine_to_coarse[item.label] {
            Some(c) => self.allowed[(item.i * (self.n + 1) + item.k) * self.labels + c],
            None => false,
        }
    }

    fn span_verdict(&self, i: usize, k: usize, _: bool) -> Option<bool> {
        if self.fail_open {
            return Some(true);
        }
        let base = (i * (self.n + 1) + k) * self.labels;
        if self.allowed[base..base + self.labels].iter().any(|&a| a) {
            None
        } else {
            Some(false)
        }
    }
}

/// Build the pruning predicate for one sentence.
///
/// A fine item is allowed iff its coarse image was derived and its coarse
/// posterior is at least `tau`. If the coarse grammar cannot parse the
/// sentence, everything is allowed.
pub fn ctf_predicate<S: AsRef<str>>(
    coarse: &Pcfg,
    fine: &Pcfg,
    m: &CoarseMap,
    tokens: &[S],
    tau: f64,
) -> CtfFilter {
    let n = tokens.len();
    let nl = coarse.num_nonterminals();
    let fine_to_coarse = (0..fine.num_nonterminals())
        .map(|a| coarse.nonterminal_id(m.map(fine.nonterminal(a))))
        .collect();
    let table = inside_outside(coarse, tokens);
    if table.log_z == f64::NEG_INFINITY {
        return CtfFilter {
            n,
            labels: nl,
            fine_to_coarse,
            allowed: Vec::new(),
            fail_open: true,
        };
    }
    let log_tau = tau.ln();
    let mut allowed = vec![false; (n + 1) * (n + 1) * nl];
    for i in 0..n {
        for k in i + 1..=n {
            for a in 0..nl {
                if table.inside(i, k, a) > f64::NEG_INFINITY {
                    allowed[(i * (n + 1) + k) * nl + a] = table.log_posterior(i, k, a) >= log_tau;
                }
            }
        }
    }
    CtfFilter {
        n,
        labels: nl,
        fine_to_coarse,
        allowed,
        fail_open: false,
    }
}
