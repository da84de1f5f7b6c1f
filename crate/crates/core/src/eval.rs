//! Evaluation and benchmarking: labeled-bracket scoring, per-sentence
//! timing rows and corpus reports with speedups against a baseline run.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tag::TagChart;
use crate::tree::Tree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("yield mismatch: gold has {gold} tokens, prediction has {pred}")]
    YieldMismatch { gold: usize, pred: usize },
    #[error("unknown baseline run '{0}'")]
    MissingBaseline(String),
}

/// Matched, gold and predicted bracket counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BracketCounts {
    pub matched: usize,
    pub gold: usize,
    pub pred: usize,
}

impl std::ops::AddAssign for BracketCounts {
    fn add_assign(&mut self, o: Self) {
        self.matched += o.matched;
        self.gold += o.gold;
        self.pred += o.pred;
    }
}

/// Labeled precision, recall and f-score in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl BracketCounts {
    pub fn score(&self) -> Score {
        let pct = |a: usize, b: usize| {
            if b == 0 {
                0.0
            } else {
                100.0 * a as f64 / b as f64
            }
        };
        let precision = pct(self.matched, self.pred);
        let recall = pct(self.matched, self.gold);
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Score {
            precision,
            recall,
            f,
        }
    }
}

/// Scoring conventions, printed at the top of every report.
pub const PARSEVAL_CONVENTIONS: &str = "labeled brackets (label, start, end) compared as multisets; \
root bracket included; preterminal brackets excluded when both trees have a POS layer over every token; \
labels compared verbatim";

fn has_pos_layer(t: &Tree) -> bool {
    fn go(t: &Tree) -> bool {
        t.is_preterminal() || (!t.is_leaf() && t.children.iter().all(|c| !c.is_leaf() && go(c)))
    }
    !t.is_leaf() && go(t)
}

fn brackets(t: &Tree, skip_pos: bool) -> BTreeMap<(String, usize, usize), usize> {
    fn go(
        t: &Tree,
        start: usize,
        skip_pos: bool,
        out: &mut BTreeMap<(String, usize, usize), usize>,
    ) -> usize {
        if t.is_leaf() {
            return start + 1;
        }
        let mut end = start;
        for c in &t.children {
            end = go(c, end, skip_pos, out);
        }
        if !(skip_pos && t.is_preterminal()) {
            *out.entry((t.label.clone(), start, end)).or_default() += 1;
        }
        end
    }
    let mut out = BTreeMap::new();
    go(t, 0, skip_pos, &mut out);
    out
}

/// Count labeled brackets of two debinarized trees over the same yield.
pub fn parseval(gold: &Tree, pred: &Tree) -> Result<BracketCounts, EvalError> {
    let (g, p) = (gold.num_leaves(), pred.num_leaves());
    if g != p {
        return Err(EvalError::YieldMismatch { gold: g, pred: p });
    }
    let skip_pos = has_pos_layer(gold) && has_pos_layer(pred);
    let gb = brackets(gold, skip_pos);
    let pb = brackets(pred, skip_pos);
    let matched = gb
        .iter()
        .map(|(b, &c)| c.min(pb.get(b).copied().unwrap_or(0)))
        .sum();
    Ok(BracketCounts {
        matched,
        gold: gb.values().sum(),
        pred: pb.values().sum(),
    })
}

/// Brackets a failed parse is penalized with.
pub fn gold_bracket_count(gold: &Tree) -> usize {
    brackets(gold, has_pos_layer(gold)).values().sum()
}

/// Fraction of TAG items whose outer span, and gap if any, are spans of
/// nodes of the gold tree.
pub fn tag_gold_fraction(chart: &TagChart, gold: &Tree) -> f64 {
    let spans: HashSet<(usize, usize)> = gold
        .spans()
        .into_iter()
        .map(|(_, i, k, _)| (i, k))
        .collect();
    let total = chart.item_count();
    if total == 0 {
        return 0.0;
    }
    let hits = chart
        .items()
        .filter(|it| spans.contains(&(it.i, it.l)) && it.gap.is_none_or(|g| spans.contains(&g)))
        .count();
    hits as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Parsed,
    Failed,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Parsed => "parsed",
            Status::Failed => "failed",
        })
    }
}

/// One benchmark row.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceResult {
    pub sent_id: usize,
    pub n: usize,
    pub items: usize,
    /// Chart construction time, including building the pruning predicate.
    pub chart_ms: f64,
    /// Chart construction plus best-parse extraction.
    pub total_ms: f64,
    pub gold_fraction: f64,
    pub status: Status,
    pub brackets: BracketCounts,
    pub tree: Option<Tree>,
}

/// Run `chart`, then `extract` on its result, timing both.
pub fn measure<C, T>(chart: impl FnOnce() -> C, extract: impl FnOnce(&C) -> T) -> (C, T, f64, f64) {
    let t0 = Instant::now();
    let c = chart();
    let chart_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t = extract(&c);
    let total_ms = t0.elapsed().as_secs_f64() * 1e3;
    (c, t, chart_ms, total_ms)
}

impl SentenceResult {
    /// Score `pred` (debinarized) against `gold`; a missing prediction
    /// matches nothing.
    pub fn new(
        sent_id: usize,
        gold: &Tree,
        pred: Option<Tree>,
        items: usize,
        gold_fraction: f64,
        chart_ms: f64,
        total_ms: f64,
    ) -> Result<SentenceResult, EvalError> {
        let brackets = match &pred {
            Some(p) => parseval(gold, p)?,
            None => BracketCounts {
                matched: 0,
                gold: gold_bracket_count(gold),
                pred: 0,
            },
        };
        Ok(SentenceResult {
            sent_id,
            n: gold.num_leaves(),
            items,
            chart_ms,
            total_ms,
            gold_fraction,
            status: if pred.is_some() {
                Status::Parsed
            } else {
                Status::Failed
            },
            brackets,
            tree: pred,
        })
    }
}

/// Per-sentence TSV, sorted stably by `sent_id`.
pub fn to_tsv(rows: &[SentenceResult]) -> String {
    let mut sorted: Vec<&SentenceResult> = rows.iter().collect();
    sorted.sort_by_key(|r| r.sent_id);
    let mut out =
        String::from("# chartcons-bench v1\nsent_id\tn\titems\ttime_ms\tgold_fraction\tstatus\n");
    for r in sorted {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{:.6}\t{}",
            r.sent_id, r.n, r.items, r.chart_ms, r.gold_fraction, r.status
        )
        .unwrap();
    }
    out
}

/// Parse every sentence with `f`, after running it once on the first
/// `warmup` sentences and discarding those results. Results come back in
/// input order regardless of `jobs`.
pub fn run_corpus<F>(count: usize, jobs: usize, warmup: usize, f: F) -> Vec<SentenceResult>
where
    F: Fn(usize) -> SentenceResult + Sync,
{
    for i in 0..warmup.min(count) {
        f(i);
    }
    if jobs <= 1 {
        return (0..count).map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| (0..count).into_par_iter().map(&f).collect())
}

/// Corpus summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run: String,
    pub sentences: usize,
    pub parsed: usize,
    /// Parsed fraction in percent.
    pub coverage: f64,
    /// Unparsed sentences count with their gold brackets.
    pub score: Score,
    /// Over parsed sentences only.
    pub parsed_score: Score,
    pub mean_chart_ms: f64,
    pub mean_total_ms: f64,
    pub mean_items: f64,
    pub mean_gold_fraction: f64,
    pub baseline: String,
    /// Baseline mean chart time over this run's mean chart time, both over
    /// the sentences parsed by both runs.
    pub speedup: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Summarize `rows`. Without a baseline the run is its own baseline.
pub fn summarize(
    run: &str,
    rows: &[SentenceResult],
    baseline: Option<(&str, &[SentenceResult])>,
) -> EvalReport {
    let parsed: Vec<&SentenceResult> = rows.iter().filter(|r| r.status == Status::Parsed).collect();
    let mut all = BracketCounts::default();
    let mut only = BracketCounts::default();
    for r in rows {
        all += r.brackets;
        if r.status == Status::Parsed {
            only += r.brackets;
        }
    }
    let (base_name, base_rows) = baseline.unwrap_or((run, rows));
    let base: HashMap<usize, &SentenceResult> = base_rows
        .iter()
        .filter(|r| r.status == Status::Parsed)
        .map(|r| (r.sent_id, r))
        .collect();
    let both: Vec<(&SentenceResult, &SentenceResult)> = parsed
        .iter()
        .filter_map(|r| base.get(&r.sent_id).map(|b| (*r, *b)))
        .collect();
    let ours = mean(both.iter().map(|(r, _)| r.chart_ms));
    let theirs = mean(both.iter().map(|(_, b)| b.chart_ms));
    EvalReport {
        run: run.to_string(),
        sentences: rows.len(),
        parsed: parsed.len(),
        coverage: if rows.is_empty() {
            0.0
        } else {
            100.0 * parsed.len() as f64 / rows.len() as f64
        },
        score: all.score(),
        parsed_score: only.score(),
        mean_chart_ms: mean(rows.iter().map(|r| r.chart_ms)),
        mean_total_ms: mean(rows.iter().map(|r| r.total_ms)),
        mean_items: mean(rows.iter().map(|r| r.items as f64)),
        mean_gold_fraction: mean(rows.iter().map(|r| r.gold_fraction)),
        baseline: base_name.to_string(),
        speedup: if ours > 0.0 { theirs / ours } else { 1.0 },
    }
}

/// Summaries of named runs, each compared with the run named `baseline`.
pub fn compare_runs(
    runs: &[(String, Vec<SentenceResult>)],
    baseline: &str,
) -> Result<Vec<EvalReport>, EvalError> {
    let (_, base) = runs
        .iter()
        .find(|(name, _)| name == baseline)
        .ok_or_else(|| EvalError::MissingBaseline(baseline.to_string()))?;
    Ok(runs
        .iter()
        .map(|(name, rows)| summarize(name, rows, Some((baseline, base))))
        .collect())
}

/// Tab-separated report table with the scoring conventions as a comment.
pub fn reports_to_tsv(reports: &[EvalReport]) -> String {
    let mut out = format!("# chartcons-report v1\n# parseval: {PARSEVAL_CONVENTIONS}\n");
    out.push_str(
        "# f: unparsed sentences contribute their gold brackets; f_parsed: parsed sentences only\n",
    );
    out.push_str("# speedup: baseline mean chart time / mean chart time, over sentences parsed by both runs\n");
    out.push_str("run\tsentences\tcoverage\tprecision\trecall\tf\tf_parsed\tchart_ms\ttotal_ms\titems\tgold_pct\tspeedup\tbaseline\n");
    for r in reports {
        writeln!(
            out,
            "{}\t{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.4}\t{:.4}\t{:.1}\t{:.2}\t{:.2}x\t{}",
            r.run,
            r.sentences,
            r.coverage,
            r.score.precision,
            r.score.recall,
            r.score.f,
            r.parsed_score.f,
            r.mean_chart_ms,
            r.mean_total_ms,
            r.mean_items,
            100.0 * r.mean_gold_fraction,
            r.speedup,
            r.baseline
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::read_ptb;

    fn one(s: &str) -> Tree {
        read_ptb(s).unwrap().remove(0)
    }

    #[test]
    fn hand_case() {
        let gold = one("(S (NP a b) (VP c))");
        let pred = one("(S (NP a) (VP b c))");
        let c = parseval(&gold, &pred).unwrap();
        assert_eq!(
            c,
            BracketCounts {
                matched: 1,
                gold: 3,
                pred: 3
            }
        );
        let s = c.score();
        assert!(
            (s.precision - 33.3).abs() < 0.05
                && (s.recall - 33.3).abs() < 0.05
                && (s.f - 33.3).abs() < 0.05
        );
    }

    #[test]
    fn identity_and_pos_layer() {
        let t = one("(S (NP (DT the) (NN cat)) (VP (VBD sat)))");
        let c = parseval(&t, &t).unwrap();
        assert_eq!(
            c,
            BracketCounts {
                matched: 3,
                gold: 3,
                pred: 3
            }
        );
        assert_eq!(
            c.score(),
            Score {
                precision: 100.0,
                recall: 100.0,
                f: 100.0
            }
        );
        let flat = one("(S (DT the) (NN cat) (VBD sat))");
        let c = parseval(&t, &flat).unwrap();
        assert_eq!(
            c,
            BracketCounts {
                matched: 1,
                gold: 3,
                pred: 1
            }
        );
        assert_eq!(c.score().precision, 100.0);
        assert!(matches!(
            parseval(&t, &one("(S (A a))")),
            Err(EvalError::YieldMismatch { .. })
        ));
    }

    fn row(id: usize, ms: f64, parsed: bool) -> SentenceResult {
        let gold = one("(S (A a) (B b))");
        let pred = parsed.then(|| gold.clone());
        SentenceResult::new(id, &gold, pred, 10, 0.5, ms, ms + 1.0).unwrap()
    }

    #[test]
    fn report_and_speedup() {
        let base = vec![row(0, 4.0, true), row(1, 8.0, true), row(2, 100.0, true)];
        let fast = vec![row(2, 1.0, false), row(0, 1.0, true), row(1, 2.0, true)];
        let r = summarize("fast", &fast, Some(("base", &base)));
        assert!((r.speedup - 4.0).abs() < 1e-12);
        assert!((r.coverage - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(r.parsed_score.f, 100.0);
        assert!(r.score.recall < 100.0);
        assert_eq!(summarize("base", &base, None).speedup, 1.0);
        let runs = vec![
            ("base".to_string(), base),
            ("fast".to_string(), fast.clone()),
        ];
        assert_eq!(compare_runs(&runs, "base").unwrap().len(), 2);
        assert_eq!(
            compare_runs(&runs, "nope"),
            Err(EvalError::MissingBaseline("nope".into()))
        );
        let tsv = to_tsv(&fast);
        let ids: Vec<&str> = tsv
            .lines()
            .skip(2)
            .map(|l| l.split('\t').next().unwrap())
            .collect();
        assert_eq!(ids, ["0", "1", "2"]);
        assert!(tsv.lines().nth(4).unwrap().ends_with("failed"));
    }

    #[test]
    fn parallel_runs_keep_order() {
        let rows = run_corpus(20, 4, 2, |i| row(i, 1.0, i % 2 == 0));
        assert!(rows.iter().enumerate().all(|(i, r)| r.sent_id == i));
    }
}
