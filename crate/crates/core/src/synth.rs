//! A seeded generator of English-like constituent trees.
//!
//! Trees are sampled top-down from a fixed n-ary PCFG with recursive
//! NP/VP attachment, coordination, unary projections, clausal complements,
//! parentheticals and numerals. Samples whose yield falls outside the
//! requested length window are rejected.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tree::Tree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 2000,
            min_len: 2,
            max_len: 40,
            seed: 1,
        }
    }
}

/// One position of a phrase template. Each choice is a weighted sequence
/// of child labels.
#[derive(Debug, Clone, Copy)]
enum Slot {
    One(&'static [(f64, &'static [&'static str])]),
    /// Present with the given probability.
    Opt(f64, &'static [(f64, &'static [&'static str])]),
    /// Zero or more copies; each further copy with the given probability.
    Many(f64, &'static [(f64, &'static [&'static str])]),
}

use Slot::{Many, One, Opt};

type Template = &'static [Slot];

const PHRASES: &[(&str, &[(f64, Template)])] = &[
    (
        "S",
        &[
            (
                0.70,
                &[
                    Opt(
                        0.45,
                        &[
                            (0.4, &["ADVP", ","]),
                            (0.3, &["PP", ","]),
                            (0.3, &["SBAR", ","]),
                        ],
                    ),
                    Opt(0.05, &[(1.0, &["CC"])]),
                    One(&[(1.0, &["NP"])]),
                    Opt(0.10, &[(1.0, &["ADVP"])]),
                    One(&[(1.0, &["VP"])]),
                    Opt(0.06, &[(1.0, &["ADVP"])]),
                    Opt(0.85, &[(1.0, &["."])]),
                ],
            ),
            (0.10, &[One(&[(1.0, &["NP"])]), One(&[(1.0, &["VP"])])]),
            (
                0.12,
                &[
                    One(&[(1.0, &["S"])]),
                    Opt(0.5, &[(1.0, &[","])]),
                    One(&[(1.0, &["CC"])]),
                    One(&[(1.0, &["S"])]),
                ],
            ),
            (0.05, &[One(&[(1.0, &["VP"])])]),
            (0.03, &[One(&[(1.0, &["NP"])]), Opt(0.6, &[(1.0, &["."])])]),
            (
                0.03,
                &[
                    One(&[(1.0, &["PP"])]),
                    One(&[(1.0, &["NP"])]),
                    One(&[(1.0, &["VP"])]),
                ],
            ),
            (
                0.03,
                &[
                    One(&[(1.0, &["NP"])]),
                    One(&[(1.0, &["PRN"])]),
                    One(&[(1.0, &["VP"])]),
                ],
            ),
        ],
    ),
    (
        "NP",
        &[
            (
                0.56,
                &[
                    Opt(0.55, &[(0.9, &["DT"]), (0.1, &["CD"])]),
                    Many(
                        0.35,
                        &[
                            (0.45, &["JJ"]),
                            (0.15, &["ADJP"]),
                            (0.25, &["NN"]),
                            (0.1, &["NNP"]),
                            (0.05, &["QP"]),
                        ],
                    ),
                    One(&[(0.45, &["NN"]), (0.3, &["NNS"]), (0.25, &["NNP"])]),
                    Opt(0.08, &[(1.0, &["NNS"])]),
                ],
            ),
            (0.08, &[One(&[(1.0, &["PRP"])])]),
            (0.20, &[One(&[(1.0, &["NP"])]), One(&[(1.0, &["PP"])])]),
            (0.04, &[One(&[(1.0, &["NP"])]), One(&[(1.0, &["SBAR"])])]),
            (
                0.04,
                &[
                    One(&[(1.0, &["NP"])]),
                    One(&[(1.0, &["CC"])]),
                    One(&[(1.0, &["NP"])]),
                ],
            ),
            (
                0.03,
                &[
                    One(&[(1.0, &["NP"])]),
                    One(&[(1.0, &[","])]),
                    One(&[(1.0, &["NP"])]),
                    Opt(0.7, &[(1.0, &[","])]),
                ],
            ),
            (
                0.07,
                &[
                    One(&[(0.7, &["CD"]), (0.3, &["QP"])]),
                    One(&[(1.0, &["NNS"])]),
                ],
            ),
            (
                0.05,
                &[
                    One(&[(1.0, &["DT"])]),
                    One(&[(0.6, &["NN"]), (0.4, &["NNS"])]),
                    One(&[(1.0, &["PP"])]),
                ],
            ),
            (0.04, &[One(&[(1.0, &["NP"])]), One(&[(1.0, &["NP"])])]),
            (0.02, &[One(&[(0.5, &["ADJP"]), (0.5, &["QP"])])]),
            (0.02, &[One(&[(1.0, &["NP"])]), One(&[(1.0, &["PRN"])])]),
            (0.02, &[One(&[(1.0, &["NP"])]), One(&[(1.0, &["ADVP"])])]),
            (0.02, &[One(&[(1.0, &["UCP"])])]),
        ],
    ),
    (
        "VP",
        &[
            (
                0.70,
                &[
                    One(&[(0.45, &["VBD"]), (0.25, &["VBZ"]), (0.30, &["VB"])]),
                    Opt(
                        0.75,
                        &[
                            (0.45, &["NP"]),
                            (0.05, &["NP", "NP"]),
                            (0.12, &["NP", "PP"]),
                            (0.10, &["PP"]),
                            (0.08, &["SBAR"]),
                            (0.07, &["S"]),
                            (0.06, &["ADJP"]),
                            (0.04, &["NP", "SBAR"]),
                            (0.03, &["NP", "ADVP"]),
                        ],
                    ),
                    Many(0.35, &[(0.7, &["PP"]), (0.3, &["ADVP"])]),
                ],
            ),
            (
                0.08,
                &[
                    One(&[(1.0, &["MD"])]),
                    Opt(0.15, &[(1.0, &["RB"])]),
                    One(&[(1.0, &["VP"])]),
                ],
            ),
            (0.04, &[One(&[(1.0, &["TO"])]), One(&[(1.0, &["VP"])])]),
            (0.08, &[One(&[(1.0, &["VP"])]), One(&[(1.0, &["PP"])])]),
            (0.04, &[One(&[(1.0, &["VP"])]), One(&[(1.0, &["ADVP"])])]),
            (0.02, &[One(&[(1.0, &["VP"])]), One(&[(1.0, &["PRN"])])]),
            (0.02, &[One(&[(1.0, &["VP"])]), One(&[(1.0, &["NP"])])]),
            (
                0.03,
                &[
                    One(&[(1.0, &["VP"])]),
                    One(&[(1.0, &["CC"])]),
                    One(&[(1.0, &["VP"])]),
                ],
            ),
            (
                0.03,
                &[
                    One(&[(0.6, &["VBZ"]), (0.4, &["VBD"])]),
                    One(&[(1.0, &["VP"])]),
                ],
            ),
        ],
    ),
    (
        "PP",
        &[
            (
                0.86,
                &[
                    Opt(0.05, &[(1.0, &["RB"])]),
                    One(&[(0.9, &["IN"]), (0.1, &["TO"])]),
                    One(&[(1.0, &["NP"])]),
                ],
            ),
            (
                0.05,
                &[
                    One(&[(1.0, &["IN"])]),
                    One(&[(0.5, &["S"]), (0.5, &["PP"])]),
                ],
            ),
            (
                0.04,
                &[
                    One(&[(1.0, &["PP"])]),
                    One(&[(1.0, &["CC"])]),
                    One(&[(1.0, &["PP"])]),
                ],
            ),
            (
                0.05,
                &[
                    One(&[(1.0, &["ADVP"])]),
                    One(&[(1.0, &["IN"])]),
                    One(&[(1.0, &["NP"])]),
                ],
            ),
        ],
    ),
    (
        "PRN",
        &[(
            1.0,
            &[
                One(&[(1.0, &[","])]),
                One(&[(0.5, &["S"]), (0.3, &["NP"]), (0.2, &["PP"])]),
                One(&[(1.0, &[","])]),
            ],
        )],
    ),
    (
        "UCP",
        &[(
            1.0,
            &[
                One(&[(0.5, &["ADJP"]), (0.5, &["NP"])]),
                One(&[(1.0, &["CC"])]),
                One(&[(0.5, &["NP"]), (0.5, &["ADJP"])]),
            ],
        )],
    ),
    (
        "SBAR",
        &[
            (0.70, &[One(&[(1.0, &["C"])]), One(&[(1.0, &["S"])])]),
            (0.25, &[One(&[(1.0, &["S"])])]),
            (0.05, &[One(&[(1.0, &["IN"])]), One(&[(1.0, &["S"])])]),
        ],
    ),
    (
        "ADVP",
        &[
            (0.85, &[Opt(0.2, &[(1.0, &["RB"])]), One(&[(1.0, &["RB"])])]),
            (0.08, &[One(&[(1.0, &["NP"])]), One(&[(1.0, &["RB"])])]),
            (0.07, &[One(&[(1.0, &["RB"])]), One(&[(1.0, &["PP"])])]),
        ],
    ),
    (
        "ADJP",
        &[
            (
                0.82,
                &[
                    Opt(0.3, &[(1.0, &["RB"])]),
                    One(&[(1.0, &["JJ"])]),
                    Opt(0.15, &[(1.0, &["PP"])]),
                ],
            ),
            (0.08, &[One(&[(1.0, &["NP"])]), One(&[(1.0, &["JJ"])])]),
            (
                0.05,
                &[
                    One(&[(1.0, &["ADJP"])]),
                    One(&[(1.0, &["CC"])]),
                    One(&[(1.0, &["ADJP"])]),
                ],
            ),
            (0.05, &[One(&[(1.0, &["QP"])]), One(&[(1.0, &["NN"])])]),
        ],
    ),
    (
        "QP",
        &[(
            1.0,
            &[
                Opt(0.4, &[(1.0, &["RB"])]),
                One(&[(1.0, &["CD"])]),
                Opt(0.5, &[(1.0, &["CD"])]),
            ],
        )],
    ),
];

const LEXICON: &[(&str, &[&str])] = &[
    ("DT", &["the", "a", "this", "that", "every", "some"]),
    (
        "NN",
        &[
            "company", "market", "year", "price", "share", "bank", "report", "deal", "plan",
            "group", "stock", "rate", "board", "week", "month", "analyst", "trader", "fund",
            "firm", "sale", "unit", "loss", "bond", "index", "issue", "investor", "profit",
            "offer", "order", "policy", "chairman", "office", "industry", "product", "quarter",
            "yield", "debt", "contract", "court", "agency",
        ],
    ),
    (
        "NNS",
        &[
            "shares",
            "prices",
            "companies",
            "years",
            "investors",
            "analysts",
            "banks",
            "sales",
            "stocks",
            "rates",
            "funds",
            "bonds",
            "traders",
            "profits",
            "loans",
            "workers",
            "orders",
            "markets",
            "units",
            "points",
            "months",
            "weeks",
            "dollars",
            "products",
            "officials",
        ],
    ),
    (
        "JJ",
        &[
            "new",
            "big",
            "small",
            "major",
            "strong",
            "weak",
            "federal",
            "foreign",
            "high",
            "low",
            "recent",
            "early",
            "financial",
            "other",
            "last",
            "first",
            "large",
            "public",
            "economic",
            "net",
            "late",
            "key",
            "private",
            "long",
            "local",
        ],
    ),
    (
        "NNP",
        &[
            "Ford", "Mercer", "Boston", "Texas", "Reuters", "Nomura", "Sony", "Smith", "Jones",
            "Chicago", "Japan", "Brown", "Dow", "Exxon", "Tokyo", "London", "Fed", "Congress",
            "IBM", "Kent",
        ],
    ),
    ("PRP", &["it", "he", "she", "they", "we", "you"]),
    (
        "CD",
        &[
            "3,000", "12", "1.5", "two", "three", "100", "25", "1989", "four", "0.5", "40,000",
            "-2", "7", "ten", "1,200",
        ],
    ),
    (
        "VBD",
        &[
            "said", "rose", "fell", "bought", "sold", "reported", "made", "took", "got", "saw",
            "had", "paid", "raised", "cut", "held", "gave", "lost", "expected", "named", "agreed",
            "closed", "opened", "signed", "moved", "won",
        ],
    ),
    (
        "VBZ",
        &[
            "says", "expects", "believes", "owns", "has", "makes", "wants", "sees", "needs",
            "thinks", "holds", "plans", "argues", "knows", "faces",
        ],
    ),
    (
        "VB",
        &[
            "buy", "sell", "raise", "cut", "pay", "make", "take", "get", "see", "hold", "lose",
            "win", "close", "open", "sign",
        ],
    ),
    ("MD", &["will", "would", "could", "may"]),
    ("IN", &["of", "in", "on", "with", "for", "at", "from", "by"]),
    ("C", &["that", "because", "while", "if"]),
    (
        "RB",
        &[
            "also", "still", "now", "recently", "already", "often", "quickly", "probably", "just",
            "again", "later", "soon",
        ],
    ),
    ("CC", &["and", "or", "but"]),
    ("TO", &["to"]),
    (".", &["."]),
    (",", &[","]),
];

/// Head-rule table for the generated treebank, in the format read by
/// [`crate::tag::HeadRules`], with argument labels in the last column.
pub const HEAD_RULES: &str = "S\tleft\tVP S\tNP\n\
NP\tright\tNN NNS NNP PRP NP CD QP\t-\n\
VP\tleft\tVBD VBZ VB MD TO VP\tNP S SBAR ADJP VP\n\
PP\tleft\tIN TO\tNP S PP\n\
SBAR\tleft\tC S\tS\n\
ADVP\tright\tRB\t-\n\
ADJP\tright\tJJ\t-\n\
QP\tright\tCD\t-\n\
PRN\tleft\tS NP PP\t-\n\
UCP\tleft\tNP ADJP\t-\n";

fn pick(
    choices: &'static [(f64, &'static [&'static str])],
    rng: &mut ChaCha8Rng,
) -> &'static [&'static str] {
    let total: f64 = choices.iter().map(|(w, _)| w).sum();
    let mut x = rng.random::<f64>() * total;
    for (w, c) in choices {
        if x < *w {
            return c;
        }
        x -= w;
    }
    choices[choices.len() - 1].1
}

/// The generating grammar as a sampler.
#[derive(Debug, Clone)]
pub struct Generator {
    phrases: Vec<(&'static str, Vec<Template>, WeightedIndex<f64>)>,
    words: Vec<(&'static str, &'static [&'static str], WeightedIndex<f64>)>,
}

impl Default for Generator {
    fn default() -> Self {
        Self::new()
    }
}

impl Generator {
    pub fn new() -> Self {
        let phrases = PHRASES
            .iter()
            .map(|(lhs, rhss)| {
                let dist = WeightedIndex::new(rhss.iter().map(|(p, _)| *p)).unwrap();
                (*lhs, rhss.iter().map(|(_, r)| *r).collect(), dist)
            })
            .collect();
        // Zipfian word choice within each part of speech.
        let words = LEXICON
            .iter()
            .map(|(pos, ws)| {
                let dist = WeightedIndex::new((1..=ws.len()).map(|r| 1.0 / r as f64)).unwrap();
                (*pos, *ws, dist)
            })
            .collect();
        Generator { phrases, words }
    }

    fn sample(
        &self,
        label: &str,
        rng: &mut ChaCha8Rng,
        depth: usize,
        budget: &mut usize,
    ) -> Option<Tree> {
        if let Some((_, ws, dist)) = self.words.iter().find(|(p, _, _)| *p == label) {
            *budget = budget.checked_sub(1)?;
            let w = ws[dist.sample(rng)];
            return Some(Tree::node(label, vec![Tree::leaf(w)]));
        }
        if depth > 30 {
            return None;
        }
        let (_, templates, dist) = self
            .phrases
            .iter()
            .find(|(l, _, _)| *l == label)
            .expect("unknown label");
        let mut rhs = Vec::new();
        for slot in templates[dist.sample(rng)].iter() {
            match *slot {
                One(choices) => rhs.extend_from_slice(pick(choices, rng)),
                Opt(p, choices) => {
                    if rng.random::<f64>() < p {
                        rhs.extend_from_slice(pick(choices, rng));
                    }
                }
                Many(p, choices) => {
                    while rng.random::<f64>() < p {
                        rhs.extend_from_slice(pick(choices, rng));
                    }
                }
            }
        }
        let mut children = Vec::with_capacity(rhs.len());
        for c in rhs {
            children.push(self.sample(c, rng, depth + 1, budget)?);
        }
        Some(Tree::node(label, children))
    }

    /// Draw one tree with `min_len..=max_len` tokens.
    pub fn tree(&self, rng: &mut ChaCha8Rng, min_len: usize, max_len: usize) -> Tree {
        loop {
            let mut budget = max_len;
            if let Some(t) = self.sample("S", rng, 0, &mut budget) {
                if t.num_leaves() >= min_len {
                    return t;
                }
            }
        }
    }
}

/// Generate a treebank.
pub fn generate(cfg: &SynthConfig) -> Vec<Tree> {
    assert!(
        cfg.min_len <= cfg.max_len && cfg.max_len >= 2,
        "empty length window"
    );
    let gen = Generator::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.sentences)
        .map(|_| gen.tree(&mut rng, cfg.min_len, cfg.max_len))
        .collect()
}
