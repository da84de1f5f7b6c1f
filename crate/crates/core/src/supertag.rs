//! Supertagging: an inventory of unlexicalized elementary trees, models
//! that score them per token, and the sentence-specific grammar built from
//! the top-k supertags of each token.
//!
//! The sentence grammar is anchored on the artificial string `1 2 ... n`
//! rather than on the words, so two occurrences of the same word never
//! share supertags. [`relabel`] maps a parse back onto the real tokens.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::item::{Allowable, TagItem};
use crate::tag::{
    best_derivation, read_tag_grammar, Derivation, ElementaryTree, TagChart, TagCorpus, TagError,
    TagGrammar, TagParser,
};
use crate::tagger::{
    is_number, load_model, preprocess, save_model, Adam, NetConfig, Network, TaggerError, Vocab,
};
use crate::tree::Tree;

#[derive(Debug, Error)]
pub enum SupertagError {
    #[error("inventory: {0}")]
    Inventory(String),
    #[error(transparent)]
    Grammar(#[from] TagError),
    #[error(transparent)]
    Model(#[from] TaggerError),
    #[error("leaf '{leaf}' is not a position in 1..={n}")]
    Relabel { leaf: String, n: usize },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("training sentence {0}: tokens, tags and supertags differ in length")]
    LengthMismatch(usize),
    #[error("empty training corpus")]
    EmptyCorpus,
}

/// Unlexicalized elementary trees with corpus frequencies. Tree weights are
/// relative frequencies `ln(count / total)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inventory {
    grammar: TagGrammar,
    counts: Vec<usize>,
}

/// Deduplicated tree shapes of an extracted corpus.
pub fn extract_inventory(corpus: &TagCorpus) -> Inventory {
    let total: usize = corpus.counts.iter().sum();
    let trees = corpus
        .grammar
        .trees()
        .iter()
        .zip(&corpus.counts)
        .map(|(t, &c)| ElementaryTree {
            logprob: (c as f64 / total as f64).ln(),
            ..t.lexicalize(None)
        })
        .collect();
    Inventory {
        grammar: TagGrammar::new(corpus.grammar.start(), trees)
            .expect("relative frequencies are at most 1"),
        counts: corpus.counts.clone(),
    }
}

impl Inventory {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn grammar(&self) -> &TagGrammar {
        &self.grammar
    }

    pub fn trees(&self) -> &[ElementaryTree] {
        self.grammar.trees()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.trees()[idx].name
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.grammar.tree_index(name)
    }

    /// Grammar file format preceded by a `# counts` comment line.
    pub fn to_text(&self) -> String {
        let counts: Vec<String> = self.counts.iter().map(usize::to_string).collect();
        format!("# counts {}\n{}", counts.join(" "), self.grammar.to_text())
    }

    pub fn from_text(text: &str) -> Result<Inventory, SupertagError> {
        let line = text
            .lines()
            .find_map(|l| l.strip_prefix("# counts"))
            .ok_or_else(|| SupertagError::Inventory("missing '# counts' line".into()))?;
        let counts = line
            .split_whitespace()
            .map(|c| {
                c.parse()
                    .map_err(|_| SupertagError::Inventory(format!("bad count '{c}'")))
            })
            .collect::<Result<Vec<usize>, _>>()?;
        let grammar = read_tag_grammar(text)?;
        if counts.len() != grammar.trees().len() {
            return Err(SupertagError::Inventory(format!(
                "{} counts for {} trees",
                counts.len(),
                grammar.trees().len()
            )));
        }
        Ok(Inventory { grammar, counts })
    }
}

/// One supertag candidate: an inventory index and its model logprob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supertag {
    pub tree: usize,
    pub logprob: f64,
}

/// Per token, candidates sorted by descending logprob.
pub type SupertagAssignment = Vec<Vec<Supertag>>;

/// Training material: one entry per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SupertagSentence {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub supertags: Vec<usize>,
}

pub fn supertag_corpus(corpus: &TagCorpus) -> Vec<SupertagSentence> {
    corpus
        .trees
        .iter()
        .zip(&corpus.supertags)
        .map(|(t, st)| SupertagSentence {
            tokens: t.leaves().iter().map(|s| s.to_string()).collect(),
            pos: t.preterminals().iter().map(|s| s.to_string()).collect(),
            supertags: st.clone(),
        })
        .collect()
}

fn check(corpus: &[SupertagSentence]) -> Result<(), SupertagError> {
    if corpus.iter().all(|s| s.tokens.is_empty()) {
        return Err(SupertagError::EmptyCorpus);
    }
    for (i, s) in corpus.iter().enumerate() {
        if s.pos.len() != s.tokens.len() || s.supertags.len() != s.tokens.len() {
            return Err(SupertagError::LengthMismatch(i));
        }
    }
    Ok(())
}

/// Anything that yields a distribution over the inventory for each token.
pub trait SupertagModel {
    fn num_supertags(&self) -> usize;

    fn distribution(&self, tokens: &[String], pos: &[String]) -> Vec<Vec<f64>>;
}

/// The `k` most probable supertags per token, ties broken by inventory index.
pub fn topk<M: SupertagModel + ?Sized>(
    model: &M,
    tokens: &[String],
    pos: &[String],
    k: usize,
) -> SupertagAssignment {
    assert!(k >= 1, "k must be at least 1");
    model
        .distribution(tokens, pos)
        .into_iter()
        .map(|dist| {
            let mut idx: Vec<usize> = (0..dist.len()).collect();
            idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
            idx.into_iter()
                .take(k)
                .map(|t| Supertag {
                    tree: t,
                    logprob: dist[t].ln(),
                })
                .collect()
        })
        .collect()
}

/// Interpolated relative frequencies: P(t | word, POS) backed off to
/// P(t | POS), mixed with a small uniform floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyModel {
    size: usize,
    epsilon: f64,
    by_word: BTreeMap<String, BTreeMap<usize, usize>>,
    by_pos: BTreeMap<String, BTreeMap<usize, usize>>,
}

const KIND_FREQUENCY: &str = "supertag-frequency";
const KIND_NEURAL: &str = "supertag-lstm";

fn word_key(word: &str, pos: &str) -> String {
    let w = if is_number(word) { "<NUM>" } else { word };
    format!("{w}\t{pos}")
}

impl FrequencyModel {
    pub fn train(
        corpus: &[SupertagSentence],
        inventory_size: usize,
    ) -> Result<FrequencyModel, SupertagError> {
        check(corpus)?;
        let mut m = FrequencyModel {
            size: inventory_size,
            epsilon: 1e-6,
            by_word: BTreeMap::new(),
            by_pos: BTreeMap::new(),
        };
        for s in corpus {
            for ((w, p), &t) in s.tokens.iter().zip(&s.pos).zip(&s.supertags) {
                *m.by_word
                    .entry(word_key(w, p))
                    .or_default()
                    .entry(t)
                    .or_default() += 1;
                *m.by_pos.entry(p.clone()).or_default().entry(t).or_default() += 1;
            }
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        save_model(KIND_FREQUENCY, self)
    }

    pub fn from_json(text: &str) -> Result<Self, TaggerError> {
        load_model(KIND_FREQUENCY, text)
    }
}

impl SupertagModel for FrequencyModel {
    fn num_supertags(&self) -> usize {
        self.size
    }

    fn distribution(&self, tokens: &[String], pos: &[String]) -> Vec<Vec<f64>> {
        let k = self.size as f64;
        tokens
            .iter()
            .zip(pos)
            .map(|(w, p)| {
                let mut dist = vec![0.0; self.size];
                match self.by_pos.get(p) {
                    Some(counts) => {
                        let total: usize = counts.values().sum();
                        for (&t, &c) in counts {
                            dist[t] = c as f64 / total as f64;
                        }
                    }
                    None => dist.fill(1.0 / k),
                }
                if let Some(counts) = self.by_word.get(&word_key(w, p)) {
                    let total: usize = counts.values().sum();
                    let lambda = total as f64 / (total as f64 + 1.0);
                    for d in dist.iter_mut() {
                        *d *= 1.0 - lambda;
                    }
                    for (&t, &c) in counts {
                        dist[t] += lambda * c as f64 / total as f64;
                    }
                }
                dist.iter()
                    .map(|d| (1.0 - self.epsilon) * d + self.epsilon / k)
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupertagTrainConfig {
    pub net: NetConfig,
    pub epochs: usize,
    pub lr0: f64,
    pub decay: f64,
    pub init_scale: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for SupertagTrainConfig {
    fn default() -> Self {
        SupertagTrainConfig {
            net: NetConfig::default(),
            epochs: 6,
            lr0: 5e-4,
            decay: 0.1,
            init_scale: 0.1,
            min_count: 2,
            seed: 1,
        }
    }
}

/// The boundary tagger's encoder with one softmax over the inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralSupertagger {
    pub vocab: Vocab,
    pub pos_vocab: Vocab,
    pub net: Network,
}

impl NeuralSupertagger {
    /// Adam, one sentence per update, learning rate `lr0 * (1 - decay)^epoch`.
    pub fn train(
        corpus: &[SupertagSentence],
        inventory_size: usize,
        cfg: &SupertagTrainConfig,
    ) -> Result<NeuralSupertagger, SupertagError> {
        check(corpus)?;
        let vocab = Vocab::build(
            corpus
                .iter()
                .flat_map(|s| s.tokens.iter().map(String::as_str)),
            cfg.min_count,
            true,
        );
        let pos_vocab = Vocab::build(
            corpus.iter().flat_map(|s| s.pos.iter().map(String::as_str)),
            1,
            false,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let net = Network::new(
            cfg.net,
            vocab.size(),
            pos_vocab.size(),
            &[inventory_size],
            cfg.init_scale,
            &mut rng,
        );
        let mut m = NeuralSupertagger {
            vocab,
            pos_vocab,
            net,
        };
        let data: Vec<&SupertagSentence> = corpus.iter().filter(|s| !s.tokens.is_empty()).collect();
        let mut opt = Adam::new(&m.net, 0.9, 0.999, 1e-8);
        let mut grad = m.net.zeros_like();
        let mut order: Vec<usize> = (0..data.len()).collect();
        for e in 0..cfg.epochs {
            let lr = cfg.lr0 * (1.0 - cfg.decay).powi(e as i32);
            order.shuffle(&mut rng);
            for &i in &order {
                let s = data[i];
                let w = preprocess(&m.vocab, &s.tokens);
                let p = preprocess(&m.pos_vocab, &s.pos);
                let fw = m.net.forward(&w, &p);
                for t in grad.slices_mut() {
                    t.fill(0.0);
                }
                m.net
                    .backward(&fw, std::slice::from_ref(&s.supertags), &mut grad);
                opt.step(&mut m.net, &grad, lr);
            }
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        save_model(KIND_NEURAL, self)
    }

    pub fn from_json(text: &str) -> Result<Self, TaggerError> {
        load_model(KIND_NEURAL, text)
    }
}

impl SupertagModel for NeuralSupertagger {
    fn num_supertags(&self) -> usize {
        self.net.heads[0].b.len()
    }

    fn distribution(&self, tokens: &[String], pos: &[String]) -> Vec<Vec<f64>> {
        if tokens.is_empty() {
            return Vec::new();
        }
        let fw = self.net.forward(
            &preprocess(&self.vocab, tokens),
            &preprocess(&self.pos_vocab, pos),
        );
        fw.probs[0].rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

/// Either supertagger, as read from a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnySupertagger {
    Frequency(FrequencyModel),
    Neural(NeuralSupertagger),
}

impl AnySupertagger {
    pub fn from_json(text: &str) -> Result<Self, TaggerError> {
        match crate::tagger::model_kind(text)?.as_str() {
            KIND_NEURAL => NeuralSupertagger::from_json(text).map(AnySupertagger::Neural),
            _ => FrequencyModel::from_json(text).map(AnySupertagger::Frequency),
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            AnySupertagger::Frequency(m) => m.to_json(),
            AnySupertagger::Neural(m) => m.to_json(),
        }
    }
}

impl SupertagModel for AnySupertagger {
    fn num_supertags(&self) -> usize {
        match self {
            AnySupertagger::Frequency(m) => m.num_supertags(),
            AnySupertagger::Neural(m) => m.num_supertags(),
        }
    }

    fn distribution(&self, tokens: &[String], pos: &[String]) -> Vec<Vec<f64>> {
        match self {
            AnySupertagger::Frequency(m) => m.distribution(tokens, pos),
            AnySupertagger::Neural(m) => m.distribution(tokens, pos),
        }
    }
}

/// The string `1 2 ... n`.
pub fn artificial_string(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

/// A grammar whose lexicon maps the token `i` to the candidate trees of
/// position `i`, each weighted by its supertag logprob. Trees are named
/// `<supertag>_<i>`; for position `p` (0-based) the candidates appear in
/// assignment order, so with one candidate per token tree `p` is anchored
/// at position `p`.
pub fn sentence_grammar(inventory: &Inventory, assignment: &SupertagAssignment) -> TagGrammar {
    let mut trees = Vec::new();
    for (p, cands) in assignment.iter().enumerate() {
        let token = (p + 1).to_string();
        for st in cands {
            let base = &inventory.trees()[st.tree];
            trees.push(ElementaryTree {
                name: format!("{}_{}", base.name, token),
                logprob: st.logprob.min(0.0),
                ..base.lexicalize(Some(&token))
            });
        }
    }
    TagGrammar::new(inventory.grammar().start(), trees).expect("supertag logprobs are clamped to 0")
}

/// Replace each leaf `i` by `tokens[i - 1]`.
pub fn relabel<S: AsRef<str>>(tree: &Tree, tokens: &[S]) -> Result<Tree, SupertagError> {
    let n = tokens.len();
    let mut bad = None;
    let out = tree.map_leaves(&mut |leaf| match leaf.parse::<usize>() {
        Ok(i) if (1..=n).contains(&i) => tokens[i - 1].as_ref().to_string(),
        _ => {
            bad.get_or_insert_with(|| leaf.to_string());
            leaf.to_string()
        }
    });
    match bad {
        Some(leaf) => Err(SupertagError::Relabel { leaf, n }),
        None => Ok(out),
    }
}

/// Result of parsing with a sentence grammar.
pub struct SupertagParse {
    pub grammar: TagGrammar,
    pub chart: TagChart,
    /// Best derivation over the sentence grammar and its derived tree over
    /// the original tokens.
    pub best: Option<(Derivation, Tree, f64)>,
}

/// Build the sentence grammar, parse `1 ... n` under `allow`, and relabel.
pub fn parse_with_supertags<S: AsRef<str>, A: Allowable<TagItem> + ?Sized>(
    inventory: &Inventory,
    assignment: &SupertagAssignment,
    tokens: &[S],
    allow: &A,
) -> SupertagParse {
    let grammar = sentence_grammar(inventory, assignment);
    let chart = TagParser::new(&grammar).parse(&artificial_string(tokens.len()), allow);
    let best = best_derivation(&chart).map(|(d, t, s)| {
        let t = relabel(&t, tokens).expect("sentence grammar yields positions");
        (d, t, s)
    });
    SupertagParse {
        grammar,
        chart,
        best,
    }
}

/// The gold supertags of a sentence as a one-candidate assignment.
pub fn gold_assignment(supertags: &[usize]) -> SupertagAssignment {
    supertags
        .iter()
        .map(|&t| {
            vec![Supertag {
                tree: t,
                logprob: 0.0,
            }]
        })
        .collect()
}

/// Rewrite a corpus derivation into one over the sentence grammar of
/// [`gold_assignment`], where the tree anchored at position `p` is tree `p`.
pub fn gold_sentence_derivation(d: &Derivation) -> Derivation {
    let mut out = d.clone();
    fn go(d: &mut Derivation) {
        d.tree = d.anchor;
        for a in &mut d.attachments {
            go(&mut a.child);
        }
    }
    go(&mut out);
    out
}

/// One line per sentence: tab-separated tokens, each a space-separated
/// list of `name:logprob`.
pub fn assignment_to_line(inventory: &Inventory, a: &SupertagAssignment) -> String {
    let mut out = String::new();
    for (p, cands) in a.iter().enumerate() {
        if p > 0 {
            out.push('\t');
        }
        for (c, st) in cands.iter().enumerate() {
            if c > 0 {
                out.push(' ');
            }
            write!(out, "{}:{}", inventory.name(st.tree), st.logprob).unwrap();
        }
    }
    out
}

pub fn assignment_from_line(
    inventory: &Inventory,
    line: &str,
    lineno: usize,
) -> Result<SupertagAssignment, SupertagError> {
    let fmt = |msg: String| SupertagError::Format { line: lineno, msg };
    if line.is_empty() {
        return Ok(Vec::new());
    }
    line.split('\t')
        .map(|field| {
            field
                .split(' ')
                .map(|entry| {
                    let (name, lp) = entry
                        .rsplit_once(':')
                        .ok_or_else(|| fmt(format!("bad entry '{entry}'")))?;
                    let tree = inventory
                        .index(name)
                        .ok_or_else(|| fmt(format!("unknown supertag '{name}'")))?;
                    let logprob = lp.parse().map_err(|_| fmt(format!("bad logprob '{lp}'")))?;
                    Ok(Supertag { tree, logprob })
                })
                .collect()
        })
        .collect()
}
