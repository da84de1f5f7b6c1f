//! Boundary tagger: predicts for each string position the probability that
//! a multi-word constituent may begin there, and that one may end after it.
//!
//! The main model is a two-layer bidirectional LSTM over word and POS
//! embeddings with two 2-way softmax heads ([`BoundaryModel`]). A windowed
//! logistic model ([`LogisticTagger`]) implements the same
//! [`BoundaryPredictor`] interface.

mod logistic;
pub mod net;

use std::collections::BTreeSet;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{from_probs, gold_constraints, BeginEndConstraints};
use crate::tree::Tree;

pub use logistic::{LogisticConfig, LogisticTagger};
pub use net::{gradient_check, Adam, NetConfig, Network, RmsProp};

/// Reserved word index for out-of-vocabulary tokens.
pub const UNK: usize = 0;
/// Reserved word index for numeric tokens.
pub const NUMBER: usize = 1;

const MODEL_FORMAT: &str = "chartcons-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("model file: {0}")]
    Format(String),
}

/// True for tokens such as `3`, `-2`, `1.5`, `3,000` or `1/2`.
pub fn is_number(token: &str) -> bool {
    let body = token.strip_prefix(['+', '-']).unwrap_or(token);
    let mut groups = body.split(['.', ',', '/']);
    let first = groups.next().unwrap_or("");
    let digits = |g: &str| !g.is_empty() && g.bytes().all(|b| b.is_ascii_digit());
    digits(first) && groups.all(digits)
}

/// Symbol table with frequency cutoff. Words map to indices at or above 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    index: IndexMap<String, usize>,
    /// When set, numeric tokens map to [`NUMBER`] and indices start at 2.
    numbers: bool,
}

impl Vocab {
    /// Keep symbols seen at least `min_count` times.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(
        symbols: I,
        min_count: usize,
        numbers: bool,
    ) -> Vocab {
        let mut counts: IndexMap<&str, usize> = IndexMap::new();
        for s in symbols {
            if !(numbers && is_number(s)) {
                *counts.entry(s).or_default() += 1;
            }
        }
        let offset = if numbers { 2 } else { 1 };
        let mut index = IndexMap::new();
        for (s, c) in counts {
            if c >= min_count {
                let id = index.len() + offset;
                index.insert(s.to_string(), id);
            }
        }
        Vocab { index, numbers }
    }

    /// Number of rows an embedding table needs.
    pub fn size(&self) -> usize {
        self.index.len() + if self.numbers { 2 } else { 1 }
    }

    pub fn get(&self, symbol: &str) -> usize {
        if self.numbers && is_number(symbol) {
            return NUMBER;
        }
        self.index.get(symbol).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }
}

/// Map tokens to vocabulary indices.
pub fn preprocess<S: AsRef<str>>(vocab: &Vocab, tokens: &[S]) -> Vec<usize> {
    tokens.iter().map(|t| vocab.get(t.as_ref())).collect()
}

/// One training sentence. `begin[i]` is true when a constituent may begin
/// at `i`; `end[i]` is true when one may end at boundary `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub begin: Vec<bool>,
    pub end: Vec<bool>,
}

impl TaggedSentence {
    pub fn from_tree(t: &Tree) -> TaggedSentence {
        let c = gold_constraints(t);
        let n = t.num_leaves();
        TaggedSentence {
            tokens: t.leaves().iter().map(|w| w.to_string()).collect(),
            pos: t.preterminals().iter().map(|p| p.to_string()).collect(),
            begin: (0..n).map(|i| !c.begin_banned(i)).collect(),
            end: (0..n).map(|i| !c.end_banned(i + 1)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn constraints(&self) -> BeginEndConstraints {
        let n = self.len();
        let begin = (0..n.saturating_sub(1)).filter(|&i| !self.begin[i]);
        let end = (2..=n).filter(|&k| !self.end[k - 1]);
        BeginEndConstraints::new(n, begin, end).expect("labels within window")
    }
}

pub fn tagged_corpus(trees: &[Tree]) -> Vec<TaggedSentence> {
    trees.iter().map(TaggedSentence::from_tree).collect()
}

/// Anything that yields per-position `(P(B), P(E))`.
pub trait BoundaryPredictor {
    fn predict(&self, tokens: &[String], pos: &[String]) -> (Vec<f64>, Vec<f64>);

    fn constraints(&self, tokens: &[String], pos: &[String], theta: f64) -> BeginEndConstraints {
        let (pb, pe) = self.predict(tokens, pos);
        from_probs(&pb, &pe, theta).expect("theta validated by caller")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub net: NetConfig,
    pub epochs: usize,
    pub lr0: f64,
    pub decay: f64,
    pub rho: f64,
    pub eps: f64,
    pub init_scale: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            net: NetConfig::default(),
            epochs: 6,
            lr0: 5e-4,
            decay: 0.1,
            rho: 0.9,
            eps: 1e-8,
            init_scale: 0.1,
            min_count: 2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-sentence training loss during the epoch.
    pub train_loss: f64,
    pub dev_begin_accuracy: Option<f64>,
    pub dev_end_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss before any update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose weights were kept (1-based).
    pub selected_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryModel {
    pub vocab: Vocab,
    pub pos_vocab: Vocab,
    pub net: Network,
}

const KIND_BOUNDARY: &str = "boundary-lstm";

impl BoundaryModel {
    fn encode(&self, tokens: &[String], pos: &[String]) -> (Vec<usize>, Vec<usize>) {
        (
            preprocess(&self.vocab, tokens),
            preprocess(&self.pos_vocab, pos),
        )
    }

    fn labels(s: &TaggedSentence) -> Vec<Vec<usize>> {
        vec![
            s.begin.iter().map(|&b| b as usize).collect(),
            s.end.iter().map(|&b| b as usize).collect(),
        ]
    }

    pub fn loss(&self, s: &TaggedSentence) -> f64 {
        let (w, p) = self.encode(&s.tokens, &s.pos);
        Network::loss(&self.net.forward(&w, &p), &Self::labels(s))
    }

    pub fn to_json(&self) -> String {
        save_model(KIND_BOUNDARY, self)
    }

    pub fn from_json(text: &str) -> Result<Self, TaggerError> {
        load_model(KIND_BOUNDARY, text)
    }
}

impl BoundaryPredictor for BoundaryModel {
    fn predict(&self, tokens: &[String], pos: &[String]) -> (Vec<f64>, Vec<f64>) {
        if tokens.is_empty() {
            return (vec![], vec![]);
        }
        let (w, p) = self.encode(tokens, pos);
        let fw = self.net.forward(&w, &p);
        (
            fw.probs[0].column(1).to_vec(),
            fw.probs[1].column(1).to_vec(),
        )
    }
}

fn check_corpus(corpus: &[TaggedSentence]) -> Result<(), TaggerError> {
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(TaggerError::EmptyCorpus);
    }
    for (i, s) in corpus.iter().enumerate() {
        let n = s.len();
        if s.pos.len() != n || s.begin.len() != n || s.end.len() != n {
            return Err(TaggerError::LengthMismatch(format!(
                "training sentence {i}"
            )));
        }
    }
    Ok(())
}

/// Per-head accuracy at θ = 0.5 over candidate windows.
pub fn dev_accuracy<P: BoundaryPredictor + ?Sized>(
    model: &P,
    dev: &[TaggedSentence],
) -> (f64, f64) {
    let pred: Vec<BeginEndConstraints> = dev
        .iter()
        .map(|s| model.constraints(&s.tokens, &s.pos, 0.5))
        .collect();
    let gold: Vec<BeginEndConstraints> = dev.iter().map(TaggedSentence::constraints).collect();
    let r = tagger_prf(&pred, &gold).expect("same sentences");
    (r.begin.accuracy, r.end.accuracy)
}

/// Train the BiLSTM tagger one sentence per update with RMSProp. With a
/// dev set, the epoch with the best mean dev accuracy is kept.
pub fn train(
    corpus: &[TaggedSentence],
    dev: &[TaggedSentence],
    cfg: &TrainConfig,
    mut log: impl FnMut(&EpochStats),
) -> Result<(BoundaryModel, TrainReport), TaggerError> {
    check_corpus(corpus)?;
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
        &[2, 2],
        cfg.init_scale,
        &mut rng,
    );
    let mut model = BoundaryModel {
        vocab,
        pos_vocab,
        net,
    };
    let data: Vec<&TaggedSentence> = corpus.iter().filter(|s| !s.is_empty()).collect();
    let initial_loss = data.iter().map(|s| model.loss(s)).sum::<f64>() / data.len() as f64;

    let mut opt = RmsProp::new(&model.net, cfg.rho, cfg.eps);
    let mut grad = model.net.zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;
    for e in 0..cfg.epochs {
        let lr = cfg.lr0 * (1.0 - cfg.decay).powi(e as i32);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let s = data[i];
            let (w, p) = model.encode(&s.tokens, &s.pos);
            let labels = BoundaryModel::labels(s);
            let fw = model.net.forward(&w, &p);
            total += Network::loss(&fw, &labels);
            for t in grad.slices_mut() {
                t.fill(0.0);
            }
            model.net.backward(&fw, &labels, &mut grad);
            opt.step(&mut model.net, &grad, lr);
        }
        let (db, de) = if dev.is_empty() {
            (None, None)
        } else {
            let (b, e) = dev_accuracy(&model, dev);
            (Some(b), Some(e))
        };
        let stats = EpochStats {
            epoch: e + 1,
            lr,
            train_loss: total / data.len() as f64,
            dev_begin_accuracy: db,
            dev_end_accuracy: de,
        };
        log(&stats);
        epochs.push(stats);
        let score = match (db, de) {
            (Some(b), Some(e)) => b + e,
            _ => e as f64,
        };
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, e + 1, model.net.clone()));
        }
    }
    let selected_epoch = match best {
        Some((_, epoch, net)) => {
            model.net = net;
            epoch
        }
        None => 0,
    };
    Ok((
        model,
        TrainReport {
            initial_loss,
            epochs,
            selected_epoch,
        },
    ))
}

/// Precision, recall and accuracy of one banned-position set, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
    pub positions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfReport {
    pub begin: Prf,
    pub end: Prf,
}

fn prf_of(pairs: impl Iterator<Item = (BTreeSet<usize>, BTreeSet<usize>, usize)>) -> Prf {
    let mut r = Prf::default();
    let mut agree = 0;
    for (pred, gold, window) in pairs {
        let tp = pred.intersection(&gold).count();
        r.true_positives += tp;
        r.predicted += pred.len();
        r.gold += gold.len();
        r.positions += window;
        agree += window - (pred.len() + gold.len() - 2 * tp);
    }
    let pct = |a: usize, b: usize| {
        if b == 0 {
            100.0
        } else {
            100.0 * a as f64 / b as f64
        }
    };
    r.precision = pct(r.true_positives, r.predicted);
    r.recall = pct(r.true_positives, r.gold);
    r.accuracy = pct(agree, r.positions);
    r
}

/// Score predicted banned sets against gold ones, micro-averaged over the
/// corpus. Empty denominators score 100.
pub fn tagger_prf(
    pred: &[BeginEndConstraints],
    gold: &[BeginEndConstraints],
) -> Result<PrfReport, TaggerError> {
    if pred.len() != gold.len() {
        return Err(TaggerError::LengthMismatch(format!(
            "{} predicted vs {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(TaggerError::LengthMismatch(format!(
                "sentence {i}: length {} vs {}",
                p.len(),
                g.len()
            )));
        }
    }
    let pairs = || pred.iter().zip(gold);
    Ok(PrfReport {
        begin: prf_of(pairs().map(|(p, g)| (p.begin_set(), g.begin_set(), g.begin_window().len()))),
        end: prf_of(pairs().map(|(p, g)| (p.end_set(), g.end_set(), g.end_window().len()))),
    })
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    version: u32,
    kind: &'a str,
    model: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    format: String,
    version: u32,
    kind: String,
    model: T,
}

/// Serialize a model into the versioned JSON container.
pub fn save_model<T: Serialize>(kind: &str, model: &T) -> String {
    serde_json::to_string(&EnvelopeOut {
        format: MODEL_FORMAT,
        version: MODEL_VERSION,
        kind,
        model,
    })
    .expect("models serialize")
}

/// Read a model of the given kind from the versioned JSON container.
pub fn load_model<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T, TaggerError> {
    let env: EnvelopeIn<T> =
        serde_json::from_str(text).map_err(|e| TaggerError::Format(e.to_string()))?;
    if env.format != MODEL_FORMAT {
        return Err(TaggerError::Format(format!(
            "not a model file (format {:?})",
            env.format
        )));
    }
    if env.version != MODEL_VERSION {
        return Err(TaggerError::Format(format!(
            "unsupported version {}",
            env.version
        )));
    }
    if env.kind != kind {
        return Err(TaggerError::Format(format!(
            "expected a {kind} model, found {}",
            env.kind
        )));
    }
    Ok(env.model)
}

/// Peek at the `kind` field of a model file.
pub fn model_kind(text: &str) -> Result<String, TaggerError> {
    #[derive(Deserialize)]
    struct Kind {
        kind: String,
    }
    serde_json::from_str::<Kind>(text)
        .map(|k| k.kind)
        .map_err(|e| TaggerError::Format(e.to_string()))
}
