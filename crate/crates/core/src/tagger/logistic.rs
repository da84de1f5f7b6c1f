use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_corpus, is_number, load_model, save_model, BoundaryPredictor, TaggedSentence, TaggerError,
};

/// Hyperparameters of the windowed logistic tagger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub window: usize,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            window: 2,
            epochs: 8,
            lr: 0.1,
            l2: 1e-6,
            seed: 1,
        }
    }
}

/// Two independent logistic regressions over sparse indicator features of
/// the words and POS tags within a fixed window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticTagger {
    window: usize,
    features: IndexMap<String, usize>,
    begin: Vec<f64>,
    end: Vec<f64>,
}

const KIND: &str = "boundary-logistic";

fn word_form(w: &str) -> &str {
    if is_number(w) {
        "<NUM>"
    } else {
        w
    }
}

fn feature_strings(tokens: &[String], pos: &[String], i: usize, window: usize) -> Vec<String> {
    let n = tokens.len() as isize;
    let mut out = vec!["bias".to_string()];
    let at = |v: &[String], j: isize| -> String {
        if j < 0 {
            "<s>".into()
        } else if j >= n {
            "</s>".into()
        } else {
            word_form(&v[j as usize]).to_string()
        }
    };
    let w = window as isize;
    for o in -w..=w {
        let j = i as isize + o;
        out.push(format!("w{o}={}", at(tokens, j)));
        out.push(format!("p{o}={}", at(pos, j)));
    }
    let j = i as isize;
    out.push(format!("pp-1={}|{}", at(pos, j - 1), at(pos, j)));
    out.push(format!("pp+1={}|{}", at(pos, j), at(pos, j + 1)));
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LogisticTagger {
    fn lookup(&self, feats: &[String]) -> Vec<usize> {
        feats
            .iter()
            .filter_map(|f| self.features.get(f).copied())
            .collect()
    }

    fn score(w: &[f64], ids: &[usize]) -> f64 {
        sigmoid(ids.iter().map(|&i| w[i]).sum())
    }

    pub fn train(
        corpus: &[TaggedSentence],
        cfg: &LogisticConfig,
    ) -> Result<LogisticTagger, TaggerError> {
        check_corpus(corpus)?;
        let mut features = IndexMap::new();
        let mut examples = Vec::new();
        for s in corpus {
            for i in 0..s.len() {
                let ids: Vec<usize> = feature_strings(&s.tokens, &s.pos, i, cfg.window)
                    .into_iter()
                    .map(|f| {
                        let next = features.len();
                        *features.entry(f).or_insert(next)
                    })
                    .collect();
                examples.push((ids, s.begin[i], s.end[i]));
            }
        }
        let mut m = LogisticTagger {
            window: cfg.window,
            begin: vec![0.0; features.len()],
            end: vec![0.0; features.len()],
            features,
        };
        let mut g2b = vec![1e-8; m.begin.len()];
        let mut g2e = vec![1e-8; m.end.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &x in &order {
                let (ids, b, e) = &examples[x];
                for (w, g2, y) in [(&mut m.begin, &mut g2b, *b), (&mut m.end, &mut g2e, *e)] {
                    let d = Self::score(w, ids) - y as u8 as f64;
                    for &i in ids {
                        let g = d + cfg.l2 * w[i];
                        g2[i] += g * g;
                        w[i] -= cfg.lr * g / g2[i].sqrt();
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        save_model(KIND, self)
    }

    pub fn from_json(text: &str) -> Result<Self, TaggerError> {
        load_model(KIND, text)
    }
}

impl BoundaryPredictor for LogisticTagger {
    fn predict(&self, tokens: &[String], pos: &[String]) -> (Vec<f64>, Vec<f64>) {
        (0..tokens.len())
            .map(|i| {
                let ids = self.lookup(&feature_strings(tokens, pos, i, self.window));
                (Self::score(&self.begin, &ids), Self::score(&self.end, &ids))
            })
            .unzip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};
    use crate::tagger::{dev_accuracy, tagged_corpus};

    #[test]
    fn fits_synthetic_boundaries() {
        let trees = generate(&SynthConfig {
            sentences: 400,
            ..SynthConfig::default()
        });
        let data = tagged_corpus(&trees);
        let (train, dev) = data.split_at(300);
        let m = LogisticTagger::train(train, &LogisticConfig::default()).unwrap();
        let (b, e) = dev_accuracy(&m, dev);
        assert!(b > 80.0 && e > 80.0, "{b} {e}");
        let back = LogisticTagger::from_json(&m.to_json()).unwrap();
        assert_eq!(
            back.predict(&dev[0].tokens, &dev[0].pos),
            m.predict(&dev[0].tokens, &dev[0].pos)
        );
    }
}
