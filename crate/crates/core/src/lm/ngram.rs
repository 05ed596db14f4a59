//! Interpolated add-k n-gram language model.
//!
//! For a context seen in training, the order-`m` estimate mixes the add-k
//! relative frequency with the order-`m-1` estimate:
//!
//! ```text
//! p_m(w | ctx) = λ (c(ctx, w) + k) / (c(ctx) + k |V|) + (1 - λ) p_{m-1}(w | ctx[1..])
//! ```
//!
//! Unseen contexts back off to the shorter context entirely. `V` is the
//! predictable vocabulary: every training word plus `</s>` and `<unk>`.
//! With `k = 0` the model is a plain maximum-likelihood estimate (λ = 1).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::LmError;
use crate::corpus::TokenSeq;

const BOS: u32 = 0;
const EOS: u32 = 1;
const UNK: u32 = 2;
const RESERVED: [&str; 3] = ["<s>", "</s>", "<unk>"];

/// Smoothing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub k: f64,
    /// Weight on the longer context when interpolating with the shorter one.
    pub lambda: f64,
}

impl Smoothing {
    pub fn add_k(k: f64) -> Self {
        if k == 0.0 {
            Self::mle()
        } else {
            Self { k, lambda: 0.9 }
        }
    }

    pub fn mle() -> Self {
        Self { k: 0.0, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NGramConfig {
    pub order: usize,
    pub smoothing: Smoothing,
    /// Pad with `<s>` and score a closing `</s>`.
    pub markers: bool,
}

impl NGramConfig {
    pub fn new(order: usize, k: f64) -> Self {
        Self {
            order,
            smoothing: Smoothing::add_k(k),
            markers: true,
        }
    }
}

impl Default for NGramConfig {
    fn default() -> Self {
        Self::new(3, 0.01)
    }
}

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    config: NGramConfig,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// `tables[m]` maps contexts of length `m` to follower counts.
    tables: Vec<HashMap<Vec<u32>, ContextCounts>>,
}

/// Trains an n-gram model over the given sentences.
pub fn train_ngram(corpus: &[TokenSeq], order: usize, k: f64) -> Result<NGramModel, LmError> {
    NGramModel::train(corpus.iter().map(|s| s.tokens.as_slice()), NGramConfig::new(order, k))
}

impl NGramModel {
    pub fn train<'a, I>(sentences: I, config: NGramConfig) -> Result<Self, LmError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        if config.order == 0 {
            return Err(LmError::InvalidConfig("order must be at least 1".into()));
        }
        if !(config.smoothing.k >= 0.0 && (0.0..=1.0).contains(&config.smoothing.lambda)) {
            return Err(LmError::InvalidConfig("smoothing out of range".into()));
        }
        let mut model = Self {
            config,
            vocab: RESERVED.iter().map(|s| s.to_string()).collect(),
            index: RESERVED
                .iter()
                .enumerate()
                .map(|(i, s)| (s.to_string(), i as u32))
                .collect(),
            tables: vec![HashMap::new(); config.order],
        };
        let mut any = false;
        for sentence in sentences {
            if sentence.is_empty() {
                continue;
            }
            any = true;
            let ids: Vec<u32> = sentence.iter().map(|t| model.intern(t)).collect();
            model.count_sentence(&ids);
        }
        if !any {
            return Err(LmError::EmptyCorpus);
        }
        Ok(model)
    }

    fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.vocab.len() as u32;
        self.vocab.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    fn count_sentence(&mut self, ids: &[u32]) {
        let n = self.config.order;
        let (seq, first) = self.frame(ids, &[]);
        for pos in first..seq.len() {
            let avail = pos.min(n - 1);
            for m in 0..=avail {
                let ctx = seq[pos - m..pos].to_vec();
                let entry = self.tables[m].entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(seq[pos]).or_insert(0) += 1;
            }
        }
    }

    /// Lays out `prefix ++ ids` with markers; returns the sequence and the
    /// index of the first position to be scored (the first of `ids`).
    fn frame(&self, ids: &[u32], prefix: &[u32]) -> (Vec<u32>, usize) {
        let pad = if self.config.markers { self.config.order - 1 } else { 0 };
        let mut seq = Vec::with_capacity(pad + prefix.len() + ids.len() + 1);
        seq.extend(std::iter::repeat_n(BOS, pad));
        seq.extend_from_slice(prefix);
        let first = seq.len();
        seq.extend_from_slice(ids);
        if self.config.markers {
            seq.push(EOS);
        }
        (seq, first)
    }

    pub fn config(&self) -> &NGramConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    /// Size of the predictable vocabulary (training words, `</s>`, `<unk>`).
    pub fn support_size(&self) -> usize {
        self.vocab.len() - 1
    }

    fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().filter(|&i| i != BOS).unwrap_or(UNK)
    }

    fn ids(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Probability of `word` after `context` (only the last `order - 1` ids matter).
    fn prob_id(&self, context: &[u32], word: u32) -> f64 {
        let n = self.config.order;
        let ctx = &context[context.len().saturating_sub(n - 1)..];
        let Smoothing { k, lambda } = self.config.smoothing;
        let v = self.support_size() as f64;
        // unigram base
        let uni = &self.tables[0][&Vec::new()];
        let mut p = (uni.next.get(&word).copied().unwrap_or(0) as f64 + k) / (uni.total as f64 + k * v);
        for m in 1..=ctx.len() {
            let sub = &ctx[ctx.len() - m..];
            if let Some(counts) = self.tables[m].get(sub) {
                let c = counts.next.get(&word).copied().unwrap_or(0) as f64;
                let here = (c + k) / (counts.total as f64 + k * v);
                p = lambda * here + (1.0 - lambda) * p;
            }
        }
        p
    }

    /// Probability of `word` given preceding words, with start padding applied.
    pub fn prob(&self, history: &[String], word: &str) -> f64 {
        let (seq, _) = self.frame(&self.ids(history), &[]);
        // drop the trailing EOS added by frame
        let end = if self.config.markers { seq.len() - 1 } else { seq.len() };
        self.prob_id(&seq[..end], self.id(word))
    }

    fn score_ids(&self, ids: &[u32], prefix: &[u32]) -> f64 {
        let (seq, first) = self.frame(ids, prefix);
        (first..seq.len()).map(|i| self.prob_id(&seq[..i], seq[i]).ln()).sum()
    }

    /// Total natural-log probability of `tokens` as a sentence.
    pub fn logprob(&self, tokens: &[String]) -> f64 {
        self.score_ids(&self.ids(tokens), &[])
    }

    /// Log-probability of `target` when `condition` precedes it in the same
    /// sentence. Only target tokens (and the closing marker) are scored.
    pub fn conditional_logprob(&self, target: &[String], condition: &[String]) -> f64 {
        self.score_ids(&self.ids(target), &self.ids(condition))
    }

    /// Largest deviation from 1 of the probability mass over the predictable
    /// vocabulary, taken over every context seen in training.
    pub fn max_normalization_error(&self) -> f64 {
        let support: Vec<u32> = (1..self.vocab.len() as u32).collect();
        self.tables
            .iter()
            .flat_map(|t| t.keys())
            .map(|ctx| {
                let total: f64 = support.iter().map(|&w| self.prob_id(ctx, w)).sum();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: NGramConfig,
    vocab: Vec<String>,
    /// Per context length: (context, [(next, count)]) sorted for stable output.
    tables: Vec<Vec<(Vec<u32>, Vec<(u32, u64)>)>>,
}

impl Serialize for NGramModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let tables = self
            .tables
            .iter()
            .map(|t| {
                let mut rows: Vec<_> = t
                    .iter()
                    .map(|(ctx, c)| {
                        let mut next: Vec<_> = c.next.iter().map(|(&w, &n)| (w, n)).collect();
                        next.sort_unstable();
                        (ctx.clone(), next)
                    })
                    .collect();
                rows.sort();
                rows
            })
            .collect();
        ModelFile {
            config: self.config,
            vocab: self.vocab.clone(),
            tables,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NGramModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let f = ModelFile::deserialize(d)?;
        if f.config.order == 0 || f.tables.len() != f.config.order {
            return Err(D::Error::custom("table count does not match order"));
        }
        if f.vocab.len() < RESERVED.len() || f.vocab[..3] != RESERVED {
            return Err(D::Error::custom("vocabulary lacks reserved symbols"));
        }
        let index = f.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let tables = f
            .tables
            .into_iter()
            .map(|rows| {
                rows.into_iter()
                    .map(|(ctx, next)| {
                        let total = next.iter().map(|(_, n)| n).sum();
                        (
                            ctx,
                            ContextCounts {
                                total,
                                next: next.into_iter().collect(),
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            config: f.config,
            vocab: f.vocab,
            index,
            tables,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn train(sentences: &[&[&str]], order: usize, k: f64, markers: bool) -> NGramModel {
        let owned: Vec<Vec<String>> = sentences.iter().map(|s| toks(s)).collect();
        let mut cfg = NGramConfig::new(order, k);
        cfg.markers = markers;
        NGramModel::train(owned.iter().map(|s| s.as_slice()), cfg).unwrap()
    }

    #[test]
    fn unigram_mle_relative_frequency() {
        let m = train(&[&["a", "a", "b"]], 1, 0.0, false);
        assert!((m.prob(&[], "a") - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.prob(&[], "b") - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.logprob(&toks(&["a"])) - (2.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((m.logprob(&toks(&["a", "a"])) - 2.0 * (2.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn bigram_mle_forced_transition() {
        let m = train(&[&["a", "b"]], 2, 0.0, false);
        assert!((m.prob(&toks(&["a"]), "b") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn add_k_unseen_token() {
        let k = 0.5;
        let m = train(&[&["a", "a", "b"]], 1, k, false);
        // support = {a, b, </s>, <unk>}
        let expected = k / (3.0 + k * 4.0);
        assert!((m.prob(&[], "zzz") - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_is_error() {
        let empty: Vec<Vec<String>> = vec![vec![]];
        let r = NGramModel::train(empty.iter().map(|s| s.as_slice()), NGramConfig::default());
        assert!(matches!(r, Err(LmError::EmptyCorpus)));
    }

    #[test]
    fn distributions_normalize() {
        let m = train(&[&["the", "cat", "sat"], &["the", "dog", "sat", "down"]], 3, 0.01, true);
        assert!(m.max_normalization_error() < 1e-9);
        let mle = train(&[&["the", "cat", "sat"], &["the", "dog", "sat"]], 2, 0.0, false);
        assert!(mle.max_normalization_error() < 1e-9);
    }

    #[test]
    fn bigram_chain_rule() {
        let m = train(&[&["c", "t"]], 2, 0.0, false);
        let cond = m.conditional_logprob(&toks(&["t"]), &toks(&["c"]));
        assert!((cond - m.prob(&toks(&["c"]), "t").ln()).abs() < 1e-12);
        let diff = m.logprob(&toks(&["c", "t"])) - m.logprob(&toks(&["c"]));
        assert!((cond - diff).abs() < 1e-12);
    }

    #[test]
    fn empty_condition_matches_unconditional() {
        let m = train(&[&["x", "y", "z"]], 3, 0.1, true);
        let t = toks(&["y", "z"]);
        assert_eq!(m.conditional_logprob(&t, &[]), m.logprob(&t));
    }

    #[test]
    fn serde_round_trip_preserves_scores() {
        let m = train(&[&["a", "b", "c"], &["b", "c", "a"]], 3, 0.1, true);
        let json = serde_json::to_string(&m).unwrap();
        let back: NGramModel = serde_json::from_str(&json).unwrap();
        let t = toks(&["a", "c", "q"]);
        assert_eq!(m.logprob(&t), back.logprob(&t));
        assert_eq!(json, serde_json::to_string(&back).unwrap());
    }
}
