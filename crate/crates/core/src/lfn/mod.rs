//! Language-model-guided factual negative construction.
//!
//! For every summary sentence: enumerate span-deletion compressions, keep the
//! compression that best predicts the sentence following the oracle article
//! sentence (the *factual fragment*), then swap fragment words in the gold
//! sentence for embedding-similar article words.

mod candidates;
mod rank;
mod replace;

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use candidates::{generate_candidates, Candidate};
pub use rank::{prune_order, rank_candidates, RelevancePick};
pub use replace::{
    eligible_positions, is_content_word, replace_random, replace_words, replacement_budget, Perturbation,
};

use crate::corpus::{Alignment, Document};
use crate::embed::{EmbedError, EmbeddingTable};
use crate::lm::{LmError, Scorer, ScorerSpec};

#[derive(Debug, Error)]
pub enum LfnError {
    #[error("sentence has {0} token(s); at least 2 are needed")]
    TooShort(usize),
    #[error("construction failed: {0}")]
    ConstructionFailed(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scorer(#[from] LmError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

impl LfnError {
    /// Short label used when tallying failures.
    pub fn reason(&self) -> &'static str {
        match self {
            LfnError::TooShort(_) => "too_short",
            LfnError::ConstructionFailed(_) => "construction_failed",
            LfnError::InvalidConfig(_) => "invalid_config",
            LfnError::Scorer(_) => "scorer",
            LfnError::Embedding(_) => "embedding",
        }
    }
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before", "being",
    "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "hers", "him",
    "his", "how", "i", "if", "in", "into", "is", "it", "its", "me", "more", "most", "my", "no", "nor", "not", "of",
    "on", "once", "only", "or", "other", "our", "out", "over", "own", "s", "said", "says", "she", "should", "so",
    "some", "such", "t", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those",
    "through", "to", "too", "under", "until", "up", "us", "very", "was", "we", "were", "what", "when", "where",
    "which", "while", "who", "whom", "why", "will", "with", "would", "you", "your",
];

/// Built-in function-word list; these are never replaced.
pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfnConfig {
    /// Maximum number of successive span deletions.
    pub max_iterations: usize,
    pub max_span_length: usize,
    /// Candidates surviving the fluency phase into the relevance phase.
    pub rank_topk: usize,
    /// Neighbors a replacement word is drawn from.
    pub replace_topk: usize,
    /// Fraction of gold tokens to replace, in (0, 1].
    pub replacement_ratio: f64,
    pub seed: u64,
    /// Mix the epoch into the sample seed so each epoch sees fresh negatives.
    pub dynamic: bool,
    #[serde(default)]
    pub literal_argmin: bool,
}

impl Default for LfnConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            max_span_length: 3,
            rank_topk: 10,
            replace_topk: 5,
            replacement_ratio: 0.15,
            seed: 0,
            dynamic: false,
            literal_argmin: false,
        }
    }
}

impl LfnConfig {
    pub fn validate(&self) -> Result<(), LfnError> {
        let bad = |field: &str| Err(LfnError::InvalidConfig(field.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations");
        }
        if self.max_span_length < 1 {
            return bad("max_span_length");
        }
        if self.rank_topk < 1 {
            return bad("rank_topk");
        }
        if self.replace_topk < 1 {
            return bad("replace_topk");
        }
        if !(self.replacement_ratio > 0.0 && self.replacement_ratio <= 1.0) {
            return bad("replacement_ratio");
        }
        Ok(())
    }

    pub fn relevance_pick(&self) -> RelevancePick {
        if self.literal_argmin {
            RelevancePick::LiteralMin
        } else {
            RelevancePick::Max
        }
    }

    /// Epoch actually mixed into seeds: always 0 unless `dynamic` is set.
    pub fn effective_epoch(&self, epoch: u64) -> u64 {
        if self.dynamic {
            epoch
        } else {
            0
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one sentence; stable across platforms and runs.
pub fn sample_seed(base: u64, doc_id: &str, sentence_idx: usize, epoch: u64) -> u64 {
    let mut h = splitmix(base);
    h = splitmix(h ^ fnv1a(doc_id.as_bytes()));
    h = splitmix(h ^ sentence_idx as u64);
    splitmix(h ^ epoch)
}

/// Content words of the article: the pool replacements are drawn from.
pub fn article_vocab(doc: &Document) -> BTreeSet<String> {
    doc.article_tokens().filter(|t| is_content_word(t)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeSample {
    pub doc_id: String,
    pub sentence_idx: usize,
    pub tokens: Vec<String>,
    pub replaced_positions: Vec<usize>,
    pub gold_tokens: Vec<String>,
    pub fragment: Candidate,
    pub epoch: u64,
    pub seed_used: u64,
}

impl NegativeSample {
    /// The negative restricted to the fragment's kept positions.
    pub fn negative_fragment(&self) -> Vec<String> {
        self.fragment
            .kept_positions
            .iter()
            .map(|&i| self.tokens[i].clone())
            .collect()
    }

    /// Fraction of gold tokens replaced.
    pub fn replaced_fraction(&self) -> f64 {
        self.replaced_positions.len() as f64 / self.gold_tokens.len() as f64
    }

    /// Checks the structural invariants against the source article.
    pub fn check(&self, article_words: &BTreeSet<String>) -> Result<(), String> {
        if self.tokens.len() != self.gold_tokens.len() {
            return Err("length differs from gold".into());
        }
        if self.replaced_positions.is_empty() {
            return Err("no replaced positions".into());
        }
        if !self.replaced_positions.windows(2).all(|w| w[0] < w[1]) {
            return Err("replaced positions not strictly increasing".into());
        }
        let r: BTreeSet<usize> = self.replaced_positions.iter().copied().collect();
        for (i, (neg, gold)) in self.tokens.iter().zip(&self.gold_tokens).enumerate() {
            if r.contains(&i) {
                if neg == gold {
                    return Err(format!("position {i} in R is unchanged"));
                }
                if !article_words.contains(neg) {
                    return Err(format!("replacement `{neg}` not in article"));
                }
            } else if neg != gold {
                return Err(format!("position {i} outside R differs"));
            }
        }
        Ok(())
    }
}

/// A sentence that yielded no negative, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub doc_id: String,
    pub sentence_idx: usize,
    pub reason: String,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct DocOutcome {
    pub samples: Vec<NegativeSample>,
    pub diagnostics: Vec<Diagnostic>,
}

impl DocOutcome {
    fn fail(&mut self, doc: &Document, sentence_idx: usize, err: &LfnError) {
        log::debug!("{}#{sentence_idx}: {err}", doc.id);
        self.diagnostics.push(Diagnostic {
            doc_id: doc.id.clone(),
            sentence_idx,
            reason: err.reason().to_string(),
            detail: err.to_string(),
        });
    }
}

/// Compresses `gold` to its factual fragment given the ranking context.
pub fn select_fragment<S: Scorer + ?Sized>(
    gold: &[String],
    context: &[String],
    scorer: &mut S,
    config: &LfnConfig,
) -> Result<Candidate, LfnError> {
    let candidates = generate_candidates(gold, config.max_iterations, config.max_span_length)?;
    Ok(rank_candidates(
        &candidates,
        context,
        scorer,
        config.rank_topk,
        config.relevance_pick(),
    )?)
}

/// Runs fragment selection and word replacement for every summary sentence of `doc`.
pub fn build_negative<S: Scorer + ?Sized>(
    doc: &Document,
    alignments: &[Alignment],
    scorer: &mut S,
    table: &EmbeddingTable,
    config: &LfnConfig,
    epoch: u64,
) -> DocOutcome {
    let vocab = article_vocab(doc);
    let epoch = config.effective_epoch(epoch);
    let mut out = DocOutcome::default();
    for align in alignments {
        let idx = align.summary_idx;
        let gold = &doc.summary_sentences[idx].tokens;
        let context = &align.context(doc).tokens;
        let seed = sample_seed(config.seed, &doc.id, idx, epoch);
        let result = select_fragment(gold, context, scorer, config).and_then(|fragment| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = replace_words(
                gold,
                &fragment.tokens,
                &vocab,
                table,
                config.replacement_ratio,
                config.replace_topk,
                &mut rng,
            )?;
            Ok((fragment, p))
        });
        match result {
            Ok((fragment, p)) => out.samples.push(NegativeSample {
                doc_id: doc.id.clone(),
                sentence_idx: idx,
                tokens: p.tokens,
                replaced_positions: p.replaced,
                gold_tokens: gold.clone(),
                fragment,
                epoch,
                seed_used: seed,
            }),
            Err(e) => out.fail(doc, idx, &e),
        }
    }
    out
}

/// Random-replacement baseline over every summary sentence of `doc`.
pub fn build_random_negative(doc: &Document, config: &LfnConfig, epoch: u64) -> DocOutcome {
    let vocab = article_vocab(doc);
    let epoch = config.effective_epoch(epoch);
    let mut out = DocOutcome::default();
    for (idx, sentence) in doc.summary_sentences.iter().enumerate() {
        let seed = sample_seed(config.seed, &doc.id, idx, epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match replace_random(&sentence.tokens, &vocab, config.replacement_ratio, &mut rng) {
            Ok(p) => out.samples.push(NegativeSample {
                doc_id: doc.id.clone(),
                sentence_idx: idx,
                tokens: p.tokens,
                replaced_positions: p.replaced,
                gold_tokens: sentence.tokens.clone(),
                fragment: Candidate::from_positions(&sentence.tokens, (0..sentence.len()).collect()),
                epoch,
                seed_used: seed,
            }),
            Err(e) => out.fail(doc, idx, &e),
        }
    }
    out
}

/// Constructs negatives for a whole corpus, sharding documents over
/// `workers` threads that each own a scorer handle. Output is sorted by
/// `(doc_id, sentence_idx)` regardless of the worker count.
pub fn build_corpus_negatives(
    docs: &[(Document, Vec<Alignment>)],
    scorer: &ScorerSpec,
    table: &EmbeddingTable,
    config: &LfnConfig,
    epoch: u64,
    workers: usize,
) -> Result<DocOutcome, LfnError> {
    config.validate()?;
    let workers = workers.clamp(1, docs.len().max(1));
    let results: Vec<Result<DocOutcome, LfnError>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    let mut handle = scorer.open()?;
                    let mut acc = DocOutcome::default();
                    for (doc, aligns) in docs.iter().skip(w).step_by(workers) {
                        let o = build_negative(doc, aligns, &mut handle, table, config, epoch);
                        acc.samples.extend(o.samples);
                        acc.diagnostics.extend(o.diagnostics);
                    }
                    Ok(acc)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut all = DocOutcome::default();
    for r in results {
        let o = r?;
        all.samples.extend(o.samples);
        all.diagnostics.extend(o.diagnostics);
    }
    all.samples
        .sort_by(|a, b| (&a.doc_id, a.sentence_idx).cmp(&(&b.doc_id, b.sentence_idx)));
    all.diagnostics
        .sort_by(|a, b| (&a.doc_id, a.sentence_idx).cmp(&(&b.doc_id, b.sentence_idx)));
    Ok(all)
}

/// Output record, one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeRecord {
    pub doc_id: String,
    pub sentence_idx: usize,
    pub gold: Vec<String>,
    pub negative: Vec<String>,
    pub replaced_positions: Vec<usize>,
    pub fragment_kept_positions: Vec<usize>,
    pub epoch: u64,
    pub seed_used: u64,
}

impl From<&NegativeSample> for NegativeRecord {
    fn from(s: &NegativeSample) -> Self {
        Self {
            doc_id: s.doc_id.clone(),
            sentence_idx: s.sentence_idx,
            gold: s.gold_tokens.clone(),
            negative: s.tokens.clone(),
            replaced_positions: s.replaced_positions.clone(),
            fragment_kept_positions: s.fragment.kept_positions.clone(),
            epoch: s.epoch,
            seed_used: s.seed_used,
        }
    }
}

impl NegativeRecord {
    pub fn into_sample(self) -> Result<NegativeSample, String> {
        if let Some(&bad) = self.fragment_kept_positions.iter().find(|&&i| i >= self.gold.len()) {
            return Err(format!("fragment position {bad} out of range"));
        }
        let fragment = Candidate::from_positions(&self.gold, self.fragment_kept_positions);
        Ok(NegativeSample {
            doc_id: self.doc_id,
            sentence_idx: self.sentence_idx,
            tokens: self.negative,
            replaced_positions: self.replaced_positions,
            gold_tokens: self.gold,
            fragment,
            epoch: self.epoch,
            seed_used: self.seed_used,
        })
    }
}

pub fn write_negatives<W: Write>(mut w: W, samples: &[NegativeSample]) -> io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, &NegativeRecord::from(s))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_negatives<R: BufRead>(r: R) -> io::Result<Vec<NegativeSample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |e: String| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1));
        let rec: NegativeRecord = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        out.push(rec.into_sample().map_err(invalid)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopword_table_is_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(is_stopword("the") && !is_stopword("paris"));
    }

    #[test]
    fn seeds_depend_on_every_input() {
        let s = sample_seed(1, "d", 0, 0);
        assert_ne!(s, sample_seed(2, "d", 0, 0));
        assert_ne!(s, sample_seed(1, "e", 0, 0));
        assert_ne!(s, sample_seed(1, "d", 1, 0));
        assert_ne!(s, sample_seed(1, "d", 0, 1));
        assert_eq!(s, sample_seed(1, "d", 0, 0));
    }

    #[test]
    fn config_validation() {
        assert!(LfnConfig::default().validate().is_ok());
        let bad = LfnConfig {
            replacement_ratio: 0.0,
            ..LfnConfig::default()
        };
        assert!(matches!(bad.validate(), Err(LfnError::InvalidConfig(f)) if f == "replacement_ratio"));
    }

    #[test]
    fn one_token_summaries_yield_only_diagnostics() {
        let doc = Document::from_sentences("d", &["Acme opened in Paris."], &["Paris"]).unwrap();
        let table = crate::embed::read_embeddings("t", "paris 1 0\nacme 0 1\n".as_bytes()).unwrap();
        let model = crate::lm::train_ngram(&doc.article_sentences, 2, 0.1).unwrap();
        let mut scorer = crate::lm::ScorerHandle::native(std::sync::Arc::new(model));
        let out = build_negative(&doc, &doc.align(), &mut scorer, &table, &LfnConfig::default(), 0);
        assert!(out.samples.is_empty());
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.diagnostics[0].reason, "too_short");
    }
}
