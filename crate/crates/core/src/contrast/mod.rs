//! Contrastive training objectives on a toy encoder-decoder.

mod gradcheck;
mod losses;
pub mod model;
mod objective;
mod train;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gradcheck::{grad_check, GradCheck};
pub use losses::{
    codec_pm, codec_pm_logits, codec_vanilla, coenc, coenc_scores, combine, logit_grads, logprobs_from_logits,
    loss_codec_pm, loss_codec_vanilla, loss_coenc, CodecMode, CodecValue, CoencGrads, DenominatorMode, LossBreakdown,
    PositionRecord,
};
pub use model::{Grads, ModelConfig, ToySeq2Seq};
pub use objective::{batch_loss, evaluate, fact_score, item_gap, loss_ce, teacher_forced_accuracy, Weights};
pub use train::{
    read_checkpoint, train, train_dynamic, write_checkpoint, write_loss_csv, Checkpoint, PositionLog, StepRecord,
    TrainConfig, TrainError, TrainLog,
};

#[derive(Debug, Error)]
pub enum ContrastError {
    #[error("invalid position mask: {0}")]
    InvalidMask(String),
    #[error("gold has {gold} positions but the negative has {negative}")]
    LengthMismatch { gold: usize, negative: usize },
    #[error("pooled representation has zero norm")]
    ZeroVector,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
}

/// Word/id mapping; id 0 is reserved for unknown words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

pub const UNK: &str = "<unk>";

impl Vocab {
    /// Ids follow first appearance.
    pub fn build<'a, I: IntoIterator<Item = &'a String>>(tokens: I) -> Self {
        let mut v = Self::from_words(vec![UNK.to_string()]);
        for t in tokens {
            if !v.index.contains_key(t) {
                v.index.insert(t.clone(), v.words.len());
                v.words.push(t.clone());
            }
        }
        v
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn ids(&self, words: &[String]) -> Vec<usize> {
        words.iter().map(|w| self.id(w)).collect()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }
}

/// A negative summary with the positions where it departs from gold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeTarget {
    pub tokens: Vec<usize>,
    pub replaced: Vec<usize>,
}

/// One training item: article, gold summary sentence, negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub article: Vec<usize>,
    pub gold: Vec<usize>,
    pub negatives: Vec<NegativeTarget>,
}

/// Article tokens fed to the encoder: every article sentence, in order.
pub fn article_input(doc: &crate::corpus::Document) -> Vec<String> {
    doc.article_tokens().cloned().collect()
}

/// Every token the toy model may see: articles, summaries and negatives.
pub fn corpus_vocab(docs: &[crate::corpus::Document], samples: &[crate::lfn::NegativeSample]) -> Vocab {
    let summaries = docs
        .iter()
        .flat_map(|d| d.summary_sentences.iter().flat_map(|s| s.tokens.iter()));
    let negatives = samples.iter().flat_map(|s| s.tokens.iter());
    Vocab::build(
        docs.iter()
            .flat_map(|d| d.article_tokens())
            .chain(summaries)
            .chain(negatives),
    )
}

/// One example per summary sentence; a sentence's negatives are the samples
/// sharing its `(doc_id, sentence_idx)`.
pub fn build_examples(
    docs: &[crate::corpus::Document],
    samples: &[crate::lfn::NegativeSample],
    vocab: &Vocab,
) -> Vec<Example> {
    let mut by_key: HashMap<(&str, usize), Vec<NegativeTarget>> = HashMap::new();
    for s in samples {
        by_key
            .entry((&s.doc_id, s.sentence_idx))
            .or_default()
            .push(NegativeTarget {
                tokens: vocab.ids(&s.tokens),
                replaced: s.replaced_positions.clone(),
            });
    }
    let mut out = Vec::new();
    for doc in docs {
        let article = vocab.ids(&article_input(doc));
        for (i, sent) in doc.summary_sentences.iter().enumerate() {
            out.push(Example {
                id: format!("{}#{i}", doc.id),
                article: article.clone(),
                gold: vocab.ids(&sent.tokens),
                negatives: by_key.remove(&(doc.id.as_str(), i)).unwrap_or_default(),
            });
        }
    }
    out
}
