//! Language-model scoring behind a single interface: a native n-gram model or
//! an external process speaking the line-delimited JSON protocol.

mod external;
mod ngram;
pub mod protocol;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;

pub use external::ExternalScorer;
pub use ngram::{train_ngram, NGramConfig, NGramModel, Smoothing};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("language-model training corpus is empty")]
    EmptyCorpus,
    #[error("invalid language-model configuration: {0}")]
    InvalidConfig(String),
    #[error("failed to launch scorer `{command}`: {reason}")]
    Spawn { command: String, reason: String },
    #[error("scorer protocol violation: {reason} (line: {line:?})")]
    Protocol { reason: String, line: Option<String> },
    #[error("scorer reported an error for request {id}: {message}")]
    Remote { id: i64, message: String },
}

/// How a handle reports scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide by the number of scored word tokens.
    PerToken,
    #[default]
    Total,
}

impl Normalization {
    pub fn apply(self, total: f64, tokens: usize) -> f64 {
        match self {
            Normalization::PerToken => total / tokens.max(1) as f64,
            Normalization::Total => total,
        }
    }
}

/// Anything that yields natural-log probabilities for word sequences.
///
/// Methods take `&mut self` because the external backend is a single
/// request/response channel.
pub trait Scorer {
    /// Total log-probability of `text`.
    fn logprob_total(&mut self, text: &[String]) -> Result<f64, LmError>;

    /// Total log-probability of `target` with `condition` as its prefix.
    fn conditional_total(&mut self, target: &[String], condition: &[String]) -> Result<f64, LmError>;
}

impl Scorer for NGramModel {
    fn logprob_total(&mut self, text: &[String]) -> Result<f64, LmError> {
        Ok(self.logprob(text))
    }

    fn conditional_total(&mut self, target: &[String], condition: &[String]) -> Result<f64, LmError> {
        Ok(self.conditional_logprob(target, condition))
    }
}

/// A scorer handle with one active backend.
#[derive(Debug)]
pub enum ScorerHandle {
    Native {
        model: Arc<NGramModel>,
        normalization: Normalization,
    },
    External {
        scorer: ExternalScorer,
        normalization: Normalization,
    },
}

impl ScorerHandle {
    pub fn native(model: Arc<NGramModel>) -> Self {
        Self::Native {
            model,
            normalization: Normalization::Total,
        }
    }

    /// Launches `argv` and health-checks it with a ping.
    pub fn spawn_external(argv: &[String]) -> Result<Self, LmError> {
        Ok(Self::External {
            scorer: ExternalScorer::spawn(argv)?,
            normalization: Normalization::Total,
        })
    }

    pub fn with_normalization(mut self, n: Normalization) -> Self {
        match &mut self {
            Self::Native { normalization, .. } | Self::External { normalization, .. } => *normalization = n,
        }
        self
    }

    pub fn normalization(&self) -> Normalization {
        match self {
            Self::Native { normalization, .. } | Self::External { normalization, .. } => *normalization,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Native { .. } => "native-ngram",
            Self::External { .. } => "external",
        }
    }

    /// Log-probability of `text` under the handle's normalization.
    pub fn logprob(&mut self, text: &[String]) -> Result<f64, LmError> {
        let total = self.logprob_total(text)?;
        Ok(self.normalization().apply(total, text.len()))
    }

    /// Log-probability of `target` given `condition`, normalized over target tokens.
    pub fn conditional_logprob(&mut self, target: &[String], condition: &[String]) -> Result<f64, LmError> {
        let total = self.conditional_total(target, condition)?;
        Ok(self.normalization().apply(total, target.len()))
    }
}

impl Scorer for ScorerHandle {
    fn logprob_total(&mut self, text: &[String]) -> Result<f64, LmError> {
        match self {
            Self::Native { model, .. } => Ok(model.logprob(text)),
            Self::External { scorer, .. } => scorer.logprob_total(text),
        }
    }

    fn conditional_total(&mut self, target: &[String], condition: &[String]) -> Result<f64, LmError> {
        match self {
            Self::Native { model, .. } => Ok(model.conditional_logprob(target, condition)),
            Self::External { scorer, .. } => scorer.conditional_total(target, condition),
        }
    }
}

/// Recipe for creating scorer handles, one per pipeline worker.
#[derive(Debug, Clone)]
pub enum ScorerSpec {
    Native(Arc<NGramModel>),
    External(Vec<String>),
}

impl ScorerSpec {
    pub fn open(&self) -> Result<ScorerHandle, LmError> {
        match self {
            Self::Native(m) => Ok(ScorerHandle::native(Arc::clone(m))),
            Self::External(argv) => ScorerHandle::spawn_external(argv),
        }
    }
}

/// Text the native scorer is trained on: each article as one continuous
/// stream, so that sentence-to-sentence continuations are counted, plus every
/// article and summary sentence on its own, so sentence ends are too.
pub fn training_streams(docs: &[Document]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = docs.iter().map(|d| d.article_tokens().cloned().collect()).collect();
    for d in docs {
        let sentences = d.article_sentences.iter().chain(&d.summary_sentences);
        out.extend(sentences.map(|s| s.tokens.clone()));
    }
    out
}

/// Trains a native model on [`training_streams`].
pub fn train_on_documents(docs: &[Document], config: NGramConfig) -> Result<NGramModel, LmError> {
    let streams = training_streams(docs);
    NGramModel::train(streams.iter().map(Vec::as_slice), config)
}
