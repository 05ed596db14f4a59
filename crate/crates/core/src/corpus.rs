//! Corpus ingestion: tokenization, sentence splitting, ROUGE and oracle alignment.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("corpus i/o: {0}")]
    Io(#[from] io::Error),
}

/// A tokenized sentence together with the text it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub raw: String,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Builds a sequence from already-tokenized words; `raw` is their space join.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        let raw = tokens.join(" ");
        Self { tokens, raw }
    }
}

/// Lowercases `text`, splits on whitespace and peels every character that is
/// neither alphanumeric nor whitespace off into its own token.
pub fn tokenize(text: &str) -> Result<TokenSeq, CorpusError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(CorpusError::EmptyText);
    }
    let lowered = trimmed.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lowered.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if c.is_alphanumeric() {
                word.push(c);
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    if tokens.is_empty() {
        return Err(CorpusError::EmptyText);
    }
    Ok(TokenSeq {
        tokens,
        raw: trimmed.to_string(),
    })
}

/// True for tokens made only of non-alphanumeric characters.
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| !c.is_alphanumeric())
}

/// Splits running text into sentences at `.`, `!` or `?` followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                sentences.push(s.to_string());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        sentences.push(s.to_string());
    }
    sentences
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-N F1 over clipped n-gram counts.
pub fn rouge_n(candidate: &TokenSeq, reference: &TokenSeq, n: usize) -> Result<f64, CorpusError> {
    if n == 0 {
        return Err(CorpusError::InvalidOrder);
    }
    Ok(rouge_n_tokens(&candidate.tokens, &reference.tokens, n))
}

pub(crate) fn rouge_n_tokens(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap: usize = cand
        .iter()
        .map(|(gram, &c)| refs.get(gram).map_or(0, |&r| c.min(r)))
        .sum();
    let cand_total = candidate.len().saturating_sub(n - 1);
    let ref_total = reference.len().saturating_sub(n - 1);
    f1(overlap, cand_total, ref_total)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l(candidate: &TokenSeq, reference: &TokenSeq) -> f64 {
    let lcs = lcs_len(&candidate.tokens, &reference.tokens);
    f1(lcs, candidate.len(), reference.len())
}

/// Which article sentence a summary sentence was drawn from, and the sentence
/// that follows it (the ranking context).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub summary_idx: usize,
    pub oracle_idx: usize,
    pub context_idx: Option<usize>,
    pub fallback_used: bool,
}

impl Alignment {
    /// Context sentence; the oracle itself when it is the last article sentence.
    pub fn context<'a>(&self, doc: &'a Document) -> &'a TokenSeq {
        &doc.article_sentences[self.context_idx.unwrap_or(self.oracle_idx)]
    }
}

/// Oracle score of one article sentence: mean of ROUGE-1 and ROUGE-2 F1.
pub fn oracle_score(summary: &TokenSeq, sentence: &TokenSeq) -> f64 {
    0.5 * (rouge_n_tokens(&sentence.tokens, &summary.tokens, 1) + rouge_n_tokens(&sentence.tokens, &summary.tokens, 2))
}

/// Picks the article sentence with the highest oracle score (first wins ties).
///
/// # Panics
/// Panics if `article` is empty; documents always carry at least one sentence.
pub fn select_oracle(summary_idx: usize, summary: &TokenSeq, article: &[TokenSeq]) -> Alignment {
    assert!(!article.is_empty(), "article has no sentences");
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, sentence) in article.iter().enumerate() {
        let s = oracle_score(summary, sentence);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    let context_idx = (best + 1 < article.len()).then_some(best + 1);
    Alignment {
        summary_idx,
        oracle_idx: best,
        context_idx,
        fallback_used: context_idx.is_none(),
    }
}

/// One article/summary pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub article_sentences: Vec<TokenSeq>,
    pub summary_sentences: Vec<TokenSeq>,
}

impl Document {
    /// Builds a document from raw sentence strings, tokenizing each.
    pub fn from_sentences<A, S>(id: &str, article: &[A], summary: &[S]) -> Result<Self, CorpusError>
    where
        A: AsRef<str>,
        S: AsRef<str>,
    {
        let article_sentences = article
            .iter()
            .map(|s| tokenize(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        let summary_sentences = summary
            .iter()
            .map(|s| tokenize(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            id: id.to_string(),
            article_sentences,
            summary_sentences,
        })
    }

    pub fn align(&self) -> Vec<Alignment> {
        self.summary_sentences
            .iter()
            .enumerate()
            .map(|(i, s)| select_oracle(i, s, &self.article_sentences))
            .collect()
    }

    pub fn article_tokens(&self) -> impl Iterator<Item = &String> {
        self.article_sentences.iter().flat_map(|s| s.tokens.iter())
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TextField {
    Text(String),
    Sentences(Vec<String>),
}

impl TextField {
    fn sentences(self) -> Vec<String> {
        match self {
            TextField::Text(t) => split_sentences(&t),
            TextField::Sentences(v) => v.into_iter().filter(|s| !s.trim().is_empty()).collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<String>,
    article: Option<TextField>,
    summary: Option<TextField>,
}

#[derive(Debug, Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    article: Vec<&'a str>,
    summary: Vec<&'a str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// Abort on the first malformed line.
    Strict,
    /// Skip malformed lines, reporting them in [`LoadedCorpus::issues`].
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadIssue {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub documents: Vec<Document>,
    pub issues: Vec<LoadIssue>,
}

fn parse_record(line: &str, line_no: usize) -> Result<Document, CorpusError> {
    let schema = |reason: String| CorpusError::Schema { line: line_no, reason };
    let rec: RawRecord = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
    let id = rec
        .id
        .filter(|s| !s.is_empty())
        .ok_or_else(|| schema("missing field `id`".into()))?;
    let article = rec.article.ok_or_else(|| schema("missing field `article`".into()))?;
    let summary = rec.summary.ok_or_else(|| schema("missing field `summary`".into()))?;
    let tokenize_all = |sentences: Vec<String>, field: &str| {
        let seqs: Vec<TokenSeq> = sentences.iter().filter_map(|s| tokenize(s).ok()).collect();
        if seqs.is_empty() {
            Err(schema(format!("`{field}` has no sentences")))
        } else {
            Ok(seqs)
        }
    };
    Ok(Document {
        id,
        article_sentences: tokenize_all(article.sentences(), "article")?,
        summary_sentences: tokenize_all(summary.sentences(), "summary")?,
    })
}

/// Reads a JSON-lines corpus. Blank lines are ignored; line numbers are 1-based.
pub fn read_corpus<R: BufRead>(reader: R, mode: LoadMode) -> Result<LoadedCorpus, CorpusError> {
    let mut out = LoadedCorpus::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_record(&line, line_no).and_then(|doc| {
            if seen.insert(doc.id.clone()) {
                Ok(doc)
            } else {
                Err(CorpusError::Schema {
                    line: line_no,
                    reason: format!("duplicate id `{}`", doc.id),
                })
            }
        });
        match parsed {
            Ok(doc) => out.documents.push(doc),
            Err(CorpusError::Schema { line, reason }) if mode == LoadMode::Lenient => {
                log::warn!("skipping corpus line {line}: {reason}");
                out.issues.push(LoadIssue { line, reason });
            }
            Err(e) => return Err(e),
        }
    }
    if out.documents.is_empty() && out.issues.is_empty() {
        log::warn!("corpus is empty");
    }
    Ok(out)
}

pub fn load_corpus(path: &Path, mode: LoadMode) -> Result<LoadedCorpus, CorpusError> {
    let file = File::open(path)?;
    read_corpus(BufReader::new(file), mode)
}

/// Writes documents as JSON lines with pre-split sentence arrays, so that
/// reading them back reproduces the same sentences.
pub fn write_corpus<W: Write>(mut w: W, docs: &[Document]) -> io::Result<()> {
    for doc in docs {
        let rec = OutRecord {
            id: &doc.id,
            article: doc.article_sentences.iter().map(|s| s.raw.as_str()).collect(),
            summary: doc.summary_sentences.iter().map(|s| s.raw.as_str()).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub id: String,
    pub summary_idx: usize,
    pub oracle_idx: usize,
    pub context_idx: Option<usize>,
    pub fallback_used: bool,
}

pub fn write_alignments<W: Write>(mut w: W, docs: &[Document]) -> io::Result<()> {
    for doc in docs {
        for a in doc.align() {
            let rec = AlignmentRecord {
                id: doc.id.clone(),
                summary_idx: a.summary_idx,
                oracle_idx: a.oracle_idx,
                context_idx: a.context_idx,
                fallback_used: a.fallback_used,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(words: &[&str]) -> TokenSeq {
        TokenSeq::from_tokens(words)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The cat sat.").unwrap().tokens, ["the", "cat", "sat", "."]);
        assert_eq!(tokenize("A").unwrap().tokens, ["a"]);
        assert_eq!(tokenize("Hello, world").unwrap().tokens, ["hello", ",", "world"]);
        assert!(matches!(tokenize("   \t "), Err(CorpusError::EmptyText)));
    }

    #[test]
    fn rouge_examples() {
        let a = seq(&["the", "cat", "sat"]);
        assert_eq!(rouge_n(&a, &a, 1).unwrap(), 1.0);
        assert_eq!(rouge_n(&a, &seq(&["dog", "ran"]), 1).unwrap(), 0.0);
        let b = seq(&["the", "cat", "ran"]);
        assert!((rouge_n(&a, &b, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(rouge_n(&a, &b, 0), Err(CorpusError::InvalidOrder)));
        // no bigrams in a single-token sequence
        assert_eq!(rouge_n(&seq(&["the"]), &a, 2).unwrap(), 0.0);
    }

    #[test]
    fn rouge_l_examples() {
        let a = seq(&["a", "b", "c", "d"]);
        assert_eq!(rouge_l(&a, &a), 1.0);
        assert_eq!(rouge_l(&a, &seq(&["x", "y"])), 0.0);
        let b = seq(&["a", "c", "d"]);
        assert!((rouge_l(&a, &b) - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_exact_match_and_boundaries() {
        let article = vec![
            seq(&["one", "two"]),
            seq(&["three", "four"]),
            seq(&["five", "six", "seven"]),
            seq(&["eight"]),
        ];
        let a = select_oracle(0, &seq(&["five", "six", "seven"]), &article);
        assert_eq!((a.oracle_idx, a.context_idx, a.fallback_used), (2, Some(3), false));

        let last = select_oracle(0, &seq(&["eight"]), &article);
        assert_eq!((last.oracle_idx, last.context_idx, last.fallback_used), (3, None, true));

        let tied = vec![seq(&["x", "y"]), seq(&["x", "y"])];
        assert_eq!(select_oracle(0, &seq(&["x", "y"]), &tied).oracle_idx, 0);
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(
            split_sentences("It rained. Then it stopped!  Why? No idea"),
            ["It rained.", "Then it stopped!", "Why?", "No idea"]
        );
        assert_eq!(split_sentences("v1.2 shipped."), ["v1.2 shipped."]);
    }

    #[test]
    fn lenient_loading_reports_bad_lines() {
        let data = concat!(
            r#"{"id":"a","article":"One. Two.","summary":"One."}"#,
            "\n",
            r#"{"id":"b","article":"One."}"#,
            "\n",
            r#"{"id":"c","article":["x y","z"],"summary":["x"]}"#,
            "\n"
        );
        let loaded = read_corpus(data.as_bytes(), LoadMode::Lenient).unwrap();
        assert_eq!(loaded.documents.len(), 2);
        assert_eq!(loaded.issues.len(), 1);
        assert_eq!(loaded.issues[0].line, 2);
        assert!(loaded.issues[0].reason.contains("summary"));

        let strict = read_corpus(data.as_bytes(), LoadMode::Strict);
        assert!(matches!(strict, Err(CorpusError::Schema { line: 2, .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let data = concat!(
            r#"{"id":"a","article":"One.","summary":"One."}"#,
            "\n",
            r#"{"id":"a","article":"Two.","summary":"Two."}"#
        );
        let err = read_corpus(data.as_bytes(), LoadMode::Strict).unwrap_err();
        assert!(matches!(err, CorpusError::Schema { line: 2, .. }));
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        let loaded = read_corpus(&b""[..], LoadMode::Strict).unwrap();
        assert!(loaded.documents.is_empty());
    }
}
