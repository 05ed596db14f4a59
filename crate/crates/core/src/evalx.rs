//! Diagnostic reports over negatives and trained toy models.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrast::{article_input, fact_score, ContrastError, ToySeq2Seq, TrainLog, Vocab};
use crate::corpus::{Alignment, Document};
use crate::embed::EmbeddingTable;
use crate::lfn::{
    article_vocab, replace_words, sample_seed, select_fragment, Diagnostic, LfnConfig, LfnError, NegativeSample,
};
use crate::lm::{LmError, Scorer};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to report")]
    EmptyReport,
    #[error("no context known for {0}#{1}")]
    MissingContext(String, usize),
    #[error("ratios must be strictly increasing within [0, 1]")]
    InvalidRatios,
    #[error(transparent)]
    Scorer(#[from] LmError),
    #[error(transparent)]
    Contrast(#[from] ContrastError),
}

pub const HISTOGRAM_BIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegQualityReport {
    pub n_samples: usize,
    /// Mean per-token log-probability of the context given the gold fragment.
    pub mean_gold_score: f64,
    /// Same, given the negative fragment.
    pub mean_negative_score: f64,
    pub lower_fraction: f64,
    pub ties: usize,
    pub tie_convention: String,
    pub replaced_fraction_histogram: Vec<HistogramBin>,
    pub failures: BTreeMap<String, usize>,
}

fn histogram(values: impl Iterator<Item = f64>) -> Vec<HistogramBin> {
    let n_bins = (1.0 / HISTOGRAM_BIN).round() as usize;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            lo: i as f64 * HISTOGRAM_BIN,
            hi: (i + 1) as f64 * HISTOGRAM_BIN,
            count: 0,
        })
        .collect();
    for v in values {
        let i = ((v / HISTOGRAM_BIN).floor().max(0.0) as usize).min(n_bins - 1);
        bins[i].count += 1;
    }
    bins
}

/// Per-token log-probability of `context` given `fragment`.
fn context_score<S: Scorer + ?Sized>(scorer: &mut S, context: &[String], fragment: &[String]) -> Result<f64, LmError> {
    Ok(scorer.conditional_total(context, fragment)? / context.len().max(1) as f64)
}

/// Compares how well the gold and the negative fragment predict each
/// sample's ranking context.
pub fn report_negative_quality<S: Scorer + ?Sized>(
    samples: &[NegativeSample],
    scorer: &mut S,
    docs: &[(Document, Vec<Alignment>)],
    diagnostics: &[Diagnostic],
) -> Result<NegQualityReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let contexts: HashMap<(&str, usize), &[String]> = docs
        .iter()
        .flat_map(|(d, aligns)| {
            aligns
                .iter()
                .map(move |a| ((d.id.as_str(), a.summary_idx), a.context(d).tokens.as_slice()))
        })
        .collect();
    let (mut gold_sum, mut neg_sum, mut lower, mut ties) = (0.0, 0.0, 0.0, 0);
    for s in samples {
        let ctx = contexts
            .get(&(s.doc_id.as_str(), s.sentence_idx))
            .ok_or_else(|| EvalError::MissingContext(s.doc_id.clone(), s.sentence_idx))?;
        let g = context_score(scorer, ctx, &s.fragment.tokens)?;
        let n = context_score(scorer, ctx, &s.negative_fragment())?;
        gold_sum += g;
        neg_sum += n;
        if n < g {
            lower += 1.0;
        } else if n == g {
            lower += 0.5;
            ties += 1;
        }
    }
    let count = samples.len() as f64;
    let mut failures = BTreeMap::new();
    for d in diagnostics {
        *failures.entry(d.reason.clone()).or_insert(0) += 1;
    }
    Ok(NegQualityReport {
        n_samples: samples.len(),
        mean_gold_score: gold_sum / count,
        mean_negative_score: neg_sum / count,
        lower_fraction: lower / count,
        ties,
        tie_convention: "a tie counts as half a lower score".into(),
        replaced_fraction_histogram: histogram(samples.iter().map(NegativeSample::replaced_fraction)),
        failures,
    })
}

/// A summary sentence with its factual fragment, ready for re-perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepItem {
    pub doc_id: String,
    pub sentence_idx: usize,
    pub article: Vec<String>,
    pub gold: Vec<String>,
    pub fragment: Vec<String>,
    pub vocab: BTreeSet<String>,
}

/// Selects each sentence's fragment once; sentences that cannot be
/// compressed are reported as diagnostics.
pub fn sweep_items<S: Scorer + ?Sized>(
    docs: &[(Document, Vec<Alignment>)],
    scorer: &mut S,
    config: &LfnConfig,
) -> Result<(Vec<SweepItem>, Vec<Diagnostic>), EvalError> {
    let mut items = Vec::new();
    let mut diags = Vec::new();
    for (doc, aligns) in docs {
        let vocab = article_vocab(doc);
        let article = article_input(doc);
        for a in aligns {
            let gold = &doc.summary_sentences[a.summary_idx].tokens;
            match select_fragment(gold, &a.context(doc).tokens, scorer, config) {
                Ok(c) => items.push(SweepItem {
                    doc_id: doc.id.clone(),
                    sentence_idx: a.summary_idx,
                    article: article.clone(),
                    gold: gold.clone(),
                    fragment: c.tokens,
                    vocab: vocab.clone(),
                }),
                Err(LfnError::Scorer(e)) => return Err(e.into()),
                Err(e) => diags.push(Diagnostic {
                    doc_id: doc.id.clone(),
                    sentence_idx: a.summary_idx,
                    reason: e.reason().into(),
                    detail: e.to_string(),
                }),
            }
        }
    }
    Ok((items, diags))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSweepReport {
    pub ratios: Vec<f64>,
    pub mean_scores: Vec<f64>,
    pub n_items: usize,
    /// Rank correlation between ratio and mean score; absent when either
    /// side is constant.
    pub spearman: Option<f64>,
}

/// Mean fact score of perturbed summaries at each replacement ratio.
///
/// Ratio 0 scores the gold sentence. An item whose perturbation fails at
/// some ratio contributes its gold score there.
pub fn ratio_sweep(
    model: &ToySeq2Seq,
    vocab: &Vocab,
    items: &[SweepItem],
    table: &EmbeddingTable,
    ratios: &[f64],
    config: &LfnConfig,
) -> Result<RatioSweepReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let increasing = ratios.windows(2).all(|w| w[0] < w[1]);
    if ratios.is_empty() || !increasing || ratios[0] < 0.0 || ratios[ratios.len() - 1] > 1.0 {
        return Err(EvalError::InvalidRatios);
    }
    let mut means = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let mut sum = 0.0;
        for item in items {
            let article = vocab.ids(&item.article);
            let mut summary = item.gold.clone();
            if ratio > 0.0 {
                let seed = sample_seed(config.seed, &item.doc_id, item.sentence_idx, 0);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                match replace_words(
                    &item.gold,
                    &item.fragment,
                    &item.vocab,
                    table,
                    ratio,
                    config.replace_topk,
                    &mut rng,
                ) {
                    Ok(p) => summary = p.tokens,
                    Err(e) => log::debug!("{}#{} at ratio {ratio}: {e}", item.doc_id, item.sentence_idx),
                }
            }
            sum += fact_score(model, &article, &vocab.ids(&summary))?;
        }
        means.push(sum / items.len() as f64);
    }
    Ok(RatioSweepReport {
        spearman: spearman(ratios, &means),
        ratios: ratios.to_vec(),
        mean_scores: means,
        n_items: items.len(),
    })
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub epoch: u64,
    pub mean_gap: f64,
    pub n: usize,
}

/// Mean gold-minus-negative log-probability at replaced positions, per epoch.
pub fn margin_stats(log: &TrainLog) -> Vec<MarginRow> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for p in &log.positions {
        let e = acc.entry(p.epoch).or_insert((0.0, 0));
        e.0 += p.gold_lp - p.neg_lp;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(epoch, (sum, n))| MarginRow {
            epoch,
            mean_gap: sum / n as f64,
            n,
        })
        .collect()
}

pub fn write_margin_csv<W: Write>(mut w: W, rows: &[MarginRow]) -> io::Result<()> {
    writeln!(w, "epoch,mean_gap,n")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.epoch, r.mean_gap, r.n)?;
    }
    Ok(())
}
