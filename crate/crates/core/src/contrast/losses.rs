//! Scalar objectives and their gradients with respect to their direct inputs
//! (pooled vectors, per-position log-probabilities, decoder logits).

use serde::{Deserialize, Serialize};

use super::model::{dot, log_sum_exp, softmax};
use super::ContrastError;

/// Which terms make up the contrastive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenominatorMode {
    /// Positive plus negatives (InfoNCE).
    #[default]
    Standard,
    /// Negatives only. Unbounded below; kept for fidelity checks.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecMode {
    /// Hinge over the replaced positions only.
    #[default]
    Pm,
    /// Hinge over every position.
    Vanilla,
}

/// Contrastive loss on similarity scores `s⁺` and `s⁻ᵢ`, with the gradient
/// with respect to each score: `(loss, dL/ds⁺, dL/ds⁻)`.
pub fn coenc_scores(pos: f64, negs: &[f64], gamma: f64, mode: DenominatorMode) -> (f64, f64, Vec<f64>) {
    let mut logits: Vec<f64> = Vec::with_capacity(negs.len() + 1);
    if mode == DenominatorMode::Standard {
        logits.push(pos / gamma);
    }
    logits.extend(negs.iter().map(|s| s / gamma));
    let lse = log_sum_exp(&logits);
    let loss = lse - pos / gamma;
    let w = softmax(&logits);
    let (d_pos, d_negs) = match mode {
        DenominatorMode::Standard => ((w[0] - 1.0) / gamma, w[1..].iter().map(|p| p / gamma).collect()),
        DenominatorMode::Literal => (-1.0 / gamma, w.iter().map(|p| p / gamma).collect()),
    };
    (loss, d_pos, d_negs)
}

/// Gradients of [`coenc`] with respect to its three kinds of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CoencGrads {
    pub d_source: Vec<f64>,
    pub d_pos: Vec<f64>,
    pub d_negs: Vec<Vec<f64>>,
}

/// Contrastive encoder loss with dot-product similarity.
///
/// # Panics
/// Panics if `negs` is empty or dimensions disagree.
pub fn coenc(source: &[f64], pos: &[f64], negs: &[Vec<f64>], gamma: f64, mode: DenominatorMode) -> (f64, CoencGrads) {
    assert!(!negs.is_empty(), "at least one negative is required");
    assert!(pos.len() == source.len() && negs.iter().all(|n| n.len() == source.len()));
    let s_pos = dot(source, pos);
    let s_negs: Vec<f64> = negs.iter().map(|n| dot(source, n)).collect();
    let (loss, g_pos, g_negs) = coenc_scores(s_pos, &s_negs, gamma, mode);
    let mut d_source: Vec<f64> = pos.iter().map(|p| g_pos * p).collect();
    for (g, n) in g_negs.iter().zip(negs) {
        for (d, x) in d_source.iter_mut().zip(n) {
            *d += g * x;
        }
    }
    let grads = CoencGrads {
        d_source,
        d_pos: source.iter().map(|x| g_pos * x).collect(),
        d_negs: g_negs.iter().map(|g| source.iter().map(|x| g * x).collect()).collect(),
    };
    (loss, grads)
}

/// Loss value only; see [`coenc`].
pub fn loss_coenc(source: &[f64], pos: &[f64], negs: &[Vec<f64>], gamma: f64, mode: DenominatorMode) -> f64 {
    coenc(source, pos, negs, gamma, mode).0
}

/// Hinge value plus gradients with respect to the gold and negative
/// per-position log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecValue {
    pub loss: f64,
    pub d_gold: Vec<f64>,
    pub d_neg: Vec<f64>,
}

fn hinge(gold: &[f64], neg: &[f64], positions: &[usize], eta: f64) -> CodecValue {
    let n = positions.len() as f64;
    let margin: f64 = positions.iter().map(|&i| neg[i] - gold[i]).sum::<f64>() / n;
    let loss = (margin + eta).max(0.0);
    let mut d_gold = vec![0.0; gold.len()];
    let mut d_neg = vec![0.0; neg.len()];
    if margin + eta > 0.0 {
        for &i in positions {
            d_gold[i] -= 1.0 / n;
            d_neg[i] += 1.0 / n;
        }
    }
    CodecValue { loss, d_gold, d_neg }
}

/// Position-masked max-margin loss over the replaced positions `r`.
pub fn codec_pm(gold: &[f64], neg: &[f64], r: &[usize], eta: f64) -> Result<CodecValue, ContrastError> {
    if gold.len() != neg.len() {
        return Err(ContrastError::LengthMismatch {
            gold: gold.len(),
            negative: neg.len(),
        });
    }
    if r.is_empty() {
        return Err(ContrastError::InvalidMask("empty position set".into()));
    }
    if let Some(&bad) = r.iter().find(|&&i| i >= gold.len()) {
        return Err(ContrastError::InvalidMask(format!(
            "position {bad} beyond length {}",
            gold.len()
        )));
    }
    Ok(hinge(gold, neg, r, eta))
}

/// Max-margin loss averaged over all positions.
pub fn codec_vanilla(gold: &[f64], neg: &[f64], eta: f64) -> Result<CodecValue, ContrastError> {
    let all: Vec<usize> = (0..gold.len()).collect();
    codec_pm(gold, neg, &all, eta)
}

pub fn loss_codec_pm(gold: &[f64], neg: &[f64], r: &[usize], eta: f64) -> Result<f64, ContrastError> {
    codec_pm(gold, neg, r, eta).map(|v| v.loss)
}

pub fn loss_codec_vanilla(gold: &[f64], neg: &[f64], eta: f64) -> Result<f64, ContrastError> {
    codec_vanilla(gold, neg, eta).map(|v| v.loss)
}

/// Per-position log-probabilities of `target` under rows of `logits`.
pub fn logprobs_from_logits(logits: &[Vec<f64>], target: &[usize]) -> Vec<f64> {
    logits.iter().zip(target).map(|(z, &y)| z[y] - log_sum_exp(z)).collect()
}

/// Chains per-position log-probability gradients through log-softmax.
pub fn logit_grads(logits: &[Vec<f64>], target: &[usize], d_lp: &[f64]) -> Vec<Vec<f64>> {
    logits
        .iter()
        .zip(target)
        .zip(d_lp)
        .map(|((z, &y), &g)| {
            if g == 0.0 {
                return vec![0.0; z.len()];
            }
            let mut d: Vec<f64> = softmax(z).into_iter().map(|p| -g * p).collect();
            d[y] += g;
            d
        })
        .collect()
}

/// Position-masked loss as a function of raw decoder logits, with its
/// logit gradients `(loss, d_gold_logits, d_neg_logits)`.
pub fn codec_pm_logits(
    gold_logits: &[Vec<f64>],
    gold: &[usize],
    neg_logits: &[Vec<f64>],
    neg: &[usize],
    r: &[usize],
    eta: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), ContrastError> {
    let g = logprobs_from_logits(gold_logits, gold);
    let n = logprobs_from_logits(neg_logits, neg);
    let v = codec_pm(&g, &n, r, eta)?;
    Ok((
        v.loss,
        logit_grads(gold_logits, gold, &v.d_gold),
        logit_grads(neg_logits, neg, &v.d_neg),
    ))
}

/// Combined objective. A zero weight drops its term entirely, so the
/// total then equals `ce` bit for bit.
pub fn combine(ce: f64, enc: f64, dec: f64, lambda_enc: f64, lambda_dec: f64) -> f64 {
    let mut total = ce;
    if lambda_enc != 0.0 {
        total += lambda_enc * enc;
    }
    if lambda_dec != 0.0 {
        total += lambda_dec * dec;
    }
    total
}

/// Gold and negative log-probabilities at one replaced position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub gold_lp: f64,
    pub neg_lp: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub enc: f64,
    pub dec: f64,
    pub total: f64,
    pub positions: Vec<PositionRecord>,
}

impl LossBreakdown {
    pub fn new(ce: f64, enc: f64, dec: f64, lambda_enc: f64, lambda_dec: f64) -> Self {
        Self {
            ce,
            enc,
            dec,
            total: combine(ce, enc, dec, lambda_enc, lambda_dec),
            positions: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_scores() {
        let (std, _, _) = coenc_scores(0.3, &[0.3], 0.1, DenominatorMode::Standard);
        assert!((std - 2f64.ln()).abs() < 1e-12);
        let (lit, _, _) = coenc_scores(0.3, &[0.3], 0.1, DenominatorMode::Literal);
        assert!(lit.abs() < 1e-12);
        let (lit, _, _) = coenc_scores(1.0, &[0.0], 0.1, DenominatorMode::Literal);
        assert!((lit + 10.0).abs() < 1e-12);
    }

    #[test]
    fn worked_margins() {
        let gold = [0.0, 0.0, -1.0];
        let neg = [0.0, 0.0, -2.0];
        assert_eq!(loss_codec_pm(&gold, &neg, &[2], 0.5).unwrap(), 0.0);
        let gold = [0.0, 0.0, -3.0];
        let neg = [0.0, 0.0, -1.0];
        assert_eq!(loss_codec_pm(&gold, &neg, &[2], 0.5).unwrap(), 2.5);
        assert!(matches!(
            loss_codec_pm(&gold, &neg, &[], 0.5),
            Err(ContrastError::InvalidMask(_))
        ));
    }

    #[test]
    fn vanilla_dilutes_a_single_difference() {
        let gold = vec![-1.0; 10];
        let mut neg = gold.clone();
        neg[4] = 0.0;
        let pm = loss_codec_pm(&gold, &neg, &[4], 0.0).unwrap();
        let van = loss_codec_vanilla(&gold, &neg, 0.0).unwrap();
        assert!((pm - 10.0 * van).abs() < 1e-12);
    }

    #[test]
    fn flat_hinge_has_no_gradient() {
        let v = codec_pm(&[-1.0, -1.0], &[-5.0, -5.0], &[0, 1], 1.0).unwrap();
        assert_eq!(v.loss, 0.0);
        assert!(v.d_gold.iter().chain(&v.d_neg).all(|&g| g == 0.0));
    }

    #[test]
    fn zero_weights_reduce_to_ce() {
        let ce = 0.123_456_789;
        assert_eq!(combine(ce, 5.0, 7.0, 0.0, 0.0).to_bits(), ce.to_bits());
        assert_eq!(combine(1.0, 0.5, 0.25, 2.0, 2.0), 1.0 + 2.0 * 0.5 + 2.0 * 0.25);
    }
}
