use super::losses::{codec_pm, coenc, combine, logit_grads, CodecMode, LossBreakdown, PositionRecord};
use super::model::{dot, Encoded, Grads, ToySeq2Seq};
use super::{ContrastError, Example, TrainConfig};

/// Multipliers applied to each component when forming the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub ce: f64,
    pub enc: f64,
    pub dec: f64,
}

impl Weights {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            ce: 1.0,
            enc: cfg.lambda_enc,
            dec: cfg.lambda_dec,
        }
    }

    pub fn only_ce() -> Self {
        Self {
            ce: 1.0,
            enc: 0.0,
            dec: 0.0,
        }
    }

    pub fn only_enc() -> Self {
        Self {
            ce: 0.0,
            enc: 1.0,
            dec: 0.0,
        }
    }

    pub fn only_dec() -> Self {
        Self {
            ce: 0.0,
            enc: 0.0,
            dec: 1.0,
        }
    }

    /// Scalar being differentiated.
    pub fn objective(&self, b: &LossBreakdown) -> f64 {
        let ce = if self.ce == 1.0 { b.ce } else { self.ce * b.ce };
        combine(ce, b.enc, b.dec, self.enc, self.dec)
    }
}

/// Negative mean log-probability of `target` given `article`.
pub fn loss_ce(model: &ToySeq2Seq, article: &[usize], target: &[usize]) -> f64 {
    let enc = model.encode(article);
    let lp = model.decode(&enc, target).token_logprobs();
    -lp.iter().sum::<f64>() / lp.len() as f64
}

fn spread(enc: &Encoded, d_pooled: &[f64], scale: f64) -> Vec<Vec<f64>> {
    let n = enc.len() as f64;
    vec![d_pooled.iter().map(|g| scale * g / n).collect(); enc.len()]
}

/// Loss components and the gradient of `weights.objective` for one example.
///
/// Component values are always computed when negatives are present; a
/// component with zero weight contributes no gradient.
pub fn evaluate(
    model: &ToySeq2Seq,
    ex: &Example,
    cfg: &TrainConfig,
    weights: Weights,
) -> Result<(LossBreakdown, Grads), ContrastError> {
    let mut grads = Grads::zeros_like(model);
    let enc_a = model.encode(&ex.article);
    let dec_g = model.decode(&enc_a, &ex.gold);
    let gold_lp = dec_g.token_logprobs();
    let n = gold_lp.len() as f64;
    let ce = -gold_lp.iter().sum::<f64>() / n;
    let mut d_gold_lp = vec![-weights.ce / n; gold_lp.len()];
    let mut d_states_a = vec![vec![0.0; model.config.embed_dim]; enc_a.len()];

    let negs: Vec<_> = ex.negatives.iter().take(cfg.k.max(1)).collect();
    let mut enc_loss = 0.0;
    let mut dec_loss = 0.0;
    let mut positions = Vec::new();
    if !negs.is_empty() {
        let enc_g = model.encode(&ex.gold);
        let enc_n: Vec<Encoded> = negs.iter().map(|t| model.encode(&t.tokens)).collect();
        let pooled_n: Vec<Vec<f64>> = enc_n.iter().map(Encoded::pooled).collect();
        let (l, cg) = coenc(
            &enc_a.pooled(),
            &enc_g.pooled(),
            &pooled_n,
            cfg.gamma,
            cfg.denominator_mode,
        );
        enc_loss = l;
        if weights.enc != 0.0 {
            for (d, g) in d_states_a.iter_mut().zip(spread(&enc_a, &cg.d_source, weights.enc)) {
                d.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            model.backward_encoder(&enc_g, &spread(&enc_g, &cg.d_pos, weights.enc), &mut grads);
            for (e, d) in enc_n.iter().zip(&cg.d_negs) {
                model.backward_encoder(e, &spread(e, d, weights.enc), &mut grads);
            }
        }

        let k = negs.len() as f64;
        for t in &negs {
            let dec_n = model.decode(&enc_a, &t.tokens);
            let neg_lp = dec_n.token_logprobs();
            let r: Vec<usize> = match cfg.codec_mode {
                CodecMode::Pm => t.replaced.clone(),
                CodecMode::Vanilla => (0..gold_lp.len()).collect(),
            };
            let v = codec_pm(&gold_lp, &neg_lp, &r, cfg.eta)?;
            dec_loss += v.loss / k;
            positions.extend(t.replaced.iter().map(|&i| PositionRecord {
                gold_lp: gold_lp[i],
                neg_lp: neg_lp[i],
            }));
            if weights.dec != 0.0 && v.loss > 0.0 {
                let scale = weights.dec / k;
                for (d, g) in d_gold_lp.iter_mut().zip(&v.d_gold) {
                    *d += scale * g;
                }
                let d_neg: Vec<f64> = v.d_neg.iter().map(|g| scale * g).collect();
                let d_logits = logit_grads(&dec_n.logits, &t.tokens, &d_neg);
                model.backward_decoder(&enc_a, &dec_n, &d_logits, &mut grads, &mut d_states_a);
            }
        }
    }

    let d_logits = logit_grads(&dec_g.logits, &ex.gold, &d_gold_lp);
    model.backward_decoder(&enc_a, &dec_g, &d_logits, &mut grads, &mut d_states_a);
    model.backward_encoder(&enc_a, &d_states_a, &mut grads);

    let mut b = LossBreakdown::new(ce, enc_loss, dec_loss, cfg.lambda_enc, cfg.lambda_dec);
    b.positions = positions;
    Ok((b, grads))
}

/// Mean breakdown and mean gradient over a batch.
pub fn batch_loss(
    model: &ToySeq2Seq,
    batch: &[&Example],
    cfg: &TrainConfig,
    weights: Weights,
) -> Result<(LossBreakdown, Grads), ContrastError> {
    if batch.is_empty() {
        return Err(ContrastError::EmptyDataset);
    }
    let mut grads = Grads::zeros_like(model);
    let (mut ce, mut enc, mut dec) = (0.0, 0.0, 0.0);
    let mut positions = Vec::new();
    for ex in batch {
        let (b, g) = evaluate(model, ex, cfg, weights)?;
        ce += b.ce;
        enc += b.enc;
        dec += b.dec;
        positions.extend(b.positions);
        grads.add(&g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    let mut b = LossBreakdown::new(ce / n, enc / n, dec / n, cfg.lambda_enc, cfg.lambda_dec);
    b.positions = positions;
    Ok((b, grads))
}

/// Cosine similarity of pooled encodings.
pub fn fact_score(model: &ToySeq2Seq, article: &[usize], summary: &[usize]) -> Result<f64, ContrastError> {
    let a = model.encode_pooled(article);
    let s = model.encode_pooled(summary);
    let (na, ns) = (dot(&a, &a).sqrt(), dot(&s, &s).sqrt());
    if na == 0.0 || ns == 0.0 {
        return Err(ContrastError::ZeroVector);
    }
    Ok((dot(&a, &s) / (na * ns)).clamp(-1.0, 1.0))
}

/// Mean gold-minus-negative log-probability over the first negative's
/// replaced positions; `None` without a usable negative.
pub fn item_gap(model: &ToySeq2Seq, ex: &Example) -> Option<f64> {
    let t = ex.negatives.first().filter(|t| !t.replaced.is_empty())?;
    let enc = model.encode(&ex.article);
    let g = model.decode(&enc, &ex.gold).token_logprobs();
    let n = model.decode(&enc, &t.tokens).token_logprobs();
    Some(t.replaced.iter().map(|&i| g[i] - n[i]).sum::<f64>() / t.replaced.len() as f64)
}

/// Fraction of gold positions where the teacher-forced argmax is correct.
pub fn teacher_forced_accuracy(model: &ToySeq2Seq, pairs: &[(Vec<usize>, Vec<usize>)]) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for (src, tgt) in pairs {
        let enc = model.encode(src);
        let dec = model.decode(&enc, tgt);
        for (z, &y) in dec.logits.iter().zip(tgt) {
            let arg = z
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            hit += usize::from(arg == y);
            total += 1;
        }
    }
    hit as f64 / total.max(1) as f64
}
