//! End-to-end self checks run by the `selftest` subcommand.
//!
//! Every check compares library output against something computed
//! independently here: a brute-force candidate enumerator, central finite
//! differences, hand-evaluated loss values and direct scorer calls.

use std::collections::BTreeSet;
use std::io::Cursor;

use crate::contrast::{
    codec_pm_logits, coenc_scores, evaluate, grad_check, loss_codec_pm, DenominatorMode, Example, LossBreakdown,
    ModelConfig, NegativeTarget, ToySeq2Seq, TrainConfig, Weights,
};
use crate::lfn::generate_candidates;
use crate::lm::protocol::{serve, Response};
use crate::lm::{NGramConfig, NGramModel, Scorer};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed,
            detail: detail.into(),
        }
    }
}

/// Every reachable kept-position set after up to `t` deletions of `1..=l`
/// contiguous tokens, each deletion applied to the already shortened sentence.
pub fn brute_force_kept_sets(n: usize, t: usize, l: usize) -> BTreeSet<Vec<usize>> {
    fn walk(cur: &[usize], left: usize, l: usize, out: &mut BTreeSet<Vec<usize>>) {
        if left == 0 {
            return;
        }
        for start in 0..cur.len() {
            for len in 1..=l {
                if start + len > cur.len() || cur.len() - len == 0 {
                    break;
                }
                let mut next = cur[..start].to_vec();
                next.extend_from_slice(&cur[start + len..]);
                out.insert(next.clone());
                walk(&next, left - 1, l, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(&(0..n).collect::<Vec<_>>(), t, l, &mut out);
    out
}

fn candidate_oracle() -> Check {
    let mut compared = 0;
    for n in 2..=7 {
        let sentence: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        for t in 1..=3 {
            for l in 1..=3 {
                let got: BTreeSet<Vec<usize>> = match generate_candidates(&sentence, t, l) {
                    Ok(c) => c.into_iter().map(|c| c.kept_positions).collect(),
                    Err(e) => return Check::new("candidate oracle", false, format!("n={n} T={t} L={l}: {e}")),
                };
                if got != brute_force_kept_sets(n, t, l) {
                    return Check::new("candidate oracle", false, format!("mismatch at n={n} T={t} L={l}"));
                }
                compared += 1;
            }
        }
    }
    Check::new("candidate oracle", true, format!("{compared} configurations equal"))
}

fn small_model() -> ToySeq2Seq {
    ToySeq2Seq::new(ModelConfig {
        vocab_size: 8,
        embed_dim: 6,
        max_len: 12,
        init_scale: 0.5,
        seed: 11,
    })
}

fn example() -> Example {
    Example {
        id: "selftest".into(),
        article: vec![1, 2, 3, 4, 5, 6, 7],
        gold: vec![2, 4, 5, 1],
        negatives: vec![NegativeTarget {
            tokens: vec![2, 7, 5, 1],
            replaced: vec![1],
        }],
    }
}

fn gradient_checks() -> Vec<Check> {
    let model = small_model();
    let ex = example();
    let cases: [(&'static str, TrainConfig, Weights); 4] = [
        ("grad check: ce", TrainConfig::default(), Weights::only_ce()),
        (
            "grad check: coenc standard",
            TrainConfig {
                gamma: 0.5,
                ..TrainConfig::default()
            },
            Weights::only_enc(),
        ),
        (
            "grad check: coenc literal",
            TrainConfig {
                gamma: 0.5,
                denominator_mode: DenominatorMode::Literal,
                ..TrainConfig::default()
            },
            Weights::only_enc(),
        ),
        (
            "grad check: pm codec",
            TrainConfig {
                eta: 50.0,
                ..TrainConfig::default()
            },
            Weights::only_dec(),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, cfg, w)| {
            let f = |m: &ToySeq2Seq| {
                let (b, g) = evaluate(m, &ex, &cfg, w).expect("valid example");
                (w.objective(&b), g)
            };
            let r = grad_check(&model, f, 1e-4, 12, 5);
            Check::new(
                name,
                r.max_rel_error < 1e-4 && r.checked > 0,
                format!("max relative error {:.2e} over {} entries", r.max_rel_error, r.checked),
            )
        })
        .collect()
}

fn masking_check() -> Check {
    let gold_logits: Vec<Vec<f64>> = (0..4)
        .map(|j| (0..5).map(|v| ((j * 5 + v) as f64 * 0.37).sin()).collect())
        .collect();
    let neg_logits: Vec<Vec<f64>> = (0..4)
        .map(|j| (0..5).map(|v| ((j * 7 + v) as f64 * 0.53).cos()).collect())
        .collect();
    let r = [1, 3];
    let (_, dg, dn) = match codec_pm_logits(&gold_logits, &[0, 1, 2, 3], &neg_logits, &[0, 4, 2, 1], &r, 10.0) {
        Ok(v) => v,
        Err(e) => return Check::new("pm masking", false, e.to_string()),
    };
    let outside = (0..4)
        .filter(|j| !r.contains(j))
        .flat_map(|j| dg[j].iter().chain(&dn[j]))
        .fold(0.0f64, |m, g| m.max(g.abs()));
    let inside = r.iter().flat_map(|&j| dg[j].iter()).fold(0.0f64, |m, g| m.max(g.abs()));
    Check::new(
        "pm masking",
        outside < 1e-8 && inside > 0.0,
        format!("max |grad| outside R {outside:.1e}"),
    )
}

fn fixed_points() -> Vec<Check> {
    let std = coenc_scores(0.3, &[0.3], 0.1, DenominatorMode::Standard).0;
    let lit = coenc_scores(0.3, &[0.3], 0.1, DenominatorMode::Literal).0;
    let pm0 = loss_codec_pm(&[0.0, 0.0, -1.0], &[0.0, 0.0, -2.0], &[2], 0.5);
    let pm25 = loss_codec_pm(&[0.0, 0.0, -3.0], &[0.0, 0.0, -1.0], &[2], 0.5);
    let cfg = TrainConfig {
        lambda_enc: 0.0,
        lambda_dec: 0.0,
        ..TrainConfig::default()
    };
    let total_is_ce = match evaluate(&small_model(), &example(), &cfg, Weights::from_config(&cfg)) {
        Ok((b, _)) => b.total.to_bits() == b.ce.to_bits(),
        Err(_) => false,
    };
    let zero = LossBreakdown::new(1.25, 0.7, 0.4, 0.0, 0.0);
    vec![
        Check::new(
            "fixed point: coenc symmetric",
            (std - 2f64.ln()).abs() < 1e-12 && lit.abs() < 1e-12,
            format!("standard {std}, literal {lit}"),
        ),
        Check::new(
            "fixed point: pm worked examples",
            matches!((&pm0, &pm25), (Ok(a), Ok(b)) if *a == 0.0 && *b == 2.5),
            format!("{pm0:?}, {pm25:?}"),
        ),
        Check::new(
            "fixed point: zero weights",
            total_is_ce && zero.total.to_bits() == zero.ce.to_bits(),
            "total equals ce bit for bit",
        ),
    ]
}

fn protocol_roundtrip() -> Check {
    let text = [["the", "cat", "sat", "."], ["the", "dog", "sat", "."]];
    let sentences: Vec<Vec<String>> = text.iter().map(|s| s.iter().map(|w| w.to_string()).collect()).collect();
    let Ok(mut model) = NGramModel::train(sentences.iter().map(Vec::as_slice), NGramConfig::default()) else {
        return Check::new("protocol roundtrip", false, "cannot train model");
    };
    let input = concat!(
        "{\"id\":0,\"op\":\"ping\"}\n",
        "{\"id\":1,\"op\":\"logprob\",\"text\":[\"the\",\"cat\"]}\n",
        "not json\n",
        "{\"id\":2,\"op\":\"cond\",\"target\":[\"sat\"],\"condition\":[\"the\",\"cat\"]}\n",
    );
    let mut out = Vec::new();
    if let Err(e) = serve(&mut model, Cursor::new(input), &mut out) {
        return Check::new("protocol roundtrip", false, e.to_string());
    }
    let lines: Vec<Response> = String::from_utf8_lossy(&out)
        .lines()
        .filter_map(|l| Response::parse(l).ok())
        .collect();
    let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect::<Vec<_>>();
    let direct_lp = model.logprob_total(&words(&["the", "cat"])).ok();
    let direct_cond = model.conditional_total(&words(&["sat"]), &words(&["the", "cat"])).ok();
    let ok = matches!(
        lines.as_slice(),
        [
            Response::Pong { id: 0 },
            Response::Logprob { id: 1, logprob: a },
            Response::Error { id: -1, .. },
            Response::Logprob { id: 2, logprob: b },
        ] if Some(*a) == direct_lp && Some(*b) == direct_cond
    );
    Check::new("protocol roundtrip", ok, format!("{} responses", lines.len()))
}

/// Runs every check; the order is stable.
pub fn run_all() -> Vec<Check> {
    let mut out = vec![candidate_oracle()];
    out.extend(gradient_checks());
    out.push(masking_check());
    out.extend(fixed_points());
    out.push(protocol_roundtrip());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_small_cases() {
        let one = brute_force_kept_sets(3, 1, 1);
        assert_eq!(one, [vec![1, 2], vec![0, 2], vec![0, 1]].into_iter().collect());
        let two = brute_force_kept_sets(3, 1, 2);
        assert_eq!(two.len(), 5);
        assert!(two.contains(&vec![2]) && two.contains(&vec![0]));
    }

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
