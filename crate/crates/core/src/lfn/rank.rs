use std::cmp::Ordering;

use super::Candidate;
use crate::lm::{LmError, Scorer};

/// Which end of the phase-2 relevance score wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelevancePick {
    /// Highest conditional log-probability of the context.
    #[default]
    Max,
    /// Lowest, as the algorithm listing literally reads. Debug only.
    LiteralMin,
}

/// Shorter first, then by tokens, then by positions.
fn tie_break(a: &Candidate, b: &Candidate) -> Ordering {
    a.len()
        .cmp(&b.len())
        .then_with(|| a.tokens.cmp(&b.tokens))
        .then_with(|| a.kept_positions.cmp(&b.kept_positions))
}

/// Phase 1 ordering: per-token log-probability of each candidate, best first.
pub fn prune_order<'a, S: Scorer + ?Sized>(
    candidates: &'a [Candidate],
    scorer: &mut S,
) -> Result<Vec<(f64, &'a Candidate)>, LmError> {
    let mut scored = candidates
        .iter()
        .map(|c| Ok((scorer.logprob_total(&c.tokens)? / c.len() as f64, c)))
        .collect::<Result<Vec<_>, LmError>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| tie_break(a.1, b.1)));
    Ok(scored)
}

/// Two-phase ranking: prune by fluency, then pick the candidate among the
/// first `rank_topk` under which `context` is most probable.
///
/// # Panics
/// Panics if `candidates` is empty.
pub fn rank_candidates<S: Scorer + ?Sized>(
    candidates: &[Candidate],
    context: &[String],
    scorer: &mut S,
    rank_topk: usize,
    pick: RelevancePick,
) -> Result<Candidate, LmError> {
    assert!(!candidates.is_empty(), "no candidates to rank");
    if candidates.len() == 1 {
        return Ok(candidates[0].clone());
    }
    let pruned = prune_order(candidates, scorer)?;
    let top = &pruned[..rank_topk.max(1).min(pruned.len())];
    if top.len() == 1 {
        return Ok(top[0].1.clone());
    }
    let mut best: Option<(f64, &Candidate)> = None;
    for &(_, cand) in top {
        let relevance = scorer.conditional_total(context, &cand.tokens)?;
        let better = match best {
            None => true,
            Some((score, incumbent)) => {
                let ord = match pick {
                    RelevancePick::Max => relevance.total_cmp(&score),
                    RelevancePick::LiteralMin => score.total_cmp(&relevance),
                };
                ord == Ordering::Greater || (ord == Ordering::Equal && tie_break(cand, incumbent).is_lt())
            }
        };
        if better {
            best = Some((relevance, cand));
        }
    }
    Ok(best.expect("top is nonempty").1.clone())
}
