use serde::{Deserialize, Serialize};

use super::LfnError;

/// A compression of a summary sentence: the tokens kept after span deletions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub tokens: Vec<String>,
    /// Strictly increasing indices into the source sentence.
    pub kept_positions: Vec<usize>,
}

impl Candidate {
    pub fn from_positions(source: &[String], kept_positions: Vec<usize>) -> Self {
        let tokens = kept_positions.iter().map(|&i| source[i].clone()).collect();
        Self { tokens, kept_positions }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Every compression reachable by `1..=iterations` successive deletions of a
/// contiguous span of `1..=max_span` tokens, where contiguity is judged in
/// the already-compressed sentence. The sentence itself is never included
/// and every candidate keeps at least one token.
///
/// Candidates are returned ordered by kept positions.
pub fn generate_candidates(
    sentence: &[String],
    iterations: usize,
    max_span: usize,
) -> Result<Vec<Candidate>, LfnError> {
    if sentence.len() < 2 {
        return Err(LfnError::TooShort(sentence.len()));
    }
    let mut out = Vec::new();
    let mut kept = Vec::with_capacity(sentence.len());
    walk_runs(sentence.len(), 0, iterations, max_span, false, &mut kept, &mut |k| {
        out.push(Candidate::from_positions(sentence, k.to_vec()))
    });
    Ok(out)
}

/// Visits every reachable kept-position set in lexicographic order.
///
/// A deleted set is reachable iff each of its maximal runs of length `m`
/// costs `ceil(m / max_span)` deletions and the costs sum to at most
/// `budget`: a deletion removes adjacent tokens of the compressed sentence,
/// which always lie inside one final run. Enumerating runs directly visits
/// each set exactly once.
fn walk_runs(
    n: usize,
    i: usize,
    budget: usize,
    max_span: usize,
    deleted: bool,
    kept: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    if i == n {
        if deleted && !kept.is_empty() {
            emit(kept);
        }
        return;
    }
    if max_span == 0 {
        kept.extend(i..n);
        walk_runs(n, n, budget, max_span, deleted, kept, emit);
        kept.truncate(kept.len() - (n - i));
        return;
    }
    let cost = |m: usize| m.div_ceil(max_span);
    // branch order keeps the output sorted: ending here < keeping i < resuming later
    if cost(n - i) <= budget {
        walk_runs(n, n, budget - cost(n - i), max_span, true, kept, emit);
    }
    kept.push(i);
    walk_runs(n, i + 1, budget, max_span, deleted, kept, emit);
    kept.pop();
    for m in 1..n - i {
        if cost(m) > budget {
            break;
        }
        kept.push(i + m);
        walk_runs(n, i + m + 1, budget - cost(m), max_span, true, kept, emit);
        kept.pop();
    }
}

/// The literal search, one deletion level at a time; reference for tests.
#[cfg(test)]
fn kept_sets_slow(n: usize, iterations: usize, max_span: usize) -> std::collections::BTreeSet<Vec<usize>> {
    use std::collections::BTreeSet;

    let mut all = BTreeSet::new();
    let mut frontier: BTreeSet<Vec<usize>> = BTreeSet::from([(0..n).collect()]);
    for _ in 0..iterations {
        let mut next = BTreeSet::new();
        for kept in &frontier {
            for len in 1..=max_span.min(kept.len().saturating_sub(1)) {
                for start in 0..=kept.len() - len {
                    let mut shorter = Vec::with_capacity(kept.len() - len);
                    shorter.extend_from_slice(&kept[..start]);
                    shorter.extend_from_slice(&kept[start + len..]);
                    next.insert(shorter);
                }
            }
        }
        // Sets produced at an earlier level were expanded one level earlier too.
        frontier = next.difference(&all).cloned().collect();
        all.extend(next);
        if frontier.is_empty() {
            break;
        }
    }
    all
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn token_sets(c: &[Candidate]) -> BTreeSet<Vec<String>> {
        c.iter().map(|c| c.tokens.clone()).collect()
    }

    #[test]
    fn single_deletions() {
        let c = generate_candidates(&words("a b c"), 1, 1).unwrap();
        let expected: BTreeSet<Vec<String>> = [words("b c"), words("a c"), words("a b")].into();
        assert_eq!(token_sets(&c), expected);
    }

    #[test]
    fn two_spans_added() {
        let c = generate_candidates(&words("a b c"), 1, 2).unwrap();
        let expected: BTreeSet<Vec<String>> = [words("b c"), words("a c"), words("a b"), words("c"), words("a")].into();
        assert_eq!(token_sets(&c), expected);
    }

    #[test]
    fn later_iterations_bridge_earlier_gaps() {
        // delete "c", then "b d" is contiguous in "a b d e"
        let c = generate_candidates(&words("a b c d e"), 2, 2).unwrap();
        assert!(c.iter().any(|c| c.kept_positions == [0, 4]));
        let one = generate_candidates(&words("a b c d e"), 1, 2).unwrap();
        assert!(!one.iter().any(|c| c.kept_positions == [0, 4]));
    }

    #[test]
    fn never_full_or_empty() {
        let s = words("w x y z");
        for c in generate_candidates(&s, 3, 3).unwrap() {
            assert!(!c.is_empty() && c.len() < s.len());
        }
    }

    #[test]
    fn run_walk_matches_deletion_search() {
        for n in 2..=9 {
            let sentence: Vec<String> = (0..n).map(|i| i.to_string()).collect();
            for t in 0..=3 {
                for l in 0..=3 {
                    let got: Vec<Vec<usize>> = generate_candidates(&sentence, t, l)
                        .unwrap()
                        .into_iter()
                        .map(|c| c.kept_positions)
                        .collect();
                    let reference: Vec<Vec<usize>> = kept_sets_slow(n, t, l).into_iter().collect();
                    assert_eq!(got, reference, "n={n} T={t} L={l}");
                }
            }
        }
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            generate_candidates(&words("a"), 3, 3),
            Err(LfnError::TooShort(1))
        ));
    }
}
