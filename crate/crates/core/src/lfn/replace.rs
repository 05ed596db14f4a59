use std::collections::{BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{is_stopword, LfnError};
use crate::corpus::is_punctuation;
use crate::embed::{topk_similar, EmbedError, EmbeddingTable};

/// A perturbed copy of a gold sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Perturbation {
    pub tokens: Vec<String>,
    /// Sorted positions whose token differs from the gold sentence.
    pub replaced: Vec<usize>,
}

/// Number of positions to replace in a sentence of `len` tokens.
pub fn replacement_budget(ratio: f64, len: usize) -> usize {
    ((ratio * len as f64).round() as usize).max(1)
}

/// True for tokens that may be swapped for an article word.
pub fn is_content_word(token: &str) -> bool {
    !is_punctuation(token) && !is_stopword(token)
}

/// Gold positions holding a content word that also occurs in the fragment.
pub fn eligible_positions(gold: &[String], fragment: &[String]) -> Vec<usize> {
    let vocab: HashSet<&str> = fragment.iter().map(String::as_str).collect();
    gold.iter()
        .enumerate()
        .filter(|(_, t)| vocab.contains(t.as_str()) && is_content_word(t))
        .map(|(i, _)| i)
        .collect()
}

/// Replaces up to `budget` eligible gold words with one of the `replace_topk`
/// article words closest to it in embedding space.
///
/// Positions are visited in a uniformly shuffled order; a position whose word
/// has no embedding or no usable neighbor is skipped and the next one tried.
pub fn replace_words<R: Rng + ?Sized>(
    gold: &[String],
    fragment: &[String],
    article_vocab: &BTreeSet<String>,
    table: &EmbeddingTable,
    ratio: f64,
    replace_topk: usize,
    rng: &mut R,
) -> Result<Perturbation, LfnError> {
    let budget = replacement_budget(ratio, gold.len());
    let mut order = eligible_positions(gold, fragment);
    order.shuffle(rng);
    let mut tokens = gold.to_vec();
    let mut replaced = Vec::new();
    for pos in order {
        if replaced.len() == budget {
            break;
        }
        let neighbors = match topk_similar(&gold[pos], article_vocab, replace_topk, table) {
            Ok(n) => n,
            Err(EmbedError::OovQuery(_)) | Err(EmbedError::ZeroVector) => continue,
            Err(e) => return Err(e.into()),
        };
        let Some((word, _)) = neighbors.choose(rng) else {
            continue;
        };
        tokens[pos] = word.clone();
        replaced.push(pos);
    }
    if replaced.is_empty() {
        return Err(LfnError::ConstructionFailed(
            "no eligible position has an embedding neighbor in the article".into(),
        ));
    }
    replaced.sort_unstable();
    Ok(Perturbation { tokens, replaced })
}

/// Baseline: uniform positions over non-punctuation tokens, uniform
/// replacement words from the article vocabulary.
pub fn replace_random<R: Rng + ?Sized>(
    gold: &[String],
    article_vocab: &BTreeSet<String>,
    ratio: f64,
    rng: &mut R,
) -> Result<Perturbation, LfnError> {
    let budget = replacement_budget(ratio, gold.len());
    let vocab: Vec<&String> = article_vocab.iter().collect();
    let mut order: Vec<usize> = (0..gold.len()).filter(|&i| !is_punctuation(&gold[i])).collect();
    order.shuffle(rng);
    let mut tokens = gold.to_vec();
    let mut replaced = Vec::new();
    for pos in order {
        if replaced.len() == budget {
            break;
        }
        let choices: Vec<&String> = vocab.iter().copied().filter(|w| **w != gold[pos]).collect();
        let Some(word) = choices.choose(rng) else { continue };
        tokens[pos] = (*word).clone();
        replaced.push(pos);
    }
    if replaced.is_empty() {
        return Err(LfnError::ConstructionFailed(
            "article vocabulary offers no alternative word".into(),
        ));
    }
    replaced.sort_unstable();
    Ok(Perturbation { tokens, replaced })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::read_embeddings;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn table() -> EmbeddingTable {
        let text = "paris 1 0 0\nberlin 0.9 0.1 0\nrome 0.8 0.2 0\nacme 0 1 0\nglobex 0 0.9 0.1\nopened 0 0 1\nclosed 0 0.1 0.9\n";
        read_embeddings("t", text.as_bytes()).unwrap()
    }

    fn vocab(s: &str) -> BTreeSet<String> {
        words(s).into_iter().collect()
    }

    #[test]
    fn budget_arithmetic() {
        assert_eq!(replacement_budget(0.15, 20), 3);
        assert_eq!(replacement_budget(0.15, 3), 1);
        assert_eq!(replacement_budget(1.0, 7), 7);
    }

    #[test]
    fn saturated_budget_replaces_every_eligible_position() {
        let gold = words("acme opened in paris .");
        let frag = words("acme opened paris");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = replace_words(&gold, &frag, &vocab("berlin globex closed"), &table(), 1.0, 5, &mut rng).unwrap();
        assert_eq!(p.replaced, [0, 1, 3]);
        for &i in &p.replaced {
            assert_ne!(p.tokens[i], gold[i]);
        }
        assert_eq!(p.tokens[2], "in");
    }

    #[test]
    fn seeded_runs_match() {
        let gold = words("acme opened a plant in paris and rome .");
        let frag = words("acme paris rome");
        let v = vocab("berlin globex rome paris closed");
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            replace_words(&gold, &frag, &v, &table(), 0.15, 5, &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn twenty_token_budget() {
        let gold = words("paris berlin rome acme globex opened closed paris berlin rome acme globex opened closed paris berlin rome acme globex opened");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = replace_words(
            &gold,
            &gold,
            &vocab("paris berlin rome acme globex opened closed"),
            &table(),
            0.15,
            5,
            &mut rng,
        )
        .unwrap();
        assert!((1..=3).contains(&p.replaced.len()));
    }

    #[test]
    fn oov_positions_are_skipped() {
        let gold = words("zork opened");
        let frag = words("zork opened");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = replace_words(&gold, &frag, &vocab("closed"), &table(), 1.0, 5, &mut rng).unwrap();
        assert_eq!(p.replaced, [1]);
        let none = replace_words(
            &words("zork ."),
            &words("zork"),
            &vocab("closed"),
            &table(),
            1.0,
            5,
            &mut rng,
        );
        assert!(matches!(none, Err(LfnError::ConstructionFailed(_))));
    }

    #[test]
    fn random_baseline_uses_article_words() {
        let gold = words("the cat sat on the mat .");
        let v = vocab("dog rug stood");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = replace_random(&gold, &v, 0.5, &mut rng).unwrap();
        assert_eq!(p.replaced.len(), 4);
        for &i in &p.replaced {
            assert!(v.contains(&p.tokens[i]));
            assert_ne!(p.tokens[i], ".");
        }
    }
}
