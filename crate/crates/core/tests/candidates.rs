use std::collections::BTreeSet;
use std::time::Instant;

use factcon::lfn::generate_candidates;

/// Walks every deletion history directly on token sequences; each deletion
/// removes 1..=l adjacent items of the current (already shortened) sequence.
fn dfs(cur: &[usize], left: usize, l: usize, out: &mut BTreeSet<Vec<usize>>) {
    if left == 0 {
        return;
    }
    for start in 0..cur.len() {
        for end in start + 1..=(start + l).min(cur.len()) {
            if end - start == cur.len() {
                continue;
            }
            let next: Vec<usize> = cur[..start].iter().chain(&cur[end..]).copied().collect();
            out.insert(next.clone());
            dfs(&next, left - 1, l, out);
        }
    }
}

/// Independent characterization: a deleted set is reachable iff its maximal
/// runs of consecutive positions can each be cleared with ceil(len / l)
/// deletions and those add up to at most t.
fn closed_form(n: usize, t: usize, l: usize) -> BTreeSet<Vec<usize>> {
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << n) - 1 {
        let mut cost = 0;
        let mut run = 0usize;
        for i in 0..=n {
            if i < n && mask & (1 << i) != 0 {
                run += 1;
            } else if run > 0 {
                cost += run.div_ceil(l);
                run = 0;
            }
        }
        if cost <= t {
            out.insert((0..n).filter(|i| mask & (1 << i) == 0).collect());
        }
    }
    out
}

fn all_sentences(n: usize) -> impl Iterator<Item = Vec<String>> {
    const ALPHABET: [&str; 4] = ["a", "b", "c", "d"];
    (0..4usize.pow(n as u32)).map(move |mut code| {
        (0..n)
            .map(|_| {
                let s = ALPHABET[code % 4];
                code /= 4;
                s.to_string()
            })
            .collect()
    })
}

/// Every sentence up to length 6; the acceptance target covers length 8.
#[test]
fn generator_matches_brute_force_on_every_small_sentence() {
    let start = Instant::now();
    let mut sentences = 0usize;
    for n in 2..=6 {
        for t in 1..=3 {
            for l in 1..=3 {
                let mut expected = BTreeSet::new();
                dfs(&(0..n).collect::<Vec<_>>(), t, l, &mut expected);
                assert_eq!(expected, closed_form(n, t, l), "oracles disagree at n={n} T={t} L={l}");
                let expected: Vec<Vec<usize>> = expected.into_iter().collect();
                for sentence in all_sentences(n) {
                    let got = generate_candidates(&sentence, t, l).unwrap();
                    // both sides are sorted by kept positions, so sequence equality is set equality
                    let same = got.len() == expected.len()
                        && got.iter().zip(&expected).all(|(c, k)| {
                            c.kept_positions == *k && c.tokens.iter().zip(k).all(|(w, &i)| *w == sentence[i])
                        });
                    assert!(same, "n={n} T={t} L={l} sentence {sentence:?}");
                    sentences += 1;
                }
            }
        }
    }
    eprintln!("{sentences} sentence/config pairs in {:?}", start.elapsed());
}

#[test]
fn oracles_agree_with_generator_up_to_length_ten() {
    for n in 2..=10 {
        let sentence: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        for t in 0..=4 {
            for l in 0..=4 {
                let mut expected = BTreeSet::new();
                dfs(&(0..n).collect::<Vec<_>>(), t, l, &mut expected);
                let got: BTreeSet<Vec<usize>> = generate_candidates(&sentence, t, l)
                    .unwrap()
                    .into_iter()
                    .map(|c| c.kept_positions)
                    .collect();
                assert_eq!(got, expected, "n={n} T={t} L={l}");
                if l > 0 {
                    assert_eq!(got, closed_form(n, t, l));
                }
            }
        }
    }
}

#[test]
fn worked_examples() {
    let abc: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let tokens = |t, l| -> BTreeSet<Vec<String>> {
        generate_candidates(&abc, t, l)
            .unwrap()
            .into_iter()
            .map(|c| c.tokens)
            .collect()
    };
    let singles: BTreeSet<Vec<String>> = [["b", "c"], ["a", "c"], ["a", "b"]]
        .iter()
        .map(|p| p.iter().map(|s| s.to_string()).collect())
        .collect();
    assert_eq!(tokens(1, 1), singles);
    let mut wider = singles.clone();
    wider.insert(vec!["c".to_string()]);
    wider.insert(vec!["a".to_string()]);
    assert_eq!(tokens(1, 2), wider);
}
