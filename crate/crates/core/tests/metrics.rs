//! Randomised stories scored against naive re-implementations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use storyline_core::metrics::{
    distinct_n, intra_story_repetition, lexical_repetition, repetition_by_index, tokenize,
};

const WORDS: &[&str] = &["a", "b", "c", "d", "e"];

fn random_story(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.random_range(2..7);
    (0..n)
        .map(|_| {
            let len = rng.random_range(0..9);
            (0..len)
                .map(|_| WORDS[rng.random_range(0..WORDS.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Counts every 4-gram by comparing all window pairs.
fn lr_oracle(stories: &[Vec<String>], n: usize) -> f64 {
    let hits = stories
        .iter()
        .filter(|toks| {
            let len = toks.len();
            (0..len.saturating_sub(3)).any(|i| {
                (0..len - 3)
                    .filter(|&j| toks[i..i + 4] == toks[j..j + 4])
                    .count()
                    >= n
            })
        })
        .count();
    hits as f64 / stories.len() as f64
}

fn repetition_oracle(sentences: &[String]) -> Vec<f64> {
    let toks: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(s)).collect();
    (1..toks.len())
        .map(|i| {
            let mine: Vec<&[String]> = toks[i].windows(3).collect();
            if mine.is_empty() {
                return 0.0;
            }
            let seen = mine
                .iter()
                .filter(|g| {
                    toks[..i]
                        .iter()
                        .any(|prev| prev.windows(3).any(|p| p == **g))
                })
                .count();
            seen as f64 / mine.len() as f64
        })
        .collect()
}

#[test]
fn lexical_repetition_and_intra_repetition_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let stories: Vec<Vec<String>> = (0..200).map(|_| random_story(&mut rng)).collect();
    let flat: Vec<Vec<String>> = stories.iter().map(|s| tokenize(&s.join(" "))).collect();

    for n in 2..4 {
        assert_eq!(
            lexical_repetition(&flat, n).unwrap(),
            lr_oracle(&flat, n),
            "LR-{n}"
        );
    }

    let reps: Vec<_> = stories.iter().map(|s| intra_story_repetition(s)).collect();
    for (story, rep) in stories.iter().zip(&reps) {
        let oracle = repetition_oracle(story);
        assert_eq!(rep.per_index, oracle);
        let mean = oracle.iter().sum::<f64>() / oracle.len() as f64;
        assert!((rep.aggregate - mean).abs() < 1e-15);
    }
    let by_index = repetition_by_index(&reps);
    for (k, v) in by_index.iter().enumerate() {
        let col: Vec<f64> = reps
            .iter()
            .filter_map(|r| r.per_index.get(k).copied())
            .collect();
        assert!((v - col.iter().sum::<f64>() / col.len() as f64).abs() < 1e-15);
    }
}

#[test]
fn distinct_is_one_iff_no_repeats() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let story = tokenize(&random_story(&mut rng).join(" "));
        let Ok(d) = distinct_n(std::slice::from_ref(&story), 2) else {
            assert!(story.len() < 2);
            continue;
        };
        let grams: Vec<&[String]> = story.windows(2).collect();
        let repeats = (0..grams.len()).any(|i| (0..i).any(|j| grams[i] == grams[j]));
        assert!((0.0..=1.0).contains(&d));
        assert_eq!(d == 1.0, !repeats);
    }
}
