use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{mean, tokenize};
use crate::corpus::EmbeddingTable;
use crate::tensor::cosine;

/// Trigram repetition per sentence index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraRepetition {
    /// Entry `k` scores sentence `k + 2` (1-based) against sentences
    /// `1..=k + 1`.
    pub per_index: Vec<f64>,
    pub aggregate: f64,
}

fn trigrams(text: &str) -> Vec<[String; 3]> {
    tokenize(text)
        .windows(3)
        .map(|w| [w[0].clone(), w[1].clone(), w[2].clone()])
        .collect()
}

/// For each sentence after the first, the fraction of its trigrams already
/// seen in an earlier sentence. Sentences shorter than three tokens score 0.
/// Pass the leading context as the first sentence.
pub fn intra_story_repetition<S: AsRef<str>>(sentences: &[S]) -> IntraRepetition {
    let mut seen: BTreeSet<[String; 3]> = BTreeSet::new();
    let mut per_index = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        let grams = trigrams(s.as_ref());
        if i > 0 {
            let hit = grams.iter().filter(|g| seen.contains(*g)).count();
            per_index.push(if grams.is_empty() {
                0.0
            } else {
                hit as f64 / grams.len() as f64
            });
        }
        seen.extend(grams);
    }
    let aggregate = mean(per_index.iter().copied());
    IntraRepetition {
        per_index,
        aggregate,
    }
}

/// Mean score at each sentence index over the stories that reach it.
pub fn repetition_by_index(stories: &[IntraRepetition]) -> Vec<f64> {
    let longest = stories.iter().map(|r| r.per_index.len()).max().unwrap_or(0);
    (0..longest)
        .map(|k| mean(stories.iter().filter_map(|r| r.per_index.get(k).copied())))
        .collect()
}

/// A cosine-based score plus how many sentences had no known words.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingScore {
    /// `None` when no pair could be scored.
    pub value: Option<f64>,
    pub skipped: usize,
}

impl EmbeddingScore {
    /// Mean of the scored values; skip counts add up.
    pub fn mean_of(scores: &[EmbeddingScore]) -> Self {
        let vals: Vec<f64> = scores.iter().filter_map(|s| s.value).collect();
        EmbeddingScore {
            value: (!vals.is_empty()).then(|| mean(vals.into_iter())),
            skipped: scores.iter().map(|s| s.skipped).sum(),
        }
    }
}

/// Mean cosine between consecutive sentence vectors. A sentence with no
/// in-vocabulary word is skipped, and so are the pairs it belongs to.
pub fn intra_story_coherence<S: AsRef<str>>(
    sentences: &[S],
    table: &EmbeddingTable,
) -> EmbeddingScore {
    let vecs: Vec<Option<Vec<f64>>> = sentences
        .iter()
        .map(|s| table.sentence_vector(s.as_ref()))
        .collect();
    let cos: Vec<f64> = vecs
        .windows(2)
        .filter_map(|w| match (&w[0], &w[1]) {
            (Some(a), Some(b)) => Some(cosine(a, b)),
            _ => None,
        })
        .collect();
    EmbeddingScore {
        value: (!cos.is_empty()).then(|| mean(cos.into_iter())),
        skipped: vecs.iter().filter(|v| v.is_none()).count(),
    }
}

/// Mean cosine between the leading context and each story sentence.
pub fn intra_story_relevance<S: AsRef<str>>(
    leading: &str,
    sentences: &[S],
    table: &EmbeddingTable,
) -> EmbeddingScore {
    let lead = table.sentence_vector(leading);
    let vecs: Vec<Option<Vec<f64>>> = sentences
        .iter()
        .map(|s| table.sentence_vector(s.as_ref()))
        .collect();
    let skipped = vecs.iter().filter(|v| v.is_none()).count() + usize::from(lead.is_none());
    let value = lead.and_then(|l| {
        let cos: Vec<f64> = vecs.iter().flatten().map(|v| cosine(&l, v)).collect();
        (!cos.is_empty()).then(|| mean(cos.into_iter()))
    });
    EmbeddingScore { value, skipped }
}
