use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{CorpusError, Result, StoryRecord};
use crate::metrics::tokenize;
use crate::tensor::cosine;

/// Word vectors plus per-sentence embeddings keyed by (story, index).
///
/// Sentence index 0 is the leading context; reference sentence `j` of a
/// record is index `j + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: BTreeMap<String, Vec<f64>>,
    sentences: BTreeMap<(String, usize), Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(CorpusError::Dimension {
                got: v.len(),
                want: self.dim,
            });
        }
        Ok(())
    }

    pub fn insert_word(&mut self, word: &str, v: Vec<f64>) -> Result<()> {
        self.check(&v)?;
        self.words.insert(word.to_string(), v);
        Ok(())
    }

    pub fn insert_sentence(&mut self, story_id: &str, index: usize, v: Vec<f64>) -> Result<()> {
        self.check(&v)?;
        self.sentences.insert((story_id.to_string(), index), v);
        Ok(())
    }

    pub fn word(&self, w: &str) -> Option<&[f64]> {
        self.words.get(w).map(Vec::as_slice)
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn sentence(&self, story_id: &str, index: usize) -> Option<&[f64]> {
        self.sentences
            .get(&(story_id.to_string(), index))
            .map(Vec::as_slice)
    }

    pub fn sentences(&self) -> impl Iterator<Item = (&str, usize, &[f64])> {
        self.sentences
            .iter()
            .map(|((s, i), v)| (s.as_str(), *i, v.as_slice()))
    }

    /// Mean of the in-vocabulary word vectors, or `None` when no token of
    /// `text` is known.
    pub fn sentence_vector(&self, text: &str) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for tok in tokenize(text) {
            if let Some(v) = self.words.get(&tok) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                n += 1;
            }
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    }

    /// Stores mean-word-vector embeddings for every sentence of a story;
    /// sentences without known words get the zero vector.
    pub fn fill_from_words<S: AsRef<str>>(&mut self, story_id: &str, sentences: &[S]) {
        for (i, s) in sentences.iter().enumerate() {
            let v = self
                .sentence_vector(s.as_ref())
                .unwrap_or_else(|| vec![0.0; self.dim]);
            self.sentences.insert((story_id.to_string(), i), v);
        }
    }
}

/// Pairwise cosine similarities, row-major. The upper triangle is mirrored
/// so the result is exactly symmetric, and the diagonal is exactly 1.
pub fn similarity_matrix(embeddings: &[Vec<f64>]) -> Vec<f64> {
    let m = embeddings.len();
    let mut sim = vec![0.0; m * m];
    for i in 0..m {
        sim[i * m + i] = 1.0;
        for j in i + 1..m {
            let c = cosine(&embeddings[i], &embeddings[j]).clamp(-1.0, 1.0);
            sim[i * m + j] = c;
            sim[j * m + i] = c;
        }
    }
    sim
}

/// Fills `sentence_embeddings` and `sim` from the table.
pub fn annotate_similarity(mut record: StoryRecord, table: &EmbeddingTable) -> Result<StoryRecord> {
    let embeddings = (0..record.m())
        .map(|j| {
            table
                .sentence(&record.story_id, j + 1)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| CorpusError::MissingEmbedding {
                    story_id: record.story_id.clone(),
                    index: j + 1,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    record.sim = similarity_matrix(&embeddings);
    record.sentence_embeddings = embeddings;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(m: usize) -> StoryRecord {
        StoryRecord {
            story_id: "s".into(),
            context: vec![],
            sentences: vec![vec![]; m],
            events: vec![None; m],
            sentence_embeddings: vec![],
            sim: vec![],
        }
    }

    #[test]
    fn cosine_examples() {
        let mut t = EmbeddingTable::new(2);
        t.insert_sentence("s", 1, vec![1.0, 0.0]).unwrap();
        t.insert_sentence("s", 2, vec![1.0, 0.0]).unwrap();
        t.insert_sentence("s", 3, vec![0.0, 3.0]).unwrap();
        t.insert_sentence("s", 4, vec![1.0, 1.0]).unwrap();
        let r = annotate_similarity(record(4), &t).unwrap();
        assert_eq!(r.sim_at(0, 1), 1.0);
        assert_eq!(r.sim_at(0, 2), 0.0);
        let oracle = 1.0 / 2f64.sqrt();
        assert!((r.sim_at(0, 3) - oracle).abs() < 1e-15);
    }

    #[test]
    fn missing_embedding_names_story_and_index() {
        let t = EmbeddingTable::new(2);
        assert_eq!(
            annotate_similarity(record(1), &t),
            Err(CorpusError::MissingEmbedding {
                story_id: "s".into(),
                index: 1
            })
        );
        let mut t = EmbeddingTable::new(2);
        assert!(t.insert_word("x", vec![1.0]).is_err());
    }

    #[test]
    fn word_mean_fallback() {
        let mut t = EmbeddingTable::new(2);
        t.insert_word("dog", vec![1.0, 0.0]).unwrap();
        t.insert_word("ran", vec![0.0, 1.0]).unwrap();
        assert_eq!(t.sentence_vector("The dog ran."), Some(vec![0.5, 0.5]));
        assert_eq!(t.sentence_vector("Nothing known"), None);
        t.fill_from_words("s", &["lead", "Dog!", "zzz"]);
        assert_eq!(t.sentence("s", 1), Some(&[1.0, 0.0][..]));
        assert_eq!(t.sentence("s", 2), Some(&[0.0, 0.0][..]));
    }

    proptest! {
        #[test]
        fn sim_is_symmetric_bounded_unit_diagonal(
            vs in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..8)
        ) {
            let m = vs.len();
            let sim = similarity_matrix(&vs);
            for i in 0..m {
                prop_assert_eq!(sim[i * m + i], 1.0);
                for j in 0..m {
                    prop_assert_eq!(sim[i * m + j].to_bits(), sim[j * m + i].to_bits());
                    prop_assert!((-1.0..=1.0).contains(&sim[i * m + j]));
                }
            }
        }
    }
}
