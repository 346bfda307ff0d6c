//! Story records: leading-context split, delexicalisation, sentence
//! separators, similarity annotation, post-training windows and BPE.

mod bpe;
mod delex;
mod embed;
mod record;
mod split;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bpe::{train_bpe, BpeVocab, SpecialIds, SPECIAL_TOKENS};
pub use delex::{delexicalize, delexicalize_story, Gender, NameLexicon};
pub use embed::{annotate_similarity, similarity_matrix, EmbeddingTable};
pub use record::{align_events, build_record};
pub use split::{
    segment_for_posttraining, split_sentences, split_story, MAX_STORY_SENTENCES, WINDOW,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("story has {0} sentence(s); at least 2 are needed")]
    TooShort(usize),
    #[error("{got} sentences exceed the {max} separator tokens")]
    TooManySentences { got: usize, max: usize },
    #[error("BPE training corpus is empty")]
    EmptyCorpus,
    #[error("target vocabulary {target} does not exceed the {base} base symbols")]
    TargetTooSmall { target: usize, base: usize },
    #[error("no sentence embedding for story {story_id}, sentence {index}")]
    MissingEmbedding { story_id: String, index: usize },
    #[error("embedding dimension {got} differs from table dimension {want}")]
    Dimension { got: usize, want: usize },
    #[error("story {story_id}: {sentences} sentences but {events} event slots")]
    EventCount {
        story_id: String,
        sentences: usize,
        events: usize,
    },
    #[error("name lexicon line {line}: expected `name<TAB>M|F|N`, found `{text}`")]
    Lexicon { line: usize, text: String },
    #[error("unknown token id {0}")]
    UnknownId(u32),
}

pub type Result<T> = core::result::Result<T, CorpusError>;

/// One training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryRecord {
    pub story_id: String,
    /// Token ids of the leading context C.
    pub context: Vec<u32>,
    /// Token ids of each reference sentence.
    pub sentences: Vec<Vec<u32>>,
    /// One event surface per reference sentence.
    pub events: Vec<Option<String>>,
    pub sentence_embeddings: Vec<Vec<f64>>,
    /// Row-major m×m cosine similarities between sentence embeddings.
    pub sim: Vec<f64>,
}

impl StoryRecord {
    pub fn m(&self) -> usize {
        self.sentences.len()
    }

    pub fn sim_at(&self, i: usize, j: usize) -> f64 {
        self.sim[i * self.m() + j]
    }

    pub fn max_id(&self) -> Option<u32> {
        self.context
            .iter()
            .chain(self.sentences.iter().flatten())
            .copied()
            .max()
    }
}

/// Flattens sentences into `s1 [sep_1] s2 [sep_2] … sm [sep_m] <eos>`.
pub fn insert_sep_tokens(sentences: &[Vec<u32>], ids: &SpecialIds) -> Result<Vec<u32>> {
    if sentences.len() > ids.sep.len() {
        return Err(CorpusError::TooManySentences {
            got: sentences.len(),
            max: ids.sep.len(),
        });
    }
    let mut out =
        Vec::with_capacity(sentences.iter().map(Vec::len).sum::<usize>() + sentences.len() + 1);
    for (s, sep) in sentences.iter().zip(&ids.sep) {
        out.extend_from_slice(s);
        out.push(*sep);
    }
    out.push(ids.eos);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sep_insertion() {
        let vocab = BpeVocab::from_alphabet(&['a', 'b', 'c', ' '], 10);
        let ids = vocab.special_ids();
        let a = vocab.encode("a b");
        let c = vocab.encode("c");
        let flat = insert_sep_tokens(&[a.clone(), c.clone()], &ids).unwrap();
        let mut want = a;
        want.push(ids.sep[0]);
        want.extend(c);
        want.push(ids.sep[1]);
        want.push(ids.eos);
        assert_eq!(flat, want);
        assert_eq!(vocab.decode(&flat), "a b[sep_1]c[sep_2]<eos>");

        assert_eq!(insert_sep_tokens(&[], &ids).unwrap(), vec![ids.eos]);

        let ten: Vec<Vec<u32>> = (0..10).map(|_| vocab.encode("ab")).collect();
        let flat = insert_sep_tokens(&ten, &ids).unwrap();
        let seps: Vec<usize> = flat
            .iter()
            .filter_map(|t| ids.sep.iter().position(|s| s == t))
            .collect();
        assert_eq!(seps, (0..10).collect::<Vec<_>>());

        assert_eq!(
            insert_sep_tokens(&vec![vec![]; 11], &ids),
            Err(CorpusError::TooManySentences { got: 11, max: 10 })
        );
    }
}
