//! Automatic story metrics: perplexity, BLEU, ROUGE, Distinct-n, lexical
//! repetition and the intra-story repetition, coherence and relevance family.

mod intra;
mod overlap;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use intra::{
    intra_story_coherence, intra_story_relevance, intra_story_repetition, repetition_by_index,
    EmbeddingScore, IntraRepetition,
};
pub use overlap::{bleu, distinct_n, lexical_repetition, rouge_l, rouge_n, RougeScore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("n must be at least {min}, got {n}")]
    InvalidN { n: usize, min: usize },
    #[error("{candidates} candidates but {references} references")]
    LengthMismatch {
        candidates: usize,
        references: usize,
    },
    #[error("no n-grams to score")]
    EmptyCorpus,
    #[error("no tokens to average over")]
    EmptyDataset,
}

pub type Result<T> = core::result::Result<T, MetricError>;

/// Lowercases, then splits on whitespace and around punctuation. An
/// apostrophe between two letters stays inside its word.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut out = Vec::new();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let inner_apostrophe = (c == '\'' || c == '\u{2019}')
            && !word.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || inner_apostrophe {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(core::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.into());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// n-gram multiset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NGramCounts {
    pub n: usize,
    pub counts: BTreeMap<Vec<String>, usize>,
}

impl NGramCounts {
    pub fn of(tokens: &[String], n: usize) -> Self {
        let mut c = NGramCounts {
            n,
            counts: BTreeMap::new(),
        };
        c.add(tokens);
        c
    }

    pub fn add(&mut self, tokens: &[String]) {
        if self.n == 0 {
            return;
        }
        for w in tokens.windows(self.n) {
            *self.counts.entry(w.to_vec()).or_default() += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }
}

/// `exp` of the mean negative log-likelihood (nats) per token.
pub fn perplexity_from_nll(token_nll: &[f64]) -> Result<f64> {
    if token_nll.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let mean = token_nll.iter().sum::<f64>() / token_nll.len() as f64;
    Ok(libm::exp(mean))
}

/// Every score for one generated corpus. Rates are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ppl: Option<f64>,
    pub rouge_1: RougeScore,
    pub rouge_2: RougeScore,
    pub rouge_l: RougeScore,
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub lr_2: f64,
    pub d_4: f64,
    pub intra_repetition: Vec<f64>,
    pub intra_repetition_aggregate: f64,
    /// Keyed by embedding-table name.
    pub intra_coherence: BTreeMap<String, EmbeddingScore>,
    pub intra_relevance: BTreeMap<String, EmbeddingScore>,
}

/// One generated story with its reference and leading context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoryTriple<'a> {
    pub leading: &'a str,
    pub generated: &'a str,
    pub reference: &'a str,
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub bleu_smoothing: bool,
    pub rouge_l_beta: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            bleu_smoothing: true,
            rouge_l_beta: 1.0,
        }
    }
}

impl MetricReport {
    pub fn compute(
        stories: &[StoryTriple<'_>],
        ppl: Option<f64>,
        tables: &[(&str, &crate::corpus::EmbeddingTable)],
        opts: &ReportOptions,
    ) -> Result<Self> {
        let cands: Vec<Vec<String>> = stories.iter().map(|s| tokenize(s.generated)).collect();
        let refs: Vec<Vec<String>> = stories.iter().map(|s| tokenize(s.reference)).collect();
        let split: Vec<Vec<String>> = stories
            .iter()
            .map(|s| {
                let mut v = alloc::vec![String::from(s.leading)];
                v.extend(crate::corpus::split_sentences(s.generated));
                v
            })
            .collect();

        let reps: Vec<IntraRepetition> = split.iter().map(|s| intra_story_repetition(s)).collect();
        let mut coherence = BTreeMap::new();
        let mut relevance = BTreeMap::new();
        for (name, table) in tables {
            let coh: Vec<EmbeddingScore> = split
                .iter()
                .map(|s| intra_story_coherence(&s[1..], table))
                .collect();
            let rel: Vec<EmbeddingScore> = split
                .iter()
                .map(|s| intra_story_relevance(&s[0], &s[1..], table))
                .collect();
            coherence.insert(String::from(*name), EmbeddingScore::mean_of(&coh));
            relevance.insert(String::from(*name), EmbeddingScore::mean_of(&rel));
        }
        Ok(MetricReport {
            ppl,
            rouge_1: rouge_n(&cands, &refs, 1)?,
            rouge_2: rouge_n(&cands, &refs, 2)?,
            rouge_l: rouge_l(&cands, &refs, opts.rouge_l_beta)?,
            bleu_1: bleu(&cands, &refs, 1, opts.bleu_smoothing)?,
            bleu_2: bleu(&cands, &refs, 2, opts.bleu_smoothing)?,
            lr_2: lexical_repetition(&cands, 2)?,
            d_4: distinct_n(&cands, 4).unwrap_or(0.0),
            intra_repetition: repetition_by_index(&reps),
            intra_repetition_aggregate: mean(reps.iter().map(|r| r.aggregate)),
            intra_coherence: coherence,
            intra_relevance: relevance,
        })
    }
}

pub(crate) fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
