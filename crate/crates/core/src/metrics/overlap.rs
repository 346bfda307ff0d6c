use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{mean, MetricError, NGramCounts, Result};

fn check_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(MetricError::InvalidN { n, min });
    }
    Ok(())
}

fn check_pairs(c: &[Vec<String>], r: &[Vec<String>]) -> Result<()> {
    if c.len() != r.len() {
        return Err(MetricError::LengthMismatch {
            candidates: c.len(),
            references: r.len(),
        });
    }
    Ok(())
}

fn clipped_overlap(cand: &NGramCounts, reference: &NGramCounts) -> usize {
    cand.counts
        .iter()
        .map(|(g, &c)| c.min(reference.get(g)))
        .sum()
}

/// Corpus BLEU with uniform weights up to order `n` and brevity penalty.
/// With `smoothing`, a zero match count at order > 1 becomes (0+1)/(total+1).
pub fn bleu(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    n: usize,
    smoothing: bool,
) -> Result<f64> {
    check_n(n, 1)?;
    check_pairs(candidates, references)?;
    let cand_len: usize = candidates.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let (mut matched, mut total) = (0usize, 0usize);
        for (c, r) in candidates.iter().zip(references) {
            let cc = NGramCounts::of(c, k);
            matched += clipped_overlap(&cc, &NGramCounts::of(r, k));
            total += cc.total();
        }
        let p = if matched == 0 && smoothing && k > 1 {
            1.0 / (total as f64 + 1.0)
        } else if total == 0 {
            0.0
        } else {
            matched as f64 / total as f64
        };
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += libm::log(p);
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        libm::exp(1.0 - ref_len as f64 / cand_len as f64)
    };
    Ok(bp * libm::exp(log_sum / n as f64))
}

/// Recall, precision and F-measure; `f1` is the headline value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(overlap: usize, cand: usize, reference: usize, beta: f64) -> Self {
        let ratio = |num: usize, den: usize| match (num, den) {
            (_, 0) => f64::from(u8::from(cand == reference)),
            _ => num as f64 / den as f64,
        };
        let recall = ratio(overlap, reference);
        let precision = ratio(overlap, cand);
        let b2 = beta * beta;
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            (1.0 + b2) * recall * precision / (recall + b2 * precision)
        };
        RougeScore {
            recall,
            precision,
            f1,
        }
    }

    fn mean(scores: &[RougeScore]) -> Self {
        RougeScore {
            recall: mean(scores.iter().map(|s| s.recall)),
            precision: mean(scores.iter().map(|s| s.precision)),
            f1: mean(scores.iter().map(|s| s.f1)),
        }
    }
}

/// Clipped n-gram overlap per pair, averaged over the corpus.
pub fn rouge_n(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    n: usize,
) -> Result<RougeScore> {
    check_n(n, 1)?;
    check_pairs(candidates, references)?;
    let scores: Vec<RougeScore> = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| {
            let (cc, rc) = (NGramCounts::of(c, n), NGramCounts::of(r, n));
            RougeScore::from_counts(clipped_overlap(&cc, &rc), cc.total(), rc.total(), 1.0)
        })
        .collect();
    Ok(RougeScore::mean(&scores))
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut row = alloc::vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Longest-common-subsequence F-measure; `beta > 1` weights recall.
pub fn rouge_l(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    beta: f64,
) -> Result<RougeScore> {
    check_pairs(candidates, references)?;
    let scores: Vec<RougeScore> = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| RougeScore::from_counts(lcs(c, r), c.len(), r.len(), beta))
        .collect();
    Ok(RougeScore::mean(&scores))
}

/// Unique over total n-grams across the whole corpus.
pub fn distinct_n(candidates: &[Vec<String>], n: usize) -> Result<f64> {
    check_n(n, 1)?;
    let mut all = NGramCounts {
        n,
        ..Default::default()
    };
    for c in candidates {
        all.add(c);
    }
    if all.total() == 0 {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(all.distinct() as f64 / all.total() as f64)
}

/// Fraction of stories in which some 4-gram occurs at least `n` times.
pub fn lexical_repetition(candidates: &[Vec<String>], n: usize) -> Result<f64> {
    check_n(n, 2)?;
    Ok(mean(candidates.iter().map(|c| {
        let grams = NGramCounts::of(c, 4);
        f64::from(u8::from(grams.counts.values().any(|&k| k >= n)))
    })))
}
