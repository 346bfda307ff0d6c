use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

/// Fixed special tokens, in id order. `[sep_1..sep_K]` follow them.
pub const SPECIAL_TOKENS: &[&str] = &[
    "<pad>",
    "<bos>",
    "<eos>",
    "<unk>",
    "<e_s>",
    "<e_sep>",
    "<e_e>",
    "<e_none>",
    "[MALE]",
    "[FEMALE]",
    "[NEUTRAL]",
];

/// Ids of the tokens the model treats specially.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: u32,
    pub bos: u32,
    pub eos: u32,
    pub unk: u32,
    pub e_s: u32,
    pub e_sep: u32,
    pub e_e: u32,
    pub e_none: u32,
    /// `sep[i]` is the id of `[sep_{i+1}]`.
    pub sep: Vec<u32>,
}

/// Byte-pair vocabulary over characters: specials, then the sorted base
/// alphabet, then one token per merge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "BpeParts", try_from = "BpeParts")]
pub struct BpeVocab {
    sep_count: usize,
    alphabet: Vec<char>,
    merges: Vec<(String, String)>,
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
    ranks: BTreeMap<(String, String), usize>,
    specials: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct BpeParts {
    sep_count: usize,
    alphabet: String,
    merges: Vec<(String, String)>,
}

impl From<BpeVocab> for BpeParts {
    fn from(v: BpeVocab) -> Self {
        BpeParts {
            sep_count: v.sep_count,
            alphabet: v.alphabet.iter().collect(),
            merges: v.merges,
        }
    }
}

impl TryFrom<BpeParts> for BpeVocab {
    type Error = String;

    fn try_from(p: BpeParts) -> core::result::Result<Self, String> {
        let alphabet: Vec<char> = p.alphabet.chars().collect();
        if alphabet.windows(2).any(|w| w[0] >= w[1]) {
            return Err("alphabet must be sorted and free of duplicates".into());
        }
        let mut v = BpeVocab::from_alphabet(&alphabet, p.sep_count);
        for (a, b) in p.merges {
            if !v.index.contains_key(&a) || !v.index.contains_key(&b) {
                return Err(format!("merge ({a:?}, {b:?}) uses an unknown token"));
            }
            v.push_merge(a, b);
        }
        Ok(v)
    }
}

impl BpeVocab {
    /// A merge-free vocabulary over `alphabet` with `sep_count` sentence
    /// separators.
    pub fn from_alphabet(alphabet: &[char], sep_count: usize) -> Self {
        let mut alphabet = alphabet.to_vec();
        alphabet.sort_unstable();
        alphabet.dedup();
        let specials: Vec<String> = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain((1..=sep_count).map(|i| format!("[sep_{i}]")))
            .collect();
        let mut v = BpeVocab {
            sep_count,
            alphabet: alphabet.clone(),
            merges: Vec::new(),
            tokens: Vec::new(),
            index: BTreeMap::new(),
            ranks: BTreeMap::new(),
            specials: specials.clone(),
        };
        for s in specials {
            v.push_token(s);
        }
        for c in alphabet {
            v.push_token(c.to_string());
        }
        v
    }

    fn push_token(&mut self, s: String) {
        if !self.index.contains_key(&s) {
            self.index.insert(s.clone(), self.tokens.len() as u32);
            self.tokens.push(s);
        }
    }

    fn push_merge(&mut self, a: String, b: String) {
        let joined = format!("{a}{b}");
        self.ranks.insert((a.clone(), b.clone()), self.merges.len());
        self.merges.push((a, b));
        self.push_token(joined);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn sep_count(&self) -> usize {
        self.sep_count
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < self.specials.len()
    }

    pub fn special_ids(&self) -> SpecialIds {
        let id = |s: &str| self.index[s];
        SpecialIds {
            pad: id("<pad>"),
            bos: id("<bos>"),
            eos: id("<eos>"),
            unk: id("<unk>"),
            e_s: id("<e_s>"),
            e_sep: id("<e_sep>"),
            e_e: id("<e_e>"),
            e_none: id("<e_none>"),
            sep: (1..=self.sep_count)
                .map(|i| id(&format!("[sep_{i}]")))
                .collect(),
        }
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for (piece, special) in split_specials(text, &self.specials) {
            if special {
                out.push(self.index[piece]);
                continue;
            }
            for chunk in pretokenize(piece) {
                self.encode_chunk(chunk, &mut out);
            }
        }
        out
    }

    fn encode_chunk(&self, chunk: &str, out: &mut Vec<u32>) {
        let mut symbols: Vec<String> = chunk.chars().map(|c| c.to_string()).collect();
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    self.ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|&r| (r, i))
                })
                .min();
            let Some((_, i)) = best else { break };
            let right = symbols.remove(i + 1);
            symbols[i].push_str(&right);
        }
        let unk = self.index["<unk>"];
        out.extend(
            symbols
                .iter()
                .map(|s| self.index.get(s).copied().unwrap_or(unk)),
        );
    }

    /// Concatenates token strings; specials render literally.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or("<unk>"))
            .collect()
    }

    pub fn try_decode(&self, ids: &[u32]) -> Result<String> {
        ids.iter()
            .map(|&id| self.token(id).ok_or(CorpusError::UnknownId(id)))
            .collect()
    }
}

/// Splits out occurrences of the special-token strings, longest first at
/// each position.
fn split_specials<'a>(text: &'a str, specials: &[String]) -> Vec<(&'a str, bool)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < text.len() {
        if text.as_bytes()[i] == b'<' || text.as_bytes()[i] == b'[' {
            let hit = specials
                .iter()
                .filter(|s| text[i..].starts_with(s.as_str()))
                .max_by_key(|s| s.len());
            if let Some(s) = hit {
                if start < i {
                    out.push((&text[start..i], false));
                }
                out.push((&text[i..i + s.len()], true));
                i += s.len();
                start = i;
                continue;
            }
        }
        i += text[i..].chars().next().map_or(1, char::len_utf8);
    }
    if start < text.len() {
        out.push((&text[start..], false));
    }
    out
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum Class {
    Space,
    Alnum,
    Punct,
}

fn class(c: char) -> Class {
    if c.is_whitespace() {
        Class::Space
    } else if c.is_alphanumeric() {
        Class::Alnum
    } else {
        Class::Punct
    }
}

/// Merge boundaries: a run of letters/digits or of punctuation, optionally
/// carrying one leading space; leftover whitespace stands alone.
fn pretokenize(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = chars[i].0;
        let mut j = i;
        if chars[i].1 == ' ' && i + 1 < chars.len() && class(chars[i + 1].1) != Class::Space {
            j += 1;
        }
        let cls = class(chars[j].1);
        j += 1;
        while j < chars.len() && class(chars[j].1) == cls {
            if cls == Class::Space
                && j + 1 < chars.len()
                && chars[j].1 == ' '
                && class(chars[j + 1].1) != Class::Space
            {
                break;
            }
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
        out.push(&text[start..end]);
        i = j;
    }
    out
}

/// Greedy BPE: repeatedly merges the most frequent adjacent pair
/// (lexicographically smallest on ties) until the vocabulary reaches
/// `target_size` or no pair occurs twice.
pub fn train_bpe<'a, I>(corpus: I, target_size: usize, sep_count: usize) -> Result<BpeVocab>
where
    I: IntoIterator<Item = &'a str>,
{
    let specials: Vec<String> = BpeVocab::from_alphabet(&[], sep_count).specials;
    let mut words: BTreeMap<String, u64> = BTreeMap::new();
    let mut alphabet: BTreeSet<char> = BTreeSet::new();
    for text in corpus {
        for (piece, special) in split_specials(text, &specials) {
            if special {
                continue;
            }
            for chunk in pretokenize(piece) {
                alphabet.extend(chunk.chars());
                *words.entry(chunk.to_string()).or_default() += 1;
            }
        }
    }
    if alphabet.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let alphabet: Vec<char> = alphabet.into_iter().collect();
    let mut vocab = BpeVocab::from_alphabet(&alphabet, sep_count);
    if target_size <= vocab.len() {
        return Err(CorpusError::TargetTooSmall {
            target: target_size,
            base: vocab.len(),
        });
    }

    let mut segmented: Vec<(Vec<String>, u64)> = words
        .into_iter()
        .map(|(w, n)| (w.chars().map(|c| c.to_string()).collect(), n))
        .collect();
    while vocab.len() < target_size {
        let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (syms, n) in &segmented {
            for w in syms.windows(2) {
                *counts.entry((&w[0], &w[1])).or_default() += n;
            }
        }
        // BTreeMap iterates in lexicographic order, so the first maximum wins ties
        let mut best: Option<((&str, &str), u64)> = None;
        for (&pair, &n) in &counts {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((pair, n));
            }
        }
        let Some(((a, b), n)) = best else { break };
        if n < 2 {
            break;
        }
        let (a, b) = (a.to_string(), b.to_string());
        for (syms, _) in &mut segmented {
            let mut k = 0;
            while k + 1 < syms.len() {
                if syms[k] == a && syms[k + 1] == b {
                    let right = syms.remove(k + 1);
                    syms[k].push_str(&right);
                }
                k += 1;
            }
        }
        vocab.push_merge(a, b);
    }
    Ok(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn pretokenizer_chunks() {
        assert_eq!(
            pretokenize("He ran, fast!"),
            vec!["He", " ran", ",", " fast", "!"]
        );
        assert_eq!(pretokenize("a  b"), vec!["a", " ", " b"]);
        assert_eq!(pretokenize(" x "), vec![" x", " "]);
    }

    #[test]
    fn aaaa_merges_aa_first() {
        let v = train_bpe(["aaaa"], 11 + 10 + 1 + 1, 10).unwrap();
        assert_eq!(v.merges(), &[("a".to_string(), "a".to_string())]);
        assert_eq!(v.encode("aaaa"), vec![v.id("aa").unwrap(); 2]);
    }

    /// Independent re-count: every pass rescans whole words as strings.
    fn oracle_merges(words: &[(&str, u64)], rounds: usize) -> Vec<(String, String)> {
        let mut segs: Vec<(Vec<String>, u64)> = words
            .iter()
            .map(|(w, n)| (w.chars().map(|c| c.to_string()).collect(), *n))
            .collect();
        let mut merges = Vec::new();
        for _ in 0..rounds {
            let mut pairs: Vec<(String, String)> = Vec::new();
            for (s, _) in &segs {
                for w in s.windows(2) {
                    pairs.push((w[0].clone(), w[1].clone()));
                }
            }
            pairs.sort();
            pairs.dedup();
            let count = |p: &(String, String)| -> u64 {
                segs.iter()
                    .map(|(s, n)| {
                        s.windows(2).filter(|w| w[0] == p.0 && w[1] == p.1).count() as u64 * n
                    })
                    .sum()
            };
            let Some(best) = pairs
                .iter()
                .max_by(|x, y| count(x).cmp(&count(y)).then(y.cmp(x)))
            else {
                break;
            };
            if count(best) < 2 {
                break;
            }
            let best = best.clone();
            for (s, _) in &mut segs {
                let mut out: Vec<String> = Vec::new();
                let mut k = 0;
                while k < s.len() {
                    if k + 1 < s.len() && s[k] == best.0 && s[k + 1] == best.1 {
                        out.push(format!("{}{}", s[k], s[k + 1]));
                        k += 2;
                    } else {
                        out.push(s[k].clone());
                        k += 1;
                    }
                }
                *s = out;
            }
            merges.push(best);
        }
        merges
    }

    #[test]
    fn three_word_corpus_matches_oracle() {
        let corpus = "low lower lowest low lower low";
        let v = train_bpe([corpus], 200, 2).unwrap();
        let oracle = oracle_merges(
            &[("low", 1), (" low", 2), (" lower", 2), (" lowest", 1)],
            100,
        );
        assert_eq!(v.merges(), oracle.as_slice());
    }

    #[test]
    fn specials_are_atomic() {
        let v = train_bpe(
            ["<e_s> missed dog <e_sep> sees dog <e_e> [MALE] ran"],
            80,
            3,
        )
        .unwrap();
        let ids = v.encode("<e_s> missed dog [sep_2]<eos>");
        let sp = v.special_ids();
        assert_eq!(ids[0], sp.e_s);
        assert_eq!(ids[ids.len() - 2], sp.sep[1]);
        assert_eq!(*ids.last().unwrap(), sp.eos);
        assert!(v
            .tokens
            .iter()
            .skip(v.specials.len())
            .all(|t| !v.specials.contains(t)));
        assert_eq!(v.encode("zq"), vec![sp.unk, sp.unk]);
    }

    #[test]
    fn errors() {
        assert_eq!(train_bpe([""], 100, 1), Err(CorpusError::EmptyCorpus));
        assert!(matches!(
            train_bpe(["ab"], 5, 1),
            Err(CorpusError::TargetTooSmall { .. })
        ));
    }

    #[test]
    fn serde_round_trip_rebuilds_tables() {
        let v = train_bpe(["the cat sat on the mat"], 40, 4).unwrap();
        let parts = BpeParts::from(v.clone());
        let back = BpeVocab::try_from(parts).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(text in "[a-d ,.!]{0,40}", extra in "(<e_s>|<e_sep>|\\[sep_1\\]| ){0,3}") {
            let v = train_bpe(["abc abd cab a, b. d!"], 60, 2).unwrap();
            let s = format!("{text}{extra}{text}");
            let ids = v.encode(&s);
            prop_assert_eq!(v.decode(&ids), s);
            prop_assert_eq!(v.encode(&v.decode(&ids)), ids.clone());
            prop_assert!(ids.iter().all(|&i| (i as usize) < v.len()));
        }
    }
}
