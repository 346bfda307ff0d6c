use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{CorpusError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Gender {
    Male,
    Female,
    Neutral,
}

impl Gender {
    pub fn token(self) -> &'static str {
        match self {
            Gender::Male => "[MALE]",
            Gender::Female => "[FEMALE]",
            Gender::Neutral => "[NEUTRAL]",
        }
    }
}

/// Capitalised words that start sentences without being names.
const COMMON: &[&str] = &[
    "i",
    "a",
    "an",
    "the",
    "he",
    "she",
    "it",
    "they",
    "we",
    "you",
    "his",
    "her",
    "its",
    "their",
    "our",
    "my",
    "your",
    "this",
    "that",
    "these",
    "those",
    "there",
    "here",
    "then",
    "when",
    "after",
    "before",
    "one",
    "two",
    "three",
    "some",
    "all",
    "every",
    "each",
    "but",
    "and",
    "so",
    "or",
    "if",
    "as",
    "at",
    "in",
    "on",
    "of",
    "for",
    "with",
    "to",
    "from",
    "by",
    "today",
    "tomorrow",
    "yesterday",
    "now",
    "later",
    "soon",
    "once",
    "while",
    "since",
    "because",
    "although",
    "though",
    "what",
    "who",
    "why",
    "how",
    "where",
    "which",
    "yes",
    "no",
    "ok",
    "oh",
    "not",
    "also",
    "just",
    "still",
    "even",
    "next",
    "last",
    "first",
    "many",
    "most",
    "several",
    "both",
    "over",
    "during",
    "instead",
    "meanwhile",
    "please",
    "thanks",
    "hello",
    "hi",
    "well",
    "sadly",
    "luckily",
    "finally",
    "suddenly",
    "eventually",
    "unfortunately",
    "fortunately",
    "mom",
    "dad",
    "everyone",
    "everybody",
    "someone",
    "nobody",
    "nothing",
    "something",
    "everything",
    "let",
    "do",
    "did",
    "does",
    "is",
    "was",
    "are",
    "were",
    "can",
    "could",
    "will",
    "would",
    "should",
    "let's",
    "back",
    "soon",
    "unlike",
    "like",
    "whenever",
    "until",
    "again",
];

/// Gendered first names, one `name<TAB>M|F|N` entry per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameLexicon {
    names: BTreeMap<String, Gender>,
}

impl NameLexicon {
    pub fn parse(text: &str) -> Result<Self> {
        let mut names = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || CorpusError::Lexicon {
                line: i + 1,
                text: line.to_string(),
            };
            let (name, g) = line.split_once('\t').ok_or_else(bad)?;
            let gender = match g.trim() {
                "M" => Gender::Male,
                "F" => Gender::Female,
                "N" => Gender::Neutral,
                _ => return Err(bad()),
            };
            names.insert(name.trim().to_string(), gender);
        }
        Ok(NameLexicon { names })
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(include_str!("../../data/names.tsv")).expect("bundled lexicon parses")
    }

    pub fn insert(&mut self, name: &str, gender: Gender) {
        self.names.insert(name.to_string(), gender);
    }

    pub fn get(&self, name: &str) -> Option<Gender> {
        self.names.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Piece {
    Word {
        start: usize,
        end: usize,
        initial: bool,
    },
    Other,
}

/// Word spans of `text`. Bracketed placeholders such as `[MALE]` count as a
/// single non-word token so a second pass leaves them alone.
fn pieces(text: &str) -> Vec<Piece> {
    let mut out = Vec::new();
    let mut initial = true;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c == '[' {
            if let Some(close) = text[i..].find(']') {
                let inner = &text[i + 1..i + close];
                if !inner.is_empty() && !inner.contains(char::is_whitespace) {
                    while iter.peek().is_some_and(|&(j, _)| j <= i + close) {
                        iter.next();
                    }
                    out.push(Piece::Other);
                    initial = false;
                    continue;
                }
            }
        }
        if c.is_alphabetic() {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = iter.peek() {
                if !d.is_alphabetic() {
                    break;
                }
                end = j + d.len_utf8();
                iter.next();
            }
            out.push(Piece::Word {
                start: i,
                end,
                initial,
            });
            initial = false;
        } else if matches!(c, '.' | '!' | '?') {
            initial = true;
        } else if c.is_numeric() {
            initial = false;
        }
    }
    out
}

fn capitalised(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

fn looks_common(word: &str) -> bool {
    let lower = word.to_lowercase();
    COMMON.contains(&lower.as_str()) || ["ly", "ing", "ed"].iter().any(|s| lower.ends_with(s))
}

/// Replaces names in every sentence of one story. A word judged to be a
/// name anywhere in the story is replaced at all of its capitalised
/// occurrences.
pub fn delexicalize_story<S: AsRef<str>>(sentences: &[S], lexicon: &NameLexicon) -> Vec<String> {
    let parsed: Vec<Vec<Piece>> = sentences.iter().map(|s| pieces(s.as_ref())).collect();
    let words = || {
        sentences.iter().zip(&parsed).flat_map(|(s, ps)| {
            ps.iter().filter_map(move |p| match *p {
                Piece::Word {
                    start,
                    end,
                    initial,
                } => Some((&s.as_ref()[start..end], initial)),
                Piece::Other => None,
            })
        })
    };
    let lowercase_seen: BTreeSet<&str> = words()
        .map(|(w, _)| w)
        .filter(|w| !capitalised(w))
        .collect();

    let mut names: BTreeMap<&str, Gender> = BTreeMap::new();
    for (w, initial) in words() {
        if !capitalised(w) {
            continue;
        }
        let gender = if let Some(g) = lexicon.get(w) {
            Some(g)
        } else if COMMON.contains(&w.to_lowercase().as_str()) {
            None
        } else if !initial {
            Some(Gender::Neutral)
        } else if looks_common(w) || lowercase_seen.contains(w.to_lowercase().as_str()) {
            None
        } else {
            Some(Gender::Neutral)
        };
        if let Some(g) = gender {
            names.entry(w).or_insert(g);
        }
    }

    sentences
        .iter()
        .zip(&parsed)
        .map(|(s, ps)| {
            let s = s.as_ref();
            let mut out = String::with_capacity(s.len());
            let mut last = 0;
            for p in ps {
                if let Piece::Word { start, end, .. } = *p {
                    if let Some(g) = names.get(&s[start..end]) {
                        out.push_str(&s[last..start]);
                        out.push_str(g.token());
                        last = end;
                    }
                }
            }
            out.push_str(&s[last..]);
            out
        })
        .collect()
}

/// Delexicalises `text` as a one-sentence story.
pub fn delexicalize(text: &str, lexicon: &NameLexicon) -> String {
    delexicalize_story(&[text], lexicon)
        .pop()
        .unwrap_or_default()
}
