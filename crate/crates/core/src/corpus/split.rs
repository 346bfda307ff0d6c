use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{CorpusError, Result};

/// Long stories are cut to this many sentences before the leading split.
pub const MAX_STORY_SENTENCES: usize = 11;
/// Post-training window: one leading sentence plus ten targets.
pub const WINDOW: usize = 11;

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "prof", "mt", "vs", "etc", "e.g", "i.e", "a.m",
    "p.m", "u.s", "no", "inc", "ltd", "co", "ave", "gen", "capt", "lt", "sgt", "rev", "fig",
];

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']'];

/// First sentence becomes the leading context, the rest the reference.
pub fn split_story<S: AsRef<str>>(raw: &[S]) -> Result<(String, Vec<String>)> {
    if raw.len() < 2 {
        return Err(CorpusError::TooShort(raw.len()));
    }
    let kept = &raw[..raw.len().min(MAX_STORY_SENTENCES)];
    Ok((
        kept[0].as_ref().to_string(),
        kept[1..].iter().map(|s| s.as_ref().to_string()).collect(),
    ))
}

/// Non-overlapping 11-sentence windows as (leading, targets). A shorter
/// tail is kept when it still has a leading sentence and one target.
pub fn segment_for_posttraining<S: AsRef<str>>(raw: &[S]) -> Vec<(String, Vec<String>)> {
    raw.chunks(WINDOW)
        .filter(|w| w.len() >= 2)
        .map(|w| {
            (
                w[0].as_ref().to_string(),
                w[1..].iter().map(|s| s.as_ref().to_string()).collect(),
            )
        })
        .collect()
}

/// Splits running text after `.`, `!` or `?` (plus any closing quotes or
/// brackets) when followed by whitespace, except after known abbreviations
/// and single-letter initials.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && matches!(chars[j + 1].1, '.' | '!' | '?') {
            j += 1;
        }
        while j + 1 < chars.len() && CLOSERS.contains(&chars[j + 1].1) {
            j += 1;
        }
        let at_break = j + 1 == chars.len() || chars[j + 1].1.is_whitespace();
        if at_break && !(c == '.' && j == i && is_abbreviation(&text[start..chars[i].0])) {
            let end = chars.get(j + 1).map_or(text.len(), |&(b, _)| b);
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
        i = j + 1;
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

fn is_abbreviation(before_period: &str) -> bool {
    let word = before_period
        .rsplit(|c: char| c.is_whitespace() || c == '(' || c == '"')
        .next()
        .unwrap_or("");
    let mut letters = word.chars();
    if let (Some(c), None) = (letters.next(), letters.next()) {
        return c.is_uppercase();
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn numbered(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}.")).collect()
    }

    #[test]
    fn story_split() {
        let (c, r) = split_story(&numbered(5)).unwrap();
        assert_eq!(c, "s0.");
        assert_eq!(r.len(), 4);
        assert_eq!(split_story(&numbered(2)).unwrap().1.len(), 1);
        let (_, r) = split_story(&numbered(14)).unwrap();
        assert_eq!(r.len(), 10);
        assert_eq!(r.last().unwrap(), "s10.");
        assert_eq!(split_story(&numbered(1)), Err(CorpusError::TooShort(1)));
    }

    #[test]
    fn posttraining_windows() {
        let shape = |n| {
            segment_for_posttraining(&numbered(n))
                .iter()
                .map(|(_, t)| t.len())
                .collect::<Vec<_>>()
        };
        assert_eq!(shape(22), vec![10, 10]);
        assert_eq!(shape(11), vec![10]);
        assert_eq!(shape(13), vec![10, 1]);
        assert_eq!(shape(12), vec![10]);
        assert!(shape(0).is_empty());
    }

    #[test]
    fn sentence_splitter() {
        assert_eq!(
            split_sentences("Mr. Smith went home. He slept!  Then? \"Yes.\" Fine"),
            vec![
                "Mr. Smith went home.",
                "He slept!",
                "Then?",
                "\"Yes.\"",
                "Fine"
            ]
        );
        assert_eq!(
            split_sentences("J. R. wrote it... Really."),
            vec!["J. R. wrote it...", "Really."]
        );
        assert_eq!(
            split_sentences("It cost 3.50 today."),
            vec!["It cost 3.50 today."]
        );
        assert!(split_sentences("   ").is_empty());
    }

    proptest! {
        #[test]
        fn segmentation_conserves_sentences(n in 0usize..60) {
            let raw = numbered(n);
            let windows = segment_for_posttraining(&raw);
            let mut flat = Vec::new();
            for (c, t) in &windows {
                flat.push(c.clone());
                flat.extend(t.iter().cloned());
            }
            let dropped = if n % WINDOW == 1 { 1 } else { 0 };
            flat.extend(raw[raw.len() - dropped..].iter().cloned());
            prop_assert_eq!(flat, raw);
        }
    }
}
