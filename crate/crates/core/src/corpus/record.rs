use alloc::string::String;
use alloc::vec::Vec;

use super::{
    annotate_similarity, delexicalize, delexicalize_story, split_story, BpeVocab, CorpusError,
    EmbeddingTable, NameLexicon, Result, StoryRecord,
};

/// Picks the event slots of the reference sentences of a story with `raw`
/// sentences. `events` may cover the whole story (the leading sentence's
/// slot is dropped) or only the reference; anything else is an error.
pub fn align_events(
    story_id: &str,
    raw: usize,
    events: &[Option<String>],
) -> Result<Vec<Option<String>>> {
    let (_, m) = reference_span(raw)?;
    let offset = if events.len() == raw {
        1
    } else if events.len() + 1 == raw {
        0
    } else {
        return Err(CorpusError::EventCount {
            story_id: story_id.into(),
            sentences: raw,
            events: events.len(),
        });
    };
    Ok(events[offset..offset + m].to_vec())
}

fn reference_span(raw: usize) -> Result<(usize, usize)> {
    if raw < 2 {
        return Err(CorpusError::TooShort(raw));
    }
    let kept = raw.min(super::MAX_STORY_SENTENCES);
    Ok((kept, kept - 1))
}

/// Builds the record of one raw story. Names are delexicalised in the text
/// and in the event surfaces; `table` must hold sentence embeddings for
/// indices `1..=m` of `story_id`.
pub fn build_record<S: AsRef<str>>(
    story_id: &str,
    raw: &[S],
    events: &[Option<String>],
    vocab: &BpeVocab,
    lexicon: &NameLexicon,
    table: &EmbeddingTable,
) -> Result<StoryRecord> {
    let events = align_events(story_id, raw.len(), events)?;
    let delex = delexicalize_story(raw, lexicon);
    let (leading, reference) = split_story(&delex)?;
    let record = StoryRecord {
        story_id: story_id.into(),
        context: vocab.encode(&leading),
        sentences: reference.iter().map(|s| vocab.encode(s)).collect(),
        events: events
            .into_iter()
            .map(|e| e.map(|s| delexicalize(&s, lexicon)))
            .collect(),
        sentence_embeddings: Vec::new(),
        sim: Vec::new(),
    };
    annotate_similarity(record, table)
}
