use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use storyline_core::corpus::{BpeVocab, StoryRecord};
use storyline_core::events::{parse_serialized, serialize_surfaces};

/// A record as stored in `*.records.jsonl`. `sim` is the row-major m×m
/// matrix as little-endian f32 values, base64-encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub story_id: String,
    /// Decoded leading context, for reading and evaluation.
    pub leading: String,
    /// Decoded reference sentences.
    pub reference: Vec<String>,
    pub context: Vec<u32>,
    pub sentences: Vec<Vec<u32>>,
    pub events: String,
    pub m: usize,
    pub sim: String,
}

pub fn encode_sim(sim: &[f64]) -> String {
    let bytes: Vec<u8> = sim.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_sim(text: &str, m: usize) -> Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| format!("sim: {e}"))?;
    if bytes.len() != m * m * 4 {
        return Err(format!(
            "sim: {} bytes for m = {m}, expected {}",
            bytes.len(),
            m * m * 4
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

impl RecordLine {
    pub fn from_record(r: &StoryRecord, vocab: &BpeVocab) -> Self {
        RecordLine {
            story_id: r.story_id.clone(),
            leading: vocab.decode(&r.context),
            reference: r.sentences.iter().map(|s| vocab.decode(s)).collect(),
            context: r.context.clone(),
            sentences: r.sentences.clone(),
            events: serialize_surfaces(&r.events),
            m: r.m(),
            sim: encode_sim(&r.sim),
        }
    }

    pub fn to_record(&self) -> Result<StoryRecord, String> {
        if self.sentences.len() != self.m {
            return Err(format!(
                "m = {} but {} sentences",
                self.m,
                self.sentences.len()
            ));
        }
        let events =
            parse_serialized(&self.events).ok_or("events: not a serialised event sequence")?;
        if events.len() != self.m {
            return Err(format!(
                "{} event slots for {} sentences",
                events.len(),
                self.m
            ));
        }
        Ok(StoryRecord {
            story_id: self.story_id.clone(),
            context: self.context.clone(),
            sentences: self.sentences.clone(),
            events,
            sentence_embeddings: Vec::new(),
            sim: decode_sim(&self.sim, self.m)?,
        })
    }

    /// The reference story as one text.
    pub fn reference_text(&self) -> String {
        self.reference.join(" ")
    }
}
