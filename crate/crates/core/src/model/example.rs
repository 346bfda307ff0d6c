use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{ModelConfig, ModelError, Result};
use crate::corpus::{insert_sep_tokens, BpeVocab, StoryRecord};
use crate::events::serialize_surfaces;

/// A record turned into model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub story_id: String,
    /// Context-encoder input, `<bos> … <eos>`.
    pub context: Vec<u32>,
    /// Event-encoder input, `<e_s> … <e_e>`.
    pub events: Vec<u32>,
    /// Teacher-forced decoder input: `<bos>` then the target shifted right.
    pub input: Vec<u32>,
    /// `s1 [sep_1] … sm [sep_m] <eos>`.
    pub target: Vec<u32>,
    /// Decoder input positions holding `[sep_i]`, one per sentence.
    pub sep_positions: Vec<usize>,
    /// Row-major m×m ground-truth similarities.
    pub sim: Vec<f64>,
}

impl Example {
    pub fn m(&self) -> usize {
        self.sep_positions.len()
    }

    pub fn from_record(r: &StoryRecord, vocab: &BpeVocab, cfg: &ModelConfig) -> Result<Self> {
        if vocab.len() > cfg.vocab_size {
            return Err(ModelError::Config(alloc::format!(
                "tokenizer has {} entries but vocab_size is {}",
                vocab.len(),
                cfg.vocab_size
            )));
        }
        let ids = vocab.special_ids();
        let (context, events) = encoder_inputs(&r.context, &r.events, vocab, cfg);
        let target = insert_sep_tokens(&r.sentences, &ids)?;
        let mut input = vec![ids.bos];
        input.extend_from_slice(&target[..target.len() - 1]);
        let sep_positions = input
            .iter()
            .enumerate()
            .filter(|(_, t)| ids.sep.contains(t))
            .map(|(i, _)| i)
            .collect();
        Ok(Example {
            story_id: r.story_id.clone(),
            context,
            events,
            input,
            target,
            sep_positions,
            sim: r.sim.clone(),
        })
    }
}

/// Encoder inputs for a leading context (token ids) and an event plan,
/// honouring the leading/events ablations and combined-input donors.
pub fn encoder_inputs(
    context: &[u32],
    events: &[Option<String>],
    vocab: &BpeVocab,
    cfg: &ModelConfig,
) -> (Vec<u32>, Vec<u32>) {
    let ids = vocab.special_ids();
    let event_ids = if cfg.use_events {
        vocab.encode(&serialize_surfaces(events))
    } else {
        vec![ids.e_s, ids.e_e]
    };
    let mut c = vec![ids.bos];
    if cfg.use_leading {
        c.extend_from_slice(context);
    }
    if cfg.combined_input {
        c.extend_from_slice(&event_ids);
    }
    c.push(ids.eos);
    (c, event_ids)
}
