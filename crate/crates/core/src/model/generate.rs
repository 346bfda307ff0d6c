use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{encoder_inputs, sample_token, Model, Result, Strategy};
use crate::corpus::{BpeVocab, SPECIAL_TOKENS};
use crate::tensor::seeded_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub strategy: Strategy,
    /// Cap on generated tokens, `<eos>` included.
    pub max_len: usize,
    pub seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            strategy: Strategy::Nucleus(0.9),
            max_len: 200,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    /// Sampled ids, without the leading `<bos>`.
    pub ids: Vec<u32>,
    /// Story text with structural tokens removed.
    pub text: String,
    pub hit_eos: bool,
    /// Set when the model has never taken an optimiser step.
    pub untrained: bool,
}

/// Removes every structural special token from `text`, repeating until
/// none is left. Gender placeholders are part of the story and stay.
pub fn strip_special_text(text: &str, sep_count: usize) -> String {
    let mut needles: Vec<String> = SPECIAL_TOKENS
        .iter()
        .filter(|t| t.starts_with('<'))
        .map(|t| String::from(*t))
        .collect();
    needles.extend((1..=sep_count).map(|i| alloc::format!("[sep_{i}]")));
    let mut out = String::from(text);
    loop {
        let before = out.len();
        for n in &needles {
            out = out.replace(n.as_str(), "");
        }
        if out.len() == before {
            return out;
        }
    }
}

/// Autoregressive story generation from a leading context and an event
/// plan. The encoders run once; the decoder re-reads the whole prefix at
/// every step.
pub fn generate(
    model: &Model,
    vocab: &BpeVocab,
    leading: &str,
    events: &[Option<String>],
    opts: &GenerateOptions,
) -> Result<Generated> {
    let ids = vocab.special_ids();
    let (context, event_ids) = encoder_inputs(&vocab.encode(leading), events, vocab, &model.config);
    let cap = opts.max_len.min(model.config.max_positions);
    let mut rng = seeded_rng(opts.seed);
    let (out, hit_eos) = model.run(None, |f| {
        let fv = f.fuse(&context, &event_ids)?;
        let mark = f.tape.len();
        let mut prefix = vec![ids.bos];
        let mut hit = false;
        while prefix.len() <= cap {
            let h = f.decode(&prefix, fv.f_h)?;
            let logits = f.logits(h)?;
            let v = f.cfg.vocab_size;
            let mut probs = f.tape.value(logits)[(prefix.len() - 1) * v..].to_vec();
            f.tape.truncate(mark);
            softmax(&mut probs);
            let next = sample_token(&probs, opts.strategy, &mut rng)? as u32;
            prefix.push(next);
            if next == ids.eos {
                hit = true;
                break;
            }
        }
        Ok((prefix.split_off(1), hit))
    })?;
    let structural: Vec<u32> = (0..vocab.len() as u32)
        .filter(|&i| {
            vocab.is_special(i)
                && vocab.token(i).is_some_and(|t| {
                    !t.starts_with("[M") && !t.starts_with("[F") && !t.starts_with("[N")
                })
        })
        .collect();
    // Structural tokens mark sentence boundaries; each run decodes on its own.
    let pieces: Vec<String> = out
        .split(|i| structural.contains(i))
        .map(|run| String::from(strip_special_text(&vocab.decode(run), vocab.sep_count()).trim()))
        .filter(|s| !s.is_empty())
        .collect();
    let text = pieces.join(" ");
    Ok(Generated {
        ids: out,
        text,
        hit_eos,
        untrained: model.trained_steps == 0,
    })
}

fn softmax(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = libm::exp(*x - max);
        sum += *x;
    }
    row.iter_mut().for_each(|x| *x /= sum);
}
