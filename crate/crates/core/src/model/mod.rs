//! The fusion story model: two transformer encoders, cross-attention
//! contextualising, an autoregressive decoder and a sentence-similarity head.

mod config;
mod example;
mod forward;
mod generate;
mod params;
mod sample;
mod train;
mod transfer;

use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::tensor::{ParamStore, Tape, Tensor, TensorError};
use forward::Fwd;
use params::Layout;

pub use config::{Ablation, ModelConfig, SentLoss};
pub use example::{encoder_inputs, Example};
pub use generate::{generate, strip_special_text, GenerateOptions, Generated};
pub use params::{CONTEXT_ENCODER, EVENT_ENCODER};
pub use sample::{sample_token, Strategy};
pub use train::{
    batch_gradients, compute_loss, evaluate_loss, posttrain, token_nll, train, LossBreakdown,
    StepLog, TrainConfig, TrainReport,
};
pub use transfer::transfer_encoder_weights;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds max_positions {max}")]
    Length { len: usize, max: usize },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("token id {id} outside a vocabulary of {vocab}")]
    TokenId { id: usize, vocab: usize },
    #[error("checkpoint does not fit the config: {0}")]
    Checkpoint(String),
    #[error("no training examples")]
    EmptyDataset,
    #[error("similarity target has {sim} entries for {m} separator states")]
    SimShape { sim: usize, m: usize },
    #[error("nucleus p must lie in (0, 1], got {0}")]
    InvalidP(f64),
    #[error("donor and target encoders differ: {0}")]
    Transfer(String),
}

pub type Result<T> = core::result::Result<T, ModelError>;

/// Parameters plus the configuration that shapes them.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    layout: Layout,
    /// Optimiser steps taken so far, across all training calls.
    pub trained_steps: u64,
    /// Checkpoint lineage, e.g. `ke` after post-training.
    pub lineage: Option<String>,
}

/// Every tensor of one fusion pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionTrace {
    pub f_c: Tensor,
    pub f_e: Tensor,
    /// Per-head attention weights `[|E|, |C|]`; empty when fusion is off.
    pub weights: Vec<Tensor>,
    /// Per-head outputs A_i `[|E|, d_k]`.
    pub heads: Vec<Tensor>,
    pub f_ca: Option<Tensor>,
    pub f_he: Tensor,
    pub f_h: Tensor,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = params::init_params(&config, seed);
        Self::from_params(config, params)
    }

    /// Wraps loaded parameters, which must match the config exactly.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        params::check_params(&config, &params)?;
        let layout = Layout::resolve(&config, &params);
        Ok(Model {
            config,
            params,
            layout,
            trained_steps: 0,
            lineage: None,
        })
    }

    /// Runs `f` on a fresh tape with every parameter bound.
    pub(crate) fn run<T>(
        &self,
        rng: Option<&mut dyn RngCore>,
        f: impl FnOnce(&mut Fwd<'_>) -> Result<T>,
    ) -> Result<T> {
        let mut tape = Tape::new();
        let vars = tape.bind_params(&self.params);
        let mut fwd = Fwd {
            tape: &mut tape,
            vars: &vars,
            layout: &self.layout,
            cfg: &self.config,
            rng: rng.map(|r| -> &mut dyn RngCore { r }),
            sim_evals: 0,
        };
        f(&mut fwd)
    }

    /// `(F_c, F_e)` from the two encoder stacks.
    pub fn encode(&self, context: &[u32], events: &[u32]) -> Result<(Tensor, Tensor)> {
        self.run(None, |f| {
            let c = f.encode_stack(&f.layout.enc_c, context)?;
            let e = f.encode_stack(&f.layout.enc_e, events)?;
            Ok((f.tape.tensor(c), f.tape.tensor(e)))
        })
    }

    /// Output of the stack named by `prefix` (`enc_c.` or `enc_e.`) applied
    /// to already-embedded input `x` of shape `[n, d]`.
    pub fn encoder_layers(&self, prefix: &str, x: &Tensor) -> Result<Tensor> {
        self.run(None, |f| {
            let stack = match prefix {
                CONTEXT_ENCODER => &f.layout.enc_c,
                EVENT_ENCODER => &f.layout.enc_e,
                _ => return Err(ModelError::Config(alloc::format!("no encoder {prefix}"))),
            };
            let xv = f.tape.constant(x);
            let out = f.encode_layers(stack, xv)?;
            Ok(f.tape.tensor(out))
        })
    }

    /// `F_ca` and the per-head attention weights, queries from `f_e` and
    /// keys/values from `f_c`.
    pub fn cross_attention_fuse(
        &self,
        f_c: &Tensor,
        f_e: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        self.run(None, |f| {
            let c = f.tape.constant(f_c);
            let e = f.tape.constant(f_e);
            let mut ws = Vec::new();
            let mut hs = Vec::new();
            let out = f.attention(f.layout.fuse, e, c, false, Some((&mut ws, &mut hs)))?;
            Ok((
                f.tape.tensor(out),
                ws.into_iter().map(|w| f.tape.tensor(w)).collect(),
            ))
        })
    }

    /// `F_h = Concat(F_c, F_e + β·F_ca)`; `F_he = F_e` when fusion is off.
    pub fn contextualize(&self, f_c: &Tensor, f_e: &Tensor, f_ca: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let c = tape.constant(f_c);
        let e = tape.constant(f_e);
        let he = if self.config.use_cm && self.config.beta != 0.0 {
            let a = tape.constant(f_ca);
            let s = tape.scale(a, self.config.beta);
            tape.add(e, s)?
        } else {
            e
        };
        let h = tape.concat(&[c, he], 0)?;
        Ok(tape.tensor(h))
    }

    pub fn fusion_trace(&self, context: &[u32], events: &[u32]) -> Result<FusionTrace> {
        self.run(None, |f| {
            let v = f.fuse(context, events)?;
            let t = &*f.tape;
            Ok(FusionTrace {
                f_c: t.tensor(v.f_c),
                f_e: t.tensor(v.f_e),
                weights: v.weights.iter().map(|&w| t.tensor(w)).collect(),
                heads: v.heads.iter().map(|&w| t.tensor(w)).collect(),
                f_ca: v.f_ca.map(|x| t.tensor(x)),
                f_he: t.tensor(v.f_he),
                f_h: t.tensor(v.f_h),
            })
        })
    }

    /// Decoder states `[T, d]` and logits `[T, V]` for `input` over `f_h`.
    pub fn decoder_outputs(&self, input: &[u32], f_h: &Tensor) -> Result<(Tensor, Tensor)> {
        self.run(None, |f| {
            let fh = f.tape.constant(f_h);
            let h = f.decode(input, fh)?;
            let l = f.logits(h)?;
            Ok((f.tape.tensor(h), f.tape.tensor(l)))
        })
    }

    /// Logits over the vocabulary for the next token, and `H_t`.
    pub fn decode_step(&self, prefix: &[u32], f_h: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let (h, l) = self.decoder_outputs(prefix, f_h)?;
        let t = prefix.len();
        Ok((l.row(t - 1).to_vec(), h.row(t - 1).to_vec()))
    }

    /// `sim^y` for separator states `[m, d]`.
    pub fn predict_similarity(&self, h_sep: &Tensor) -> Result<Tensor> {
        self.run(None, |f| {
            let h = f.tape.constant(h_sep);
            let s = f.similarity(h)?;
            Ok(f.tape.tensor(s))
        })
    }
}

#[cfg(test)]
mod tests;
