use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::forward::{sentence_loss, Fwd};
use super::{Example, Model, ModelConfig, ModelError, Result};
use crate::tensor::{adam_step, seeded_rng, AdamState, ParamStore, Reduction, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop after this many optimiser steps, if set.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 64,
            learning_rate: 8e-5,
            seed: 42,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean token cross-entropy in nats.
    pub lm: f64,
    /// Mean sentence-similarity loss, when it was computed.
    pub sent: Option<f64>,
    pub overall: f64,
    pub tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: Vec<StepLog>,
    /// Validation loss at the end of each epoch.
    pub valid: Vec<f64>,
    /// Epoch whose parameters were kept, when validation ran.
    pub best_epoch: Option<usize>,
    /// Times the similarity head was evaluated.
    pub sim_evaluations: u64,
}

struct BatchVars {
    lm: Var,
    sent: Option<Var>,
    overall: Var,
    tokens: usize,
}

/// Losses of a batch on one tape. `L_lm` averages over every target token of
/// the batch; `L_sent` averages over the examples with at least two
/// sentences.
fn batch_loss(f: &mut Fwd<'_>, batch: &[&Example]) -> Result<BatchVars> {
    let mut ce_sum: Option<Var> = None;
    let mut sent_sum: Option<Var> = None;
    let mut sent_n = 0usize;
    let mut tokens = 0usize;
    for ex in batch {
        let fv = f.fuse(&ex.context, &ex.events)?;
        let h = f.decode(&ex.input, fv.f_h)?;
        let logits = f.logits(h)?;
        let targets: Vec<Option<usize>> = ex.target.iter().map(|&t| Some(t as usize)).collect();
        let ce = f
            .tape
            .cross_entropy_with_logits(logits, &targets, Reduction::Sum)?;
        tokens += targets.len();
        ce_sum = Some(match ce_sum {
            Some(acc) => f.tape.add(acc, ce)?,
            None => ce,
        });
        if f.cfg.use_sen && ex.m() >= 2 {
            let h_sep = f.tape.index_rows(h, &ex.sep_positions)?;
            let sim_y = f.similarity(h_sep)?;
            let s = f.sentence_loss(sim_y, &ex.sim)?;
            sent_n += 1;
            sent_sum = Some(match sent_sum {
                Some(acc) => f.tape.add(acc, s)?,
                None => s,
            });
        }
    }
    let ce_sum = ce_sum.ok_or(ModelError::EmptyDataset)?;
    let lm = f.tape.scale(ce_sum, 1.0 / tokens as f64);
    let sent = sent_sum.map(|s| f.tape.scale(s, 1.0 / sent_n as f64));
    let overall = match sent {
        Some(s) => {
            let weighted = f.tape.scale(s, f.cfg.lambda);
            f.tape.add(lm, weighted)?
        }
        None => lm,
    };
    Ok(BatchVars {
        lm,
        sent,
        overall,
        tokens,
    })
}

fn breakdown(t: &Tape, b: &BatchVars) -> LossBreakdown {
    LossBreakdown {
        lm: t.scalar(b.lm),
        sent: b.sent.map(|s| t.scalar(s)),
        overall: t.scalar(b.overall),
        tokens: b.tokens,
    }
}

/// Combines a language-model loss with the sentence loss of `sim_y`
/// against `sim_s`, exactly as training does.
pub fn compute_loss(
    l_lm: f64,
    sim: Option<(&Tensor, &[f64])>,
    cfg: &ModelConfig,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let lm = tape.constant(&Tensor::scalar(l_lm));
    let (sent, overall) = match sim.filter(|_| cfg.use_sen) {
        Some((sim_y, sim_s)) => {
            let y = tape.constant(sim_y);
            let s = sentence_loss(&mut tape, y, sim_s, cfg)?;
            let w = tape.scale(s, cfg.lambda);
            (Some(s), tape.add(lm, w)?)
        }
        None => (None, lm),
    };
    Ok(LossBreakdown {
        lm: tape.scalar(lm),
        sent: sent.map(|s| tape.scalar(s)),
        overall: tape.scalar(overall),
        tokens: 0,
    })
}

/// Evaluation-mode losses over `examples`, batched as in training.
pub fn evaluate_loss(
    model: &Model,
    examples: &[Example],
    batch_size: usize,
) -> Result<LossBreakdown> {
    if examples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let refs: Vec<&Example> = examples.iter().collect();
    let (mut lm, mut overall, mut sent, mut sent_w, mut tokens) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for batch in refs.chunks(batch_size.max(1)) {
        let b = model.run(None, |f| {
            let v = batch_loss(f, batch)?;
            Ok(breakdown(f.tape, &v))
        })?;
        lm += b.lm * b.tokens as f64;
        overall += b.overall * batch.len() as f64;
        if let Some(s) = b.sent {
            sent += s * batch.len() as f64;
            sent_w += batch.len();
        }
        tokens += b.tokens;
    }
    Ok(LossBreakdown {
        lm: lm / tokens as f64,
        sent: (sent_w > 0).then(|| sent / sent_w as f64),
        overall: overall / examples.len() as f64,
        tokens,
    })
}

/// Eval-mode `L_overall` of one batch with its gradients written into
/// `model.params`.
pub fn batch_gradients(model: &mut Model, batch: &[Example]) -> Result<LossBreakdown> {
    let refs: Vec<&Example> = batch.iter().collect();
    model.params.zero_grad();
    let mut tape = Tape::new();
    let vars = tape.bind_params(&model.params);
    let mut f = Fwd {
        tape: &mut tape,
        vars: &vars,
        layout: &model.layout,
        cfg: &model.config,
        rng: None,
        sim_evals: 0,
    };
    let v = batch_loss(&mut f, &refs)?;
    let loss = breakdown(&tape, &v);
    tape.backward(v.overall)?;
    tape.take_param_grads(&mut model.params);
    Ok(loss)
}

/// Teacher-forced negative log-likelihood of every target token.
pub fn token_nll(model: &Model, example: &Example) -> Result<Vec<f64>> {
    model.run(None, |f| {
        let fv = f.fuse(&example.context, &example.events)?;
        let h = f.decode(&example.input, fv.f_h)?;
        let logits = f.logits(h)?;
        let v = f.cfg.vocab_size;
        let vals = f.tape.value(logits);
        Ok(example
            .target
            .iter()
            .enumerate()
            .map(|(r, &t)| {
                let row = &vals[r * v..(r + 1) * v];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + libm::log(row.iter().map(|x| libm::exp(x - max)).sum::<f64>());
                lse - row[t as usize]
            })
            .collect())
    })
}

/// Teacher-forced Adam training on `L_overall`. After each epoch the
/// validation loss is measured and the best parameters so far are kept;
/// they are restored at the end. `on_step` sees every optimiser step.
pub fn train(
    model: &mut Model,
    train_set: &[Example],
    valid_set: &[Example],
    cfg: &TrainConfig,
    on_step: &mut dyn FnMut(&StepLog),
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut adam = AdamState::new(&model.params, cfg.learning_rate);
    let mut report = TrainReport::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0usize;

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break 'epochs;
            }
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            model.params.zero_grad();
            let (loss, sims) = {
                let mut tape = Tape::new();
                let vars = tape.bind_params(&model.params);
                let mut f = Fwd {
                    tape: &mut tape,
                    vars: &vars,
                    layout: &model.layout,
                    cfg: &model.config,
                    rng: Some(&mut rng as &mut dyn RngCore),
                    sim_evals: 0,
                };
                let v = batch_loss(&mut f, &batch)?;
                let sims = f.sim_evals;
                let loss = breakdown(&tape, &v);
                tape.backward(v.overall)?;
                tape.take_param_grads(&mut model.params);
                (loss, sims)
            };
            report.sim_evaluations += sims;
            adam_step(&mut model.params, &mut adam)?;
            step += 1;
            model.trained_steps += 1;
            let log = StepLog { step, epoch, loss };
            on_step(&log);
            report.steps.push(log);
        }
        if !valid_set.is_empty() {
            let v = evaluate_loss(model, valid_set, cfg.batch_size)?.overall;
            report.valid.push(v);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.params.clone()));
                report.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    model.params.zero_grad();
    Ok(report)
}

/// Continued training on reconstructed long-text windows. Tags the model's
/// lineage `ke`; zero epochs leave it untouched.
pub fn posttrain(
    model: &mut Model,
    book_set: &[Example],
    epochs: usize,
    cfg: &TrainConfig,
    on_step: &mut dyn FnMut(&StepLog),
) -> Result<TrainReport> {
    if epochs == 0 {
        return Ok(TrainReport::default());
    }
    let cfg = TrainConfig {
        epochs,
        ..cfg.clone()
    };
    let report = train(model, book_set, &[], &cfg, on_step)?;
    model.lineage = Some("ke".to_string());
    Ok(report)
}
