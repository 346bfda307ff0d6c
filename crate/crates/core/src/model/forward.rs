use alloc::vec::Vec;

use rand::RngCore;

use super::params::{AttnIds, FfnIds, Layout, NormIds, StackIds};
use super::{ModelConfig, ModelError, Result, SentLoss};
use crate::tensor::{ParamId, Tape, Tensor, Var};

/// Fill value for masked attention scores; large enough that its softmax
/// weight underflows to exactly zero.
const MASKED: f64 = -1e9;

/// One forward pass worth of state: the tape, the bound parameters and the
/// dropout stream (absent in evaluation mode).
pub(crate) struct Fwd<'a> {
    pub tape: &'a mut Tape,
    pub vars: &'a [Var],
    pub layout: &'a Layout,
    pub cfg: &'a ModelConfig,
    pub rng: Option<&'a mut dyn RngCore>,
    /// Times the similarity head ran.
    pub sim_evals: u64,
}

/// Intermediate fusion tensors, as tape variables.
pub(crate) struct FusionVars {
    pub f_c: Var,
    pub f_e: Var,
    /// Per head, `[|E|, |C|]`.
    pub weights: Vec<Var>,
    pub heads: Vec<Var>,
    pub f_ca: Option<Var>,
    pub f_he: Var,
    pub f_h: Var,
}

impl Fwd<'_> {
    fn p(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    fn drop(&mut self, x: Var) -> Var {
        let p = self.cfg.dropout;
        match self.rng.as_deref_mut() {
            Some(rng) if p > 0.0 => self.tape.dropout(x, p, rng),
            _ => x,
        }
    }

    fn norm(&mut self, x: Var, ids: NormIds) -> Result<Var> {
        let (g, b) = (self.p(ids.g), self.p(ids.b));
        Ok(self.tape.layer_norm(x, g, b)?)
    }

    fn ffn(&mut self, x: Var, ids: FfnIds) -> Result<Var> {
        let t = &mut *self.tape;
        let h = t.matmul(x, self.vars[ids.w1.0])?;
        let h = t.add(h, self.vars[ids.b1.0])?;
        let h = t.gelu(h);
        let o = t.matmul(h, self.vars[ids.w2.0])?;
        Ok(t.add(o, self.vars[ids.b2.0])?)
    }

    /// Multi-head attention of `xq` over `xkv`. Head `h` uses columns
    /// `h*d_k..(h+1)*d_k` of the projections.
    pub fn attention(
        &mut self,
        ids: AttnIds,
        xq: Var,
        xkv: Var,
        causal: bool,
        mut trace: Option<(&mut Vec<Var>, &mut Vec<Var>)>,
    ) -> Result<Var> {
        let (heads, dk) = (self.cfg.heads, self.cfg.d_k());
        let scale = 1.0 / libm::sqrt(dk as f64);
        let t = &mut *self.tape;
        let q = t.matmul(xq, self.vars[ids.wq.0])?;
        let k = t.matmul(xkv, self.vars[ids.wk.0])?;
        let v = t.matmul(xkv, self.vars[ids.wv.0])?;
        let (n, m) = (t.shape(q)[0], t.shape(k)[0]);
        let mask: Option<Vec<bool>> = causal.then(|| (0..n * m).map(|i| i % m > i / m).collect());
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = t.slice(q, 1, h * dk, dk)?;
            let kh = t.slice(k, 1, h * dk, dk)?;
            let vh = t.slice(v, 1, h * dk, dk)?;
            let kt = t.transpose(kh)?;
            let s = t.matmul(qh, kt)?;
            let mut s = t.scale(s, scale);
            if let Some(mask) = &mask {
                s = t.mask_fill(s, mask, MASKED)?;
            }
            let w = t.softmax_lastdim(s)?;
            let a = t.matmul(w, vh)?;
            if let Some((ws, hs)) = trace.as_mut() {
                ws.push(w);
                hs.push(a);
            }
            outs.push(a);
        }
        let cat = if heads == 1 {
            outs[0]
        } else {
            t.concat(&outs, 1)?
        };
        Ok(t.matmul(cat, self.vars[ids.wo.0])?)
    }

    /// Token plus learned position embeddings.
    fn embed(&mut self, ids: &[u32], pos: ParamId) -> Result<Var> {
        let n = ids.len();
        if n == 0 {
            return Err(ModelError::EmptyInput);
        }
        if n > self.cfg.max_positions {
            return Err(ModelError::Length {
                len: n,
                max: self.cfg.max_positions,
            });
        }
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.cfg.vocab_size) {
            return Err(ModelError::TokenId {
                id: bad,
                vocab: self.cfg.vocab_size,
            });
        }
        let tok = self.p(self.layout.tok);
        let pos = self.p(pos);
        let e = self.tape.embedding(tok, &idx)?;
        let p = self.tape.slice(pos, 0, 0, n)?;
        let x = self.tape.add(e, p)?;
        Ok(self.drop(x))
    }

    /// Post-norm transformer encoder over `ids`.
    pub fn encode_stack(&mut self, stack: &StackIds, ids: &[u32]) -> Result<Var> {
        let x = self.embed(ids, stack.pos)?;
        self.encode_layers(stack, x)
    }

    pub fn encode_layers(&mut self, stack: &StackIds, mut x: Var) -> Result<Var> {
        for l in &stack.layers {
            let a = self.attention(l.attn, x, x, false, None)?;
            let a = self.drop(a);
            let r = self.tape.add(x, a)?;
            x = self.norm(r, l.ln1)?;
            let h = self.ffn(x, l.ffn)?;
            let h = self.drop(h);
            let r = self.tape.add(x, h)?;
            x = self.norm(r, l.ln2)?;
        }
        Ok(x)
    }

    /// Encoders, cross-attention fusion and the residual concatenation.
    pub fn fuse(&mut self, context: &[u32], events: &[u32]) -> Result<FusionVars> {
        let layout = self.layout;
        let f_c = self.encode_stack(&layout.enc_c, context)?;
        let f_e = self.encode_stack(&layout.enc_e, events)?;
        let mut weights = Vec::new();
        let mut heads = Vec::new();
        let (f_ca, f_he) = if self.cfg.use_cm && self.cfg.beta != 0.0 {
            let f_ca = self.attention(
                layout.fuse,
                f_e,
                f_c,
                false,
                Some((&mut weights, &mut heads)),
            )?;
            let scaled = self.tape.scale(f_ca, self.cfg.beta);
            (Some(f_ca), self.tape.add(f_e, scaled)?)
        } else {
            (None, f_e)
        };
        let f_h = self.tape.concat(&[f_c, f_he], 0)?;
        Ok(FusionVars {
            f_c,
            f_e,
            weights,
            heads,
            f_ca,
            f_he,
            f_h,
        })
    }

    /// Decoder hidden states `[T, d]` for `input` attending to `f_h`.
    pub fn decode(&mut self, input: &[u32], f_h: Var) -> Result<Var> {
        let layout = self.layout;
        let mut x = self.embed(input, layout.dec_pos)?;
        for l in &layout.dec {
            let a = self.attention(l.self_attn, x, x, true, None)?;
            let a = self.drop(a);
            let r = self.tape.add(x, a)?;
            x = self.norm(r, l.ln1)?;
            let c = self.attention(l.cross, x, f_h, false, None)?;
            let c = self.drop(c);
            let r = self.tape.add(x, c)?;
            x = self.norm(r, l.ln2)?;
            let h = self.ffn(x, l.ffn)?;
            let h = self.drop(h);
            let r = self.tape.add(x, h)?;
            x = self.norm(r, l.ln3)?;
        }
        Ok(x)
    }

    pub fn logits(&mut self, h: Var) -> Result<Var> {
        let w = self.p(self.layout.out);
        Ok(self.tape.matmul(h, w)?)
    }

    /// `sigmoid(U + Uᵀ)` with `U = H_sep W^sep H_sepᵀ`.
    pub fn similarity(&mut self, h_sep: Var) -> Result<Var> {
        self.sim_evals += 1;
        let w = self.p(self.layout.wsep);
        let t = &mut *self.tape;
        let hw = t.matmul(h_sep, w)?;
        let ht = t.transpose(h_sep)?;
        let u = t.matmul(hw, ht)?;
        let ut = t.transpose(u)?;
        let s = t.add(u, ut)?;
        Ok(t.sigmoid(s))
    }

    pub fn sentence_loss(&mut self, sim_y: Var, sim_s: &[f64]) -> Result<Var> {
        sentence_loss(self.tape, sim_y, sim_s, self.cfg)
    }
}

/// Per-entry similarity penalty averaged over the m×m matrix.
pub(crate) fn sentence_loss(
    tape: &mut Tape,
    sim_y: Var,
    sim_s: &[f64],
    cfg: &ModelConfig,
) -> Result<Var> {
    let shape = tape.shape(sim_y).to_vec();
    if shape.len() != 2 || shape[0] * shape[1] != sim_s.len() {
        return Err(ModelError::SimShape {
            sim: sim_s.len(),
            m: shape.first().copied().unwrap_or(0),
        });
    }
    let target = tape.constant(&Tensor::new(shape, sim_s.to_vec())?);
    let diff = tape.sub(sim_y, target)?;
    let a = tape.abs(diff);
    let pen = match cfg.sent_loss {
        SentLoss::Floor => tape.clamp_min(a, cfg.delta),
        SentLoss::Hinge => {
            let shifted = tape.add_scalar(a, -cfg.delta);
            tape.clamp_min(shifted, 0.0)
        }
    };
    Ok(tape.mean(pen))
}
