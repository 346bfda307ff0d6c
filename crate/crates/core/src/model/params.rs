use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{ModelConfig, ModelError};
use crate::tensor::{gaussian, seeded_rng, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Every parameter name and shape, in registration order.
fn specs(c: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (d, f) = (c.model_dim, c.ffn_dim);
    let mut s = Vec::new();
    let mat = |s: &mut Vec<_>, name: String, shape: Vec<usize>| s.push((name, shape, Init::Normal));
    mat(&mut s, "embed.tok".into(), vec![c.vocab_size, d]);
    let attn = |s: &mut Vec<(String, Vec<usize>, Init)>, p: &str| {
        for w in ["wq", "wk", "wv", "wo"] {
            s.push((format!("{p}.{w}"), vec![d, d], Init::Normal));
        }
    };
    let norm = |s: &mut Vec<(String, Vec<usize>, Init)>, p: &str| {
        s.push((format!("{p}.g"), vec![d], Init::Ones));
        s.push((format!("{p}.b"), vec![d], Init::Zeros));
    };
    let ffn = |s: &mut Vec<(String, Vec<usize>, Init)>, p: &str| {
        s.push((format!("{p}.w1"), vec![d, f], Init::Normal));
        s.push((format!("{p}.b1"), vec![f], Init::Zeros));
        s.push((format!("{p}.w2"), vec![f, d], Init::Normal));
        s.push((format!("{p}.b2"), vec![d], Init::Zeros));
    };
    for stack in ["enc_c", "enc_e"] {
        mat(&mut s, format!("{stack}.pos"), vec![c.max_positions, d]);
        for l in 0..c.layers {
            attn(&mut s, &format!("{stack}.{l}.attn"));
            norm(&mut s, &format!("{stack}.{l}.ln1"));
            ffn(&mut s, &format!("{stack}.{l}.ffn"));
            norm(&mut s, &format!("{stack}.{l}.ln2"));
        }
    }
    attn(&mut s, "fuse");
    mat(&mut s, "dec.pos".into(), vec![c.max_positions, d]);
    for l in 0..c.layers {
        attn(&mut s, &format!("dec.{l}.self"));
        norm(&mut s, &format!("dec.{l}.ln1"));
        attn(&mut s, &format!("dec.{l}.cross"));
        norm(&mut s, &format!("dec.{l}.ln2"));
        ffn(&mut s, &format!("dec.{l}.ffn"));
        norm(&mut s, &format!("dec.{l}.ln3"));
    }
    mat(&mut s, "out.w".into(), vec![d, c.vocab_size]);
    mat(&mut s, "sim.wsep".into(), vec![d, d]);
    s
}

/// Fresh parameters drawn from one seeded stream in registration order.
pub(crate) fn init_params(c: &ModelConfig, seed: u64) -> ParamStore {
    let mut rng = seeded_rng(seed);
    let mut store = ParamStore::new();
    for (name, shape, init) in specs(c) {
        let t = match init {
            Init::Normal => gaussian(&shape, c.init_std, &mut rng),
            Init::Zeros => Tensor::zeros(&shape),
            Init::Ones => Tensor::full(&shape, 1.0),
        };
        store.insert(&name, t);
    }
    store
}

/// Checks that `store` holds exactly the parameters `c` calls for.
pub(crate) fn check_params(c: &ModelConfig, store: &ParamStore) -> Result<(), ModelError> {
    let specs = specs(c);
    if specs.len() != store.len() {
        return Err(ModelError::Checkpoint(format!(
            "expected {} parameters, found {}",
            specs.len(),
            store.len()
        )));
    }
    for (name, shape, _) in &specs {
        let t = store
            .by_name(name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing parameter {name}")))?;
        if t.shape() != shape.as_slice() {
            return Err(ModelError::Checkpoint(format!(
                "parameter {name} has shape {:?}, config wants {:?}",
                t.shape(),
                shape
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnIds {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormIds {
    pub g: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FfnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncLayerIds {
    pub attn: AttnIds,
    pub ln1: NormIds,
    pub ffn: FfnIds,
    pub ln2: NormIds,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecLayerIds {
    pub self_attn: AttnIds,
    pub ln1: NormIds,
    pub cross: AttnIds,
    pub ln2: NormIds,
    pub ffn: FfnIds,
    pub ln3: NormIds,
}

#[derive(Debug, Clone)]
pub(crate) struct StackIds {
    pub pos: ParamId,
    pub layers: Vec<EncLayerIds>,
}

/// Parameter ids grouped by module.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tok: ParamId,
    pub enc_c: StackIds,
    pub enc_e: StackIds,
    /// `wo` is the output map W^M of the fusion block.
    pub fuse: AttnIds,
    pub dec_pos: ParamId,
    pub dec: Vec<DecLayerIds>,
    pub out: ParamId,
    pub wsep: ParamId,
}

impl Layout {
    pub fn resolve(c: &ModelConfig, store: &ParamStore) -> Self {
        let id = |n: &str| {
            store
                .id(n)
                .unwrap_or_else(|| panic!("parameter {n} not registered"))
        };
        let attn = |p: &str| AttnIds {
            wq: id(&format!("{p}.wq")),
            wk: id(&format!("{p}.wk")),
            wv: id(&format!("{p}.wv")),
            wo: id(&format!("{p}.wo")),
        };
        let norm = |p: &str| NormIds {
            g: id(&format!("{p}.g")),
            b: id(&format!("{p}.b")),
        };
        let ffn = |p: &str| FfnIds {
            w1: id(&format!("{p}.w1")),
            b1: id(&format!("{p}.b1")),
            w2: id(&format!("{p}.w2")),
            b2: id(&format!("{p}.b2")),
        };
        let stack = |s: &str| StackIds {
            pos: id(&format!("{s}.pos")),
            layers: (0..c.layers)
                .map(|l| EncLayerIds {
                    attn: attn(&format!("{s}.{l}.attn")),
                    ln1: norm(&format!("{s}.{l}.ln1")),
                    ffn: ffn(&format!("{s}.{l}.ffn")),
                    ln2: norm(&format!("{s}.{l}.ln2")),
                })
                .collect(),
        };
        Layout {
            tok: id("embed.tok"),
            enc_c: stack("enc_c"),
            enc_e: stack("enc_e"),
            fuse: attn("fuse"),
            dec_pos: id("dec.pos"),
            dec: (0..c.layers)
                .map(|l| DecLayerIds {
                    self_attn: attn(&format!("dec.{l}.self")),
                    ln1: norm(&format!("dec.{l}.ln1")),
                    cross: attn(&format!("dec.{l}.cross")),
                    ln2: norm(&format!("dec.{l}.ln2")),
                    ffn: ffn(&format!("dec.{l}.ffn")),
                    ln3: norm(&format!("dec.{l}.ln3")),
                })
                .collect(),
            out: id("out.w"),
            wsep: id("sim.wsep"),
        }
    }
}

/// Parameter-name prefix of each encoder stack.
pub const CONTEXT_ENCODER: &str = "enc_c.";
pub const EVENT_ENCODER: &str = "enc_e.";
