use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::{numel, ParamId, ParamStore, Result, Tensor, TensorError};

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul {
        a: usize,
        b: usize,
        n: usize,
        k: usize,
        m: usize,
        a_offsets: Vec<usize>,
        b_offsets: Vec<usize>,
    },
    Transpose(usize),
    Reshape(usize),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(usize),
    Relu(usize),
    Sigmoid(usize),
    Abs(usize),
    ClampMin(usize, f64),
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Slice {
        a: usize,
        axis: usize,
        start: usize,
    },
    IndexRows {
        a: usize,
        rows: Vec<usize>,
    },
    MaskFill {
        a: usize,
        mask: Vec<bool>,
    },
    Sum(usize),
    Mean(usize),
    CrossEntropy {
        logits: usize,
        targets: Vec<Option<usize>>,
        probs: Vec<f64>,
        scale: f64,
    },
    Cosine(usize, usize),
    Dropout {
        a: usize,
        mask: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
    grad: Option<Vec<f64>>,
}

/// Ordered record of every operation of one forward pass.
///
/// Nodes are appended in evaluation order, so a node's inputs always have
/// smaller indices and a reverse sweep is a valid topological traversal.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

fn invalid(op: &'static str, msg: alloc::string::String) -> TensorError {
    TensorError::Invalid { op, msg }
}

fn is_suffix(shape: &[usize], suffix: &[usize]) -> bool {
    suffix.len() <= shape.len() && shape[shape.len() - suffix.len()..] == *suffix
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::tanh(GELU_C * (x + 0.044715 * x * x * x)))
}

fn gelu_grad(x: f64) -> f64 {
    let t = libm::tanh(GELU_C * (x + 0.044715 * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn acc(adj: &mut [Option<Vec<f64>>], idx: usize, len: usize) -> &mut Vec<f64> {
    adj[idx].get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after `len`. Handles past that point become
    /// invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, inputs: &[usize]) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            param: None,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    // ── leaves ──────────────────────────────────────────────────────

    /// Records a leaf. Trainable tensors get their gradient on this tape.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            op: Op::Leaf,
            requires_grad: t.is_trainable(),
            param: None,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            op: Op::Leaf,
            requires_grad: false,
            param: None,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.leaf(store.get(id));
        self.nodes[v.0].requires_grad = true;
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Binds every parameter of `store`, indexed by `ParamId`.
    pub fn bind_params(&mut self, store: &ParamStore) -> Vec<Var> {
        (0..store.len())
            .map(|i| self.param(store, ParamId(i)))
            .collect()
    }

    // ── access ──────────────────────────────────────────────────────

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    /// Accumulated gradient of a leaf.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).grad.as_deref()
    }

    /// Moves leaf gradients of bound parameters into `store`, adding to
    /// whatever is already there.
    pub fn take_param_grads(&mut self, store: &mut ParamStore) {
        for node in &mut self.nodes {
            let (Some(id), Some(g)) = (node.param, node.grad.take()) else {
                continue;
            };
            let t = store.get_mut(id);
            match t.grad_mut() {
                Some(dst) => dst.iter_mut().zip(&g).for_each(|(d, s)| *d += s),
                None => t.set_grad(Some(g)),
            }
        }
    }

    // ── elementwise ─────────────────────────────────────────────────

    /// `a + b`, where `b`'s shape may be a suffix of `a`'s (bias broadcast).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.order_broadcast("add", a, b)?;
        let av = &self.node(a).value;
        let bv = &self.node(b).value;
        let bn = bv.len();
        let value = av.iter().enumerate().map(|(i, x)| x + bv[i % bn]).collect();
        Ok(self.push(
            self.node(a).shape.clone(),
            value,
            Op::Add(a.0, b.0),
            &[a.0, b.0],
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !is_suffix(sa, sb) {
            return Err(mismatch("sub", sa, sb));
        }
        let av = &self.node(a).value;
        let bv = &self.node(b).value;
        let bn = bv.len();
        let value = av.iter().enumerate().map(|(i, x)| x - bv[i % bn]).collect();
        Ok(self.push(
            self.node(a).shape.clone(),
            value,
            Op::Sub(a.0, b.0),
            &[a.0, b.0],
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.order_broadcast("mul", a, b)?;
        let av = &self.node(a).value;
        let bv = &self.node(b).value;
        let bn = bv.len();
        let value = av.iter().enumerate().map(|(i, x)| x * bv[i % bn]).collect();
        Ok(self.push(
            self.node(a).shape.clone(),
            value,
            Op::Mul(a.0, b.0),
            &[a.0, b.0],
        ))
    }

    fn order_broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<(Var, Var)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if is_suffix(sa, sb) {
            Ok((a, b))
        } else if is_suffix(sb, sa) {
            Ok((b, a))
        } else {
            Err(mismatch(op, sa, sb))
        }
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.node(a).value.iter().map(|x| x * s).collect();
        self.push(self.node(a).shape.clone(), value, Op::Scale(a.0, s), &[a.0])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.node(a).value.iter().map(|x| x + s).collect();
        self.push(
            self.node(a).shape.clone(),
            value,
            Op::AddScalar(a.0),
            &[a.0],
        )
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.node(a).value.iter().map(|&x| gelu(x)).collect();
        self.push(self.node(a).shape.clone(), value, Op::Gelu(a.0), &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.node(a).value.iter().map(|&x| x.max(0.0)).collect();
        self.push(self.node(a).shape.clone(), value, Op::Relu(a.0), &[a.0])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.node(a).value.iter().map(|&x| sigmoid(x)).collect();
        self.push(self.node(a).shape.clone(), value, Op::Sigmoid(a.0), &[a.0])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.node(a).value.iter().map(|&x| x.abs()).collect();
        self.push(self.node(a).shape.clone(), value, Op::Abs(a.0), &[a.0])
    }

    /// Elementwise `max(a, floor)`; no gradient where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let value = self.node(a).value.iter().map(|&x| x.max(floor)).collect();
        self.push(
            self.node(a).shape.clone(),
            value,
            Op::ClampMin(a.0, floor),
            &[a.0],
        )
    }

    /// Sets masked positions to `fill`; they receive no gradient.
    pub fn mask_fill(&mut self, a: Var, mask: &[bool], fill: f64) -> Result<Var> {
        let av = &self.node(a).value;
        if mask.len() != av.len() {
            return Err(mismatch("mask_fill", &self.node(a).shape, &[mask.len()]));
        }
        let value = av
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { fill } else { x })
            .collect();
        Ok(self.push(
            self.node(a).shape.clone(),
            value,
            Op::MaskFill {
                a: a.0,
                mask: mask.to_vec(),
            },
            &[a.0],
        ))
    }

    /// Inverted dropout with drop probability `p`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return a;
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.node(a).value.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let value = self
            .node(a)
            .value
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        self.push(
            self.node(a).shape.clone(),
            value,
            Op::Dropout { a: a.0, mask },
            &[a.0],
        )
    }

    // ── linear algebra ──────────────────────────────────────────────

    /// Batched matrix product `[.., n, k] × [.., k, m] → [.., n, m]` with
    /// broadcasting over the leading dimensions.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 || sa[sa.len() - 1] != sb[sb.len() - 2] {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let (n, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let m = sb[sb.len() - 1];
        let ba = &sa[..sa.len() - 2];
        let bb = &sb[..sb.len() - 2];
        let rank = ba.len().max(bb.len());
        let dim = |s: &[usize], i: usize| -> usize {
            let off = rank - s.len();
            if i < off {
                1
            } else {
                s[i - off]
            }
        };
        let mut batch = Vec::with_capacity(rank);
        for i in 0..rank {
            let (x, y) = (dim(ba, i), dim(bb, i));
            if x != y && x != 1 && y != 1 {
                return Err(mismatch("matmul", &sa, &sb));
            }
            batch.push(x.max(y));
        }
        let total = numel(&batch);
        let mut a_offsets = Vec::with_capacity(total);
        let mut b_offsets = Vec::with_capacity(total);
        let mut idx = vec![0usize; rank];
        for _ in 0..total {
            let (mut oa, mut ob) = (0, 0);
            for i in 0..rank {
                let (x, y) = (dim(ba, i), dim(bb, i));
                oa = oa * x + if x == 1 { 0 } else { idx[i] };
                ob = ob * y + if y == 1 { 0 } else { idx[i] };
            }
            a_offsets.push(oa * n * k);
            b_offsets.push(ob * k * m);
            for i in (0..rank).rev() {
                idx[i] += 1;
                if idx[i] < batch[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        let av = &self.node(a).value;
        let bv = &self.node(b).value;
        let mut value = vec![0.0; total * n * m];
        for t in 0..total {
            gemm_nn(
                &av[a_offsets[t]..a_offsets[t] + n * k],
                &bv[b_offsets[t]..b_offsets[t] + k * m],
                &mut value[t * n * m..(t + 1) * n * m],
                n,
                k,
                m,
            );
        }
        let mut shape = batch;
        shape.push(n);
        shape.push(m);
        Ok(self.push(
            shape,
            value,
            Op::MatMul {
                a: a.0,
                b: b.0,
                n,
                k,
                m,
                a_offsets,
                b_offsets,
            },
            &[a.0, b.0],
        ))
    }

    /// Swaps the last two dimensions.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() < 2 {
            return Err(invalid("transpose", format!("rank {} < 2", s.len())));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let av = &self.node(a).value;
        let mut value = vec![0.0; av.len()];
        for (bi, block) in av.chunks(r * c).enumerate() {
            let out = &mut value[bi * r * c..(bi + 1) * r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = block[i * c + j];
                }
            }
        }
        let mut shape = s;
        let len = shape.len();
        shape.swap(len - 2, len - 1);
        Ok(self.push(shape, value, Op::Transpose(a.0), &[a.0]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.node(a).value.len() {
            return Err(mismatch("reshape", self.shape(a), shape));
        }
        let value = self.node(a).value.clone();
        Ok(self.push(shape.to_vec(), value, Op::Reshape(a.0), &[a.0]))
    }

    // ── normalisation ───────────────────────────────────────────────

    /// Softmax over the last dimension, computed with max subtraction.
    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let Some(&d) = s.last() else {
            return Err(invalid("softmax", "scalar input".into()));
        };
        let mut value = self.node(x).value.clone();
        if d > 0 {
            for row in value.chunks_mut(d) {
                softmax_in_place(row);
            }
        }
        Ok(self.push(s.to_vec(), value, Op::Softmax(x.0), &[x.0]))
    }

    /// Layer normalisation over the last dimension with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s
            .last()
            .ok_or_else(|| invalid("layer_norm", "scalar input".into()))?;
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(mismatch("layer_norm", &s, self.shape(gamma)));
        }
        let xv = &self.node(x).value;
        let g = &self.node(gamma).value;
        let b = &self.node(beta).value;
        let rows = xv.len() / d.max(1);
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; rows];
        let mut value = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                value[r * d + j] = h * g[j] + b[j];
            }
        }
        Ok(self.push(
            s,
            value,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                rstd,
            },
            &[x.0, gamma.0, beta.0],
        ))
    }

    // ── indexing and layout ─────────────────────────────────────────

    /// Gathers rows of a `[vocab, dim]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(invalid("embedding", format!("table shape {s:?}")));
        }
        let (v, d) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(invalid("embedding", format!("id {bad} >= vocabulary {v}")));
        }
        let tv = &self.node(table).value;
        let mut value = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            value.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        Ok(self.push(
            vec![ids.len(), d],
            value,
            Op::Embedding {
                table: table.0,
                ids: ids.to_vec(),
            },
            &[table.0],
        ))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(
                *parts
                    .first()
                    .ok_or_else(|| invalid("concat", "no operands".into()))?,
            )
            .to_vec();
        if axis >= first.len() {
            return Err(invalid("concat", format!("axis {axis} out of range")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let same = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !same {
                return Err(mismatch("concat", &first, s));
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut value = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis] * inner;
                value.extend_from_slice(&self.node(p).value[o * len..(o + 1) * len]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(
            shape,
            value,
            Op::Concat {
                parts: ids.clone(),
                axis,
            },
            &ids,
        ))
    }

    /// `a[.., start..start+len, ..]` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || start + len > s[axis] {
            return Err(invalid(
                "slice",
                format!("{start}..{} on axis {axis} of {s:?}", start + len),
            ));
        }
        let (outer, size, inner) = split_axis(&s, axis);
        let av = &self.node(a).value;
        let mut value = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * size * inner + start * inner;
            value.extend_from_slice(&av[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        Ok(self.push(
            shape,
            value,
            Op::Slice {
                a: a.0,
                axis,
                start,
            },
            &[a.0],
        ))
    }

    /// Selects rows of a rank-2 tensor; rows may repeat.
    pub fn index_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(invalid("index_rows", format!("shape {s:?}")));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= s[0]) {
            return Err(invalid("index_rows", format!("row {bad} of {}", s[0])));
        }
        let d = s[1];
        let av = &self.node(a).value;
        let mut value = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            value.extend_from_slice(&av[r * d..(r + 1) * d]);
        }
        Ok(self.push(
            vec![rows.len(), d],
            value,
            Op::IndexRows {
                a: a.0,
                rows: rows.to_vec(),
            },
            &[a.0],
        ))
    }

    // ── reductions and losses ───────────────────────────────────────

    pub fn sum(&mut self, a: Var) -> Var {
        let v = pairwise_sum(&self.node(a).value);
        self.push(Vec::new(), vec![v], Op::Sum(a.0), &[a.0])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.node(a).value.len().max(1) as f64;
        let v = pairwise_sum(&self.node(a).value) / n;
        self.push(Vec::new(), vec![v], Op::Mean(a.0), &[a.0])
    }

    /// Cross-entropy of `logits [.., vocab]` against one target per row;
    /// `None` targets are ignored.
    pub fn cross_entropy_with_logits(
        &mut self,
        logits: Var,
        targets: &[Option<usize>],
        reduction: Reduction,
    ) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        let v = *s
            .last()
            .ok_or_else(|| invalid("cross_entropy", "scalar logits".into()))?;
        let lv = &self.node(logits).value;
        let rows = lv.len() / v.max(1);
        if rows != targets.len() {
            return Err(mismatch("cross_entropy", &s, &[targets.len()]));
        }
        let mut probs = lv.clone();
        let mut total = 0.0;
        let mut count = 0usize;
        for (r, t) in targets.iter().enumerate() {
            let row = &mut probs[r * v..(r + 1) * v];
            let Some(t) = *t else { continue };
            if t >= v {
                return Err(invalid("cross_entropy", format!("target {t} >= {v}")));
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|x| libm::exp(x - max)).sum::<f64>());
            total += lse - row[t];
            count += 1;
            softmax_in_place(row);
        }
        let scale = match reduction {
            Reduction::Sum => 1.0,
            Reduction::Mean => {
                if count == 0 {
                    return Err(invalid("cross_entropy", "no counted targets".into()));
                }
                1.0 / count as f64
            }
        };
        Ok(self.push(
            Vec::new(),
            vec![total * scale],
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                probs,
                scale,
            },
            &[logits.0],
        ))
    }

    /// Row-wise cosine similarity over the last dimension.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s != self.shape(b) || s.is_empty() {
            return Err(mismatch("cosine", &s, self.shape(b)));
        }
        let d = s[s.len() - 1];
        let av = &self.node(a).value;
        let bv = &self.node(b).value;
        let value = av
            .chunks(d.max(1))
            .zip(bv.chunks(d.max(1)))
            .map(|(x, y)| super::cosine(x, y))
            .collect();
        Ok(self.push(
            s[..s.len() - 1].to_vec(),
            value,
            Op::Cosine(a.0, b.0),
            &[a.0, b.0],
        ))
    }

    // ── backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate across
    /// calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let ls = &self.node(loss).shape;
        if !ls.is_empty() {
            return Err(TensorError::NonScalarLoss(ls.clone()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        for (i, g) in adj.into_iter().enumerate() {
            let node = &mut self.nodes[i];
            if let (Op::Leaf, true, Some(g)) = (&node.op, node.requires_grad, g) {
                match &mut node.grad {
                    Some(dst) => dst.iter_mut().zip(&g).for_each(|(d, s)| *d += s),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let len_of = |j: usize| self.nodes[j].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                if self.wants(*a) {
                    let da = acc(adj, *a, g.len());
                    da.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
                if self.wants(*b) {
                    let bn = len_of(*b);
                    let db = acc(adj, *b, bn);
                    for (k, s) in g.iter().enumerate() {
                        db[k % bn] += sign * s;
                    }
                }
            }
            Op::Mul(a, b) => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                let bn = bv.len();
                if self.wants(*a) {
                    let da = acc(adj, *a, g.len());
                    for (k, s) in g.iter().enumerate() {
                        da[k] += s * bv[k % bn];
                    }
                }
                if self.wants(*b) {
                    let db = acc(adj, *b, bn);
                    for (k, s) in g.iter().enumerate() {
                        db[k % bn] += s * av[k];
                    }
                }
            }
            Op::Scale(a, s) => {
                let da = acc(adj, *a, g.len());
                da.iter_mut().zip(g).for_each(|(d, x)| *d += s * x);
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                let da = acc(adj, *a, g.len());
                da.iter_mut().zip(g).for_each(|(d, x)| *d += x);
            }
            Op::MatMul {
                a,
                b,
                n,
                k,
                m,
                a_offsets,
                b_offsets,
            } => {
                let (n, k, m) = (*n, *k, *m);
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                if self.wants(*a) {
                    let da = acc(adj, *a, av.len());
                    for (t, &oa) in a_offsets.iter().enumerate() {
                        gemm_nt(
                            &g[t * n * m..(t + 1) * n * m],
                            &bv[b_offsets[t]..b_offsets[t] + k * m],
                            &mut da[oa..oa + n * k],
                            n,
                            m,
                            k,
                        );
                    }
                }
                if self.wants(*b) {
                    let db = acc(adj, *b, bv.len());
                    for (t, &ob) in b_offsets.iter().enumerate() {
                        gemm_tn(
                            &av[a_offsets[t]..a_offsets[t] + n * k],
                            &g[t * n * m..(t + 1) * n * m],
                            &mut db[ob..ob + k * m],
                            n,
                            k,
                            m,
                        );
                    }
                }
            }
            Op::Transpose(a) => {
                // output is [.., c, r]; input [.., r, c]
                let s = &node.shape;
                let (c, r) = (s[s.len() - 2], s[s.len() - 1]);
                let da = acc(adj, *a, g.len());
                for (bi, block) in g.chunks(r * c).enumerate() {
                    let out = &mut da[bi * r * c..(bi + 1) * r * c];
                    for i in 0..c {
                        for j in 0..r {
                            out[j * c + i] += block[i * r + j];
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let d = *node.shape.last().unwrap();
                let y = &node.value;
                let da = acc(adj, *a, g.len());
                for ((yr, gr), dr) in y.chunks(d).zip(g.chunks(d)).zip(da.chunks_mut(d)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..d {
                        dr[j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = *node.shape.last().unwrap();
                let gv = &self.nodes[*gamma].value;
                if self.wants(*gamma) {
                    let dg = acc(adj, *gamma, d);
                    for (h, q) in xhat.chunks(d).zip(g.chunks(d)) {
                        for j in 0..d {
                            dg[j] += q[j] * h[j];
                        }
                    }
                }
                if self.wants(*beta) {
                    let db = acc(adj, *beta, d);
                    for q in g.chunks(d) {
                        for j in 0..d {
                            db[j] += q[j];
                        }
                    }
                }
                if self.wants(*x) {
                    let dx = acc(adj, *x, g.len());
                    let df = d as f64;
                    for r in 0..rstd.len() {
                        let q = &g[r * d..(r + 1) * d];
                        let h = &xhat[r * d..(r + 1) * d];
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..d {
                            let dh = q[j] * gv[j];
                            sum_dh += dh;
                            sum_dh_h += dh * h[j];
                        }
                        for j in 0..d {
                            let dh = q[j] * gv[j];
                            dx[r * d + j] += rstd[r] / df * (df * dh - sum_dh - h[j] * sum_dh_h);
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                let xv = &self.nodes[*a].value;
                let da = acc(adj, *a, g.len());
                for k in 0..g.len() {
                    da[k] += g[k] * gelu_grad(xv[k]);
                }
            }
            Op::Relu(a) => {
                let xv = &self.nodes[*a].value;
                let da = acc(adj, *a, g.len());
                for k in 0..g.len() {
                    if xv[k] > 0.0 {
                        da[k] += g[k];
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let da = acc(adj, *a, g.len());
                for k in 0..g.len() {
                    da[k] += g[k] * y[k] * (1.0 - y[k]);
                }
            }
            Op::Abs(a) => {
                let xv = &self.nodes[*a].value;
                let da = acc(adj, *a, g.len());
                for k in 0..g.len() {
                    let s = if xv[k] > 0.0 {
                        1.0
                    } else if xv[k] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    da[k] += g[k] * s;
                }
            }
            Op::ClampMin(a, floor) => {
                let xv = &self.nodes[*a].value;
                let da = acc(adj, *a, g.len());
                for k in 0..g.len() {
                    if xv[k] > *floor {
                        da[k] += g[k];
                    }
                }
            }
            Op::MaskFill { a, mask } => {
                let da = acc(adj, *a, g.len());
                for k in 0..g.len() {
                    if !mask[k] {
                        da[k] += g[k];
                    }
                }
            }
            Op::Dropout { a, mask } => {
                let da = acc(adj, *a, g.len());
                for k in 0..g.len() {
                    da[k] += g[k] * mask[k];
                }
            }
            Op::Embedding { table, ids } => {
                let d = node.shape[1];
                let dt = acc(adj, *table, len_of(*table));
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += g[r * d + j];
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let (outer, _, inner) = split_axis(&node.shape, *axis);
                let mut offset = 0;
                let row = node.shape[*axis] * inner;
                for &p in parts {
                    let len = self.nodes[p].shape[*axis] * inner;
                    if self.wants(p) {
                        let dp = acc(adj, p, len_of(p));
                        for o in 0..outer {
                            let src = &g[o * row + offset..o * row + offset + len];
                            dp[o * len..(o + 1) * len]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, s)| *d += s);
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { a, axis, start } => {
                let src_shape = &self.nodes[*a].shape;
                let (outer, size, inner) = split_axis(src_shape, *axis);
                let len = node.shape[*axis];
                let da = acc(adj, *a, len_of(*a));
                for o in 0..outer {
                    let base = o * size * inner + start * inner;
                    da[base..base + len * inner]
                        .iter_mut()
                        .zip(&g[o * len * inner..(o + 1) * len * inner])
                        .for_each(|(d, s)| *d += s);
                }
            }
            Op::IndexRows { a, rows } => {
                let d = node.shape[1];
                let da = acc(adj, *a, len_of(*a));
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..d {
                        da[r * d + j] += g[k * d + j];
                    }
                }
            }
            Op::Sum(a) => {
                let da = acc(adj, *a, len_of(*a));
                da.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean(a) => {
                let n = len_of(*a);
                let da = acc(adj, *a, n);
                let s = g[0] / n.max(1) as f64;
                da.iter_mut().for_each(|d| *d += s);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                scale,
            } => {
                let v = *self.nodes[*logits].shape.last().unwrap();
                let dl = acc(adj, *logits, probs.len());
                let s = g[0] * scale;
                for (r, t) in targets.iter().enumerate() {
                    let Some(t) = *t else { continue };
                    for j in 0..v {
                        dl[r * v + j] += s * probs[r * v + j];
                    }
                    dl[r * v + t] -= s;
                }
            }
            Op::Cosine(a, b) => {
                let d = *self.nodes[*a].shape.last().unwrap();
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                let mut da_buf = vec![0.0; av.len()];
                let mut db_buf = vec![0.0; bv.len()];
                for (r, &q) in g.iter().enumerate() {
                    let x = &av[r * d..(r + 1) * d];
                    let y = &bv[r * d..(r + 1) * d];
                    let nx = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
                    let ny = libm::sqrt(y.iter().map(|v| v * v).sum::<f64>());
                    if nx == 0.0 || ny == 0.0 {
                        continue;
                    }
                    let c = node.value[r];
                    for j in 0..d {
                        da_buf[r * d + j] += q * (y[j] / (nx * ny) - c * x[j] / (nx * nx));
                        db_buf[r * d + j] += q * (x[j] / (nx * ny) - c * y[j] / (ny * ny));
                    }
                }
                if self.wants(*a) {
                    let da = acc(adj, *a, av.len());
                    da.iter_mut().zip(&da_buf).for_each(|(d, s)| *d += s);
                }
                if self.wants(*b) {
                    let db = acc(adj, *b, bv.len());
                    db.iter_mut().zip(&db_buf).for_each(|(d, s)| *d += s);
                }
            }
        }
    }
}

/// Sums by recursive halving, which keeps rounding error logarithmic in
/// the length.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
