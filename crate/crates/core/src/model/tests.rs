use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::*;
use crate::corpus::{BpeVocab, StoryRecord};
use crate::tensor::{seeded_rng, Tensor};

type Mat = Vec<Vec<f64>>;

fn tiny(dim: usize, heads: usize, vocab: usize) -> ModelConfig {
    ModelConfig {
        layers: 1,
        heads,
        model_dim: dim,
        ffn_dim: 2 * dim,
        vocab_size: vocab,
        max_positions: 32,
        max_sentences: 3,
        dropout: 0.0,
        init_std: 0.5,
        ..ModelConfig::default()
    }
}

fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn param(m: &Model, name: &str) -> Mat {
    let t = m.params.by_name(name).unwrap();
    if t.rank() == 1 {
        vec![t.data().to_vec()]
    } else {
        to_mat(t)
    }
}

fn set(m: &mut Model, name: &str, rows: &[Vec<f64>]) {
    let t = Tensor::from_rows(rows);
    let shape = m.params.by_name(name).unwrap().shape().to_vec();
    m.params
        .assign(name, &Tensor::new(shape, t.into_data()).unwrap())
        .unwrap();
}

fn random_mat<R: Rng>(rng: &mut R, r: usize, c: usize) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..r)
        .map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Tensor::from_rows(&rows)
}

fn max_abs_diff(a: &Mat, b: &Tensor) -> f64 {
    assert_eq!(a.len(), b.rows());
    a.iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().zip(b.row(i)).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

// Plain nested-loop reference implementation of the forward pass.
mod oracle {
    use super::Mat;
    use alloc::vec;
    use alloc::vec::Vec;

    pub fn mm(a: &Mat, b: &Mat) -> Mat {
        a.iter()
            .map(|r| {
                (0..b[0].len())
                    .map(|j| r.iter().enumerate().map(|(k, x)| x * b[k][j]).sum())
                    .collect()
            })
            .collect()
    }

    pub fn add(a: &Mat, b: &Mat) -> Mat {
        a.iter()
            .zip(b)
            .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
            .collect()
    }

    pub fn add_row(a: &Mat, b: &[f64]) -> Mat {
        a.iter()
            .map(|r| r.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect()
    }

    pub fn layer_norm(a: &Mat, g: &[f64], b: &[f64]) -> Mat {
        a.iter()
            .map(|r| {
                let n = r.len() as f64;
                let mu = r.iter().sum::<f64>() / n;
                let var = r.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
                r.iter()
                    .enumerate()
                    .map(|(i, x)| (x - mu) / (var + 1e-5).sqrt() * g[i] + b[i])
                    .collect()
            })
            .collect()
    }

    pub fn gelu(x: f64) -> f64 {
        let c = (2.0 / core::f64::consts::PI).sqrt();
        0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
    }

    pub fn attention(xq: &Mat, xkv: &Mat, w: [&Mat; 4], heads: usize, causal: bool) -> Mat {
        let (q, k, v) = (mm(xq, w[0]), mm(xkv, w[1]), mm(xkv, w[2]));
        let dk = q[0].len() / heads;
        let mut cat = vec![vec![0.0; q[0].len()]; q.len()];
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            for i in 0..q.len() {
                let visible = if causal { i + 1 } else { k.len() };
                let s: Vec<f64> = (0..visible)
                    .map(|j| {
                        cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dk as f64).sqrt()
                    })
                    .collect();
                let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in cols.clone() {
                    cat[i][c] = (0..visible).map(|j| e[j] / z * v[j][c]).sum();
                }
            }
        }
        mm(&cat, w[3])
    }

    pub fn ffn(x: &Mat, w1: &Mat, b1: &[f64], w2: &Mat, b2: &[f64]) -> Mat {
        let h: Mat = add_row(&mm(x, w1), b1)
            .into_iter()
            .map(|r| r.into_iter().map(gelu).collect())
            .collect();
        add_row(&mm(&h, w2), b2)
    }
}

fn oracle_embed(m: &Model, ids: &[u32], pos: &str) -> Mat {
    let tok = param(m, "embed.tok");
    let p = param(m, pos);
    ids.iter()
        .enumerate()
        .map(|(i, &t)| {
            tok[t as usize]
                .iter()
                .zip(&p[i])
                .map(|(a, b)| a + b)
                .collect()
        })
        .collect()
}

fn oracle_attn(m: &Model, p: &str, xq: &Mat, xkv: &Mat, causal: bool) -> Mat {
    let w: Vec<Mat> = ["wq", "wk", "wv", "wo"]
        .iter()
        .map(|n| param(m, &alloc::format!("{p}.{n}")))
        .collect();
    oracle::attention(
        xq,
        xkv,
        [&w[0], &w[1], &w[2], &w[3]],
        m.config.heads,
        causal,
    )
}

fn oracle_ln(m: &Model, p: &str, x: &Mat) -> Mat {
    oracle::layer_norm(
        x,
        &param(m, &alloc::format!("{p}.g"))[0],
        &param(m, &alloc::format!("{p}.b"))[0],
    )
}

fn oracle_ffn(m: &Model, p: &str, x: &Mat) -> Mat {
    let g = |n: &str| param(m, &alloc::format!("{p}.{n}"));
    oracle::ffn(x, &g("w1"), &g("b1")[0], &g("w2"), &g("b2")[0])
}

fn oracle_encoder(m: &Model, stack: &str, ids: &[u32]) -> Mat {
    let mut x = oracle_embed(m, ids, &alloc::format!("{stack}.pos"));
    for l in 0..m.config.layers {
        let p = alloc::format!("{stack}.{l}");
        let a = oracle_attn(m, &alloc::format!("{p}.attn"), &x, &x, false);
        x = oracle_ln(m, &alloc::format!("{p}.ln1"), &oracle::add(&x, &a));
        let h = oracle_ffn(m, &alloc::format!("{p}.ffn"), &x);
        x = oracle_ln(m, &alloc::format!("{p}.ln2"), &oracle::add(&x, &h));
    }
    x
}

fn oracle_decoder(m: &Model, ids: &[u32], f_h: &Mat) -> Mat {
    let mut x = oracle_embed(m, ids, "dec.pos");
    for l in 0..m.config.layers {
        let p = alloc::format!("dec.{l}");
        let a = oracle_attn(m, &alloc::format!("{p}.self"), &x, &x, true);
        x = oracle_ln(m, &alloc::format!("{p}.ln1"), &oracle::add(&x, &a));
        let c = oracle_attn(m, &alloc::format!("{p}.cross"), &x, f_h, false);
        x = oracle_ln(m, &alloc::format!("{p}.ln2"), &oracle::add(&x, &c));
        let h = oracle_ffn(m, &alloc::format!("{p}.ffn"), &x);
        x = oracle_ln(m, &alloc::format!("{p}.ln3"), &oracle::add(&x, &h));
    }
    x
}

/// Perturbs the LN gains and biases so the oracle exercises them.
fn jitter_norms(m: &mut Model, seed: u64) {
    let mut rng = seeded_rng(seed);
    let names: Vec<String> = m
        .params
        .iter()
        .filter(|(_, n, _)| {
            n.ends_with(".g") || n.ends_with(".b") || n.ends_with(".b1") || n.ends_with(".b2")
        })
        .map(|(_, n, _)| n.to_string())
        .collect();
    for n in names {
        let t = m.params.by_name(&n).unwrap();
        let vals: Vec<f64> = t
            .data()
            .iter()
            .map(|v| v + rng.random_range(-0.3..0.3))
            .collect();
        let shape = t.shape().to_vec();
        m.params
            .assign(&n, &Tensor::new(shape, vals).unwrap())
            .unwrap();
    }
}

#[test]
fn encode_shapes() {
    let cfg = ModelConfig {
        model_dim: 32,
        vocab_size: 50,
        max_positions: 16,
        ..ModelConfig::default()
    };
    let m = Model::new(cfg, 1).unwrap();
    let c: Vec<u32> = (0..7).collect();
    let e: Vec<u32> = (10..22).collect();
    let (fc, fe) = m.encode(&c, &e).unwrap();
    assert_eq!(fc.shape(), &[7, 32]);
    assert_eq!(fe.shape(), &[12, 32]);
    assert_eq!(m.encode(&c, &e).unwrap(), (fc, fe));
}

#[test]
fn encode_errors() {
    let m = Model::new(tiny(4, 1, 10), 1).unwrap();
    assert_eq!(m.encode(&[], &[1]), Err(ModelError::EmptyInput));
    assert_eq!(
        m.encode(&[10], &[1]),
        Err(ModelError::TokenId { id: 10, vocab: 10 })
    );
    let long = vec![1u32; 33];
    assert_eq!(
        m.encode(&long, &[1]),
        Err(ModelError::Length { len: 33, max: 32 })
    );
}

#[test]
fn encoder_matches_hand_rolled_oracle() {
    let mut m = Model::new(tiny(4, 1, 10), 3).unwrap();
    jitter_norms(&mut m, 4);
    let ids = [1, 5, 2, 9, 0];
    let (fc, fe) = m.encode(&ids, &ids[..3]).unwrap();
    assert!(max_abs_diff(&oracle_encoder(&m, "enc_c", &ids), &fc) < 1e-10);
    assert!(max_abs_diff(&oracle_encoder(&m, "enc_e", &ids[..3]), &fe) < 1e-10);
}

#[test]
fn multi_head_encoder_matches_oracle() {
    let mut cfg = tiny(8, 2, 12);
    cfg.layers = 2;
    let mut m = Model::new(cfg, 5).unwrap();
    jitter_norms(&mut m, 6);
    let ids = [3, 1, 4, 1, 5, 9, 2, 6];
    let (fc, _) = m.encode(&ids, &[0]).unwrap();
    assert!(max_abs_diff(&oracle_encoder(&m, "enc_c", &ids), &fc) < 1e-10);
}

#[test]
fn encoder_layers_on_embedded_input() {
    let m = Model::new(tiny(4, 1, 10), 3).unwrap();
    let ids = [2, 3, 4];
    let x = Tensor::from_rows(&oracle_embed(&m, &ids, "enc_e.pos"));
    let out = m.encoder_layers(EVENT_ENCODER, &x).unwrap();
    assert!(max_abs_diff(&oracle_encoder(&m, "enc_e", &ids), &out) < 1e-12);
    assert!(m.encoder_layers("dec.", &x).is_err());
}

#[test]
fn fusion_hand_case() {
    // One head, d_k = 2, two context positions, one event position.
    let mut cfg = tiny(2, 1, 4);
    cfg.ffn_dim = 2;
    let mut m = Model::new(cfg, 1).unwrap();
    let eye = [vec![1.0, 0.0], vec![0.0, 1.0]];
    set(&mut m, "fuse.wq", &eye);
    set(&mut m, "fuse.wk", &[vec![2.0, 0.0], vec![0.0, 1.0]]);
    set(&mut m, "fuse.wv", &[vec![1.0, 1.0], vec![0.0, 3.0]]);
    set(&mut m, "fuse.wo", &[vec![0.5, 0.0], vec![1.0, -1.0]]);
    let f_c = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let f_e = Tensor::from_rows(&[vec![1.0, 1.0]]);
    // q = [1,1]; k = [[2,0],[0,1]] → scores [2, 1]/√2.
    let s0 = 2.0 / 2f64.sqrt();
    let s1 = 1.0 / 2f64.sqrt();
    let w0 = s0.exp() / (s0.exp() + s1.exp());
    let w1 = 1.0 - w0;
    // v = [[1,1],[0,3]]; A = w0·[1,1] + w1·[0,3].
    let a = [w0, w0 + 3.0 * w1];
    let want = [a[0] * 0.5 + a[1], -a[1]];
    let (f_ca, weights) = m.cross_attention_fuse(&f_c, &f_e).unwrap();
    assert_eq!(f_ca.shape(), &[1, 2]);
    assert!((f_ca.row(0)[0] - want[0]).abs() < 1e-12);
    assert!((f_ca.row(0)[1] - want[1]).abs() < 1e-12);
    assert!((weights[0].row(0)[0] - w0).abs() < 1e-12);
    assert!((weights[0].row(0)[1] - w1).abs() < 1e-12);
}

#[test]
fn fusion_single_context_position() {
    let mut rng = seeded_rng(11);
    let m = Model::new(tiny(8, 2, 10), 2).unwrap();
    let f_c = random_mat(&mut rng, 1, 8);
    let f_e = random_mat(&mut rng, 5, 8);
    let (f_ca, weights) = m.cross_attention_fuse(&f_c, &f_e).unwrap();
    for w in &weights {
        assert!(w.data().iter().all(|&x| x == 1.0));
    }
    let image = oracle::mm(
        &oracle::mm(&to_mat(&f_c), &param(&m, "fuse.wv")),
        &param(&m, "fuse.wo"),
    );
    for i in 0..5 {
        for (x, y) in f_ca.row(i).iter().zip(&image[0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_output_projection_zeroes_fusion() {
    let mut rng = seeded_rng(12);
    let mut m = Model::new(tiny(8, 2, 10), 2).unwrap();
    set(&mut m, "fuse.wo", &vec![vec![0.0; 8]; 8]);
    let (f_ca, _) = m
        .cross_attention_fuse(&random_mat(&mut rng, 3, 8), &random_mat(&mut rng, 4, 8))
        .unwrap();
    assert_eq!(f_ca.shape(), &[4, 8]);
    assert!(f_ca.data().iter().all(|&x| x == 0.0));
}

#[test]
fn attention_rows_sum_to_one() {
    let mut rng = seeded_rng(13);
    for _ in 0..100 {
        let heads = [1, 2, 4][rng.random_range(0..3)];
        let dim = heads * rng.random_range(1..4);
        let m = Model::new(tiny(dim, heads, 6), rng.random()).unwrap();
        let (c, e) = (rng.random_range(1..10), rng.random_range(1..10));
        let (f_ca, weights) = m
            .cross_attention_fuse(&random_mat(&mut rng, c, dim), &random_mat(&mut rng, e, dim))
            .unwrap();
        assert_eq!(f_ca.shape(), &[e, dim]);
        assert_eq!(weights.len(), heads);
        for w in &weights {
            assert_eq!(w.shape(), &[e, c]);
            for i in 0..e {
                assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn fusion_trace_matches_oracle() {
    let m = Model::new(tiny(8, 2, 12), 21).unwrap();
    let (c, e) = ([1, 2, 3, 4], [5, 6, 7]);
    let t = m.fusion_trace(&c, &e).unwrap();
    let f_c = oracle_encoder(&m, "enc_c", &c);
    let f_e = oracle_encoder(&m, "enc_e", &e);
    let f_ca = oracle_attn(&m, "fuse", &f_e, &f_c, false);
    let f_he: Mat = oracle::add(
        &f_e,
        &f_ca
            .iter()
            .map(|r| r.iter().map(|x| 0.1 * x).collect())
            .collect(),
    );
    let f_h: Mat = f_c.iter().chain(&f_he).cloned().collect();
    assert!(max_abs_diff(&f_h, &t.f_h) < 1e-10);
    assert_eq!(t.heads.len(), 2);
    assert_eq!(t.heads[0].shape(), &[3, 4]);
}

#[test]
fn contextualize_cases() {
    let mut rng = seeded_rng(14);
    let f_c = random_mat(&mut rng, 3, 4);
    let f_e = random_mat(&mut rng, 2, 4);
    let mut cfg = tiny(4, 1, 6);
    cfg.beta = 0.0;
    let m = Model::new(cfg.clone(), 1).unwrap();
    let f_h = m
        .contextualize(&f_c, &f_e, &random_mat(&mut rng, 2, 4))
        .unwrap();
    assert_eq!(&f_h.data()[12..], f_e.data());

    cfg.beta = 0.1;
    let m = Model::new(cfg, 1).unwrap();
    let zeros = Tensor::zeros(&[2, 4]);
    let f_h = m
        .contextualize(&f_c, &zeros, &Tensor::full(&[2, 4], 1.0))
        .unwrap();
    assert_eq!(f_h.shape(), &[5, 4]);
    assert_eq!(&f_h.data()[..12], f_c.data());
    assert!(f_h.data()[12..].iter().all(|&x| x == 0.1));
}

#[test]
fn ablation_identity() {
    let mut rng = seeded_rng(15);
    let base = tiny(8, 2, 20);
    let zero_beta = Model::new(
        ModelConfig {
            beta: 0.0,
            ..base.clone()
        },
        9,
    )
    .unwrap();
    let no_cm = Model::new(
        ModelConfig {
            use_cm: false,
            ..base.clone()
        },
        9,
    )
    .unwrap();
    let full = Model::new(base, 9).unwrap();
    for _ in 0..50 {
        let c: Vec<u32> = (0..rng.random_range(1..12))
            .map(|_| rng.random_range(0..20))
            .collect();
        let e: Vec<u32> = (0..rng.random_range(1..12))
            .map(|_| rng.random_range(0..20))
            .collect();
        let (f_c, f_e) = full.encode(&c, &e).unwrap();
        let mut plain = f_c.data().to_vec();
        plain.extend_from_slice(f_e.data());
        for m in [&zero_beta, &no_cm] {
            let t = m.fusion_trace(&c, &e).unwrap();
            assert_eq!(t.f_h.data(), &plain[..]);
            assert_eq!(t.f_he, f_e);
            assert!(t.f_ca.is_none() && t.weights.is_empty());
        }
        assert_ne!(full.fusion_trace(&c, &e).unwrap().f_h.data(), &plain[..]);
    }
}

#[test]
fn decoder_shapes_and_oracle() {
    let mut m = Model::new(tiny(4, 1, 10), 7).unwrap();
    jitter_norms(&mut m, 8);
    let t = m.fusion_trace(&[1, 2, 3], &[4, 5]).unwrap();
    let prefix = [1, 6, 7, 3];
    let (logits, h_t) = m.decode_step(&prefix, &t.f_h).unwrap();
    assert_eq!(logits.len(), 10);
    let h = oracle_decoder(&m, &prefix, &to_mat(&t.f_h));
    for (x, y) in h_t.iter().zip(&h[3]) {
        assert!((x - y).abs() < 1e-10);
    }
    let want = oracle::mm(&h, &param(&m, "out.w"));
    for (x, y) in logits.iter().zip(&want[3]) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn multi_head_decoder_matches_oracle() {
    let mut cfg = tiny(8, 4, 12);
    cfg.layers = 2;
    let m = Model::new(cfg, 17).unwrap();
    let t = m.fusion_trace(&[1, 2, 3, 4], &[5, 6, 7]).unwrap();
    let input = [1, 8, 9, 10, 11, 2];
    let (h, _) = m.decoder_outputs(&input, &t.f_h).unwrap();
    assert!(max_abs_diff(&oracle_decoder(&m, &input, &to_mat(&t.f_h)), &h) < 1e-10);
}

#[test]
fn future_tokens_do_not_leak() {
    let mut rng = seeded_rng(16);
    let m = Model::new(tiny(8, 2, 20), 3).unwrap();
    let f_h = random_mat(&mut rng, 5, 8);
    let input: Vec<u32> = (0..10).map(|_| rng.random_range(0..20)).collect();
    let (h, _) = m.decoder_outputs(&input, &f_h).unwrap();
    for t in 0..9 {
        let mut other = input.clone();
        other[t + 1..].reverse();
        for x in &mut other[t + 1..] {
            *x = (*x + 7) % 20;
        }
        let (h2, _) = m.decoder_outputs(&other, &f_h).unwrap();
        assert_eq!(h.data()[..(t + 1) * 8], h2.data()[..(t + 1) * 8]);
    }
}

#[test]
fn similarity_head_symmetry() {
    let mut rng = seeded_rng(17);
    let mut m = Model::new(tiny(6, 1, 6), 1).unwrap();
    for _ in 0..100 {
        let w = random_mat(&mut rng, 6, 6);
        m.params.assign("sim.wsep", &w).unwrap();
        let n = rng.random_range(2..8);
        let s = m.predict_similarity(&random_mat(&mut rng, n, 6)).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(s.row(i)[j].to_bits(), s.row(j)[i].to_bits());
                assert!(s.row(i)[j] > 0.0 && s.row(i)[j] < 1.0);
            }
        }
    }
    m.params
        .assign("sim.wsep", &Tensor::zeros(&[6, 6]))
        .unwrap();
    let s = m.predict_similarity(&random_mat(&mut rng, 4, 6)).unwrap();
    assert!(s.data().iter().all(|&x| x == 0.5));
}

#[test]
fn similarity_bilinear_oracle() {
    let mut cfg = tiny(2, 1, 4);
    cfg.ffn_dim = 2;
    let mut m = Model::new(cfg, 1).unwrap();
    set(&mut m, "sim.wsep", &[vec![1.0, 2.0], vec![-1.0, 0.5]]);
    let h = [[0.5, -1.0], [2.0, 1.0]];
    let w = [[1.0, 2.0], [-1.0, 0.5]];
    let u = |i: usize, j: usize| -> f64 {
        (0..2)
            .flat_map(|a| (0..2).map(move |b| (a, b)))
            .map(|(a, b)| h[i][a] * w[a][b] * h[j][b])
            .sum()
    };
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let s = m
        .predict_similarity(&Tensor::from_rows(&[h[0].to_vec(), h[1].to_vec()]))
        .unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!((s.row(i)[j] - sig(u(i, j) + u(j, i))).abs() < 1e-12);
        }
    }
}

#[test]
fn loss_hand_cases() {
    let cfg = ModelConfig::default();
    let diff = Tensor::from_rows(&[vec![0.0, 0.3], vec![0.3, 0.05]]);
    let l = compute_loss(1.5, Some((&diff, &[0.0; 4])), &cfg).unwrap();
    assert_eq!(l.sent, Some(0.2));

    let sim = [1.0, 0.42, 0.42, 1.0];
    let y = Tensor::new(vec![2, 2], sim.to_vec()).unwrap();
    assert_eq!(
        compute_loss(1.5, Some((&y, &sim)), &cfg).unwrap().sent,
        Some(0.1)
    );

    let l = compute_loss(
        1.5,
        Some((&y, &sim)),
        &ModelConfig {
            lambda: 0.0,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_eq!(l.overall.to_bits(), l.lm.to_bits());
    let l = compute_loss(
        1.5,
        Some((&y, &sim)),
        &ModelConfig {
            use_sen: false,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_eq!((l.overall, l.sent), (1.5, None));

    let hinge = ModelConfig {
        sent_loss: SentLoss::Hinge,
        ..cfg.clone()
    };
    assert_eq!(
        compute_loss(0.0, Some((&y, &sim)), &hinge).unwrap().sent,
        Some(0.0)
    );

    assert!(matches!(
        compute_loss(1.0, Some((&y, &[0.0; 3])), &cfg),
        Err(ModelError::SimShape { .. })
    ));
}

fn toy_vocab() -> BpeVocab {
    let alphabet: Vec<char> = " .abcdefgh".chars().collect();
    BpeVocab::from_alphabet(&alphabet, 3)
}

fn toy_record(vocab: &BpeVocab, id: &str, sents: &[&str]) -> StoryRecord {
    let m = sents.len();
    StoryRecord {
        story_id: id.into(),
        context: vocab.encode("ab cd."),
        sentences: sents.iter().map(|s| vocab.encode(s)).collect(),
        events: sents
            .iter()
            .map(|s| Some(s.trim_end_matches('.').to_string()))
            .collect(),
        sentence_embeddings: Vec::new(),
        sim: (0..m * m)
            .map(|k| if k % (m + 1) == 0 { 1.0 } else { 0.3 })
            .collect(),
    }
}

fn toy_examples(cfg: &ModelConfig) -> (BpeVocab, Vec<Example>) {
    let vocab = toy_vocab();
    let stories: [&[&str]; 4] = [
        &["a b.", "c d."],
        &["e f.", "g h.", "ab."],
        &["h g."],
        &["fa.", "bc."],
    ];
    let ex = stories
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Example::from_record(&toy_record(&vocab, &alloc::format!("s{i}"), s), &vocab, cfg)
                .unwrap()
        })
        .collect();
    (vocab, ex)
}

fn toy_cfg() -> ModelConfig {
    ModelConfig {
        vocab_size: toy_vocab().len(),
        init_std: 0.1,
        ..tiny(8, 2, 1)
    }
}

#[test]
fn example_layout() {
    let cfg = toy_cfg();
    let (vocab, ex) = toy_examples(&cfg);
    let ids = vocab.special_ids();
    let e = &ex[1];
    assert_eq!(e.input[0], ids.bos);
    assert_eq!(e.input[1..], e.target[..e.target.len() - 1]);
    assert_eq!(*e.target.last().unwrap(), ids.eos);
    assert_eq!(e.m(), 3);
    for (k, &p) in e.sep_positions.iter().enumerate() {
        assert_eq!(e.input[p], ids.sep[k]);
    }
    assert_eq!(e.context[0], ids.bos);
    assert_eq!(*e.context.last().unwrap(), ids.eos);
    assert_eq!(e.events[0], ids.e_s);

    let small = ModelConfig {
        vocab_size: 5,
        ..cfg
    };
    assert!(Example::from_record(&toy_record(&vocab, "x", &["a."]), &vocab, &small).is_err());
}

#[test]
fn encoder_input_ablations() {
    let vocab = toy_vocab();
    let ids = vocab.special_ids();
    let lead = vocab.encode("ab");
    let events = [Some("a".to_string()), None];
    let cfg = toy_cfg();
    let (c, e) = encoder_inputs(
        &lead,
        &events,
        &vocab,
        &ModelConfig {
            use_events: false,
            ..cfg.clone()
        },
    );
    assert_eq!(e, vec![ids.e_s, ids.e_e]);
    assert_eq!(c.len(), lead.len() + 2);
    let (c, _) = encoder_inputs(
        &lead,
        &events,
        &vocab,
        &ModelConfig {
            use_leading: false,
            ..cfg.clone()
        },
    );
    assert_eq!(c, vec![ids.bos, ids.eos]);
    let (c, e) = encoder_inputs(
        &lead,
        &events,
        &vocab,
        &ModelConfig {
            combined_input: true,
            ..cfg
        },
    );
    assert_eq!(c[1 + lead.len()..c.len() - 1], e[..]);
}

fn train_cfg(steps: usize) -> TrainConfig {
    TrainConfig {
        epochs: 100,
        batch_size: 2,
        learning_rate: 1e-2,
        seed: 5,
        max_steps: Some(steps),
    }
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let cfg = toy_cfg();
    let (_, ex) = toy_examples(&cfg);
    let run = || {
        let mut m = Model::new(cfg.clone(), 1).unwrap();
        let r = train(&mut m, &ex, &[], &train_cfg(40), &mut |_| {}).unwrap();
        (m, r)
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert_eq!(r1.steps, r2.steps);
    assert_eq!(m1.params, m2.params);
    assert_eq!(m1.trained_steps, 40);
    let first = r1.steps[0].loss.lm;
    let last = r1.steps.last().unwrap().loss.lm;
    assert!(last < first, "{first} -> {last}");
    assert!(r1.sim_evaluations > 0);
}

#[test]
fn sentence_loss_off_never_evaluates_similarity() {
    let cfg = ModelConfig {
        use_sen: false,
        ..toy_cfg()
    };
    let (_, ex) = toy_examples(&cfg);
    let mut m = Model::new(cfg, 1).unwrap();
    let r = train(&mut m, &ex, &ex, &train_cfg(6), &mut |_| {}).unwrap();
    assert_eq!(r.sim_evaluations, 0);
    assert!(r
        .steps
        .iter()
        .all(|s| s.loss.sent.is_none() && s.loss.overall == s.loss.lm));
}

#[test]
fn best_validation_parameters_are_restored() {
    let cfg = toy_cfg();
    let (_, ex) = toy_examples(&cfg);
    let mut m = Model::new(cfg, 1).unwrap();
    let tc = TrainConfig {
        epochs: 4,
        max_steps: None,
        ..train_cfg(0)
    };
    let r = train(&mut m, &ex, &ex[..2], &tc, &mut |_| {}).unwrap();
    assert_eq!(r.valid.len(), 4);
    let best = r.best_epoch.unwrap();
    let min = r.valid.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(r.valid[best], min);
    assert_eq!(
        evaluate_loss(&m, &ex[..2], tc.batch_size).unwrap().overall,
        min
    );
}

#[test]
fn empty_training_set_is_an_error() {
    let mut m = Model::new(toy_cfg(), 1).unwrap();
    assert_eq!(
        train(&mut m, &[], &[], &TrainConfig::default(), &mut |_| {}).unwrap_err(),
        ModelError::EmptyDataset
    );
    assert_eq!(
        evaluate_loss(&m, &[], 4).unwrap_err(),
        ModelError::EmptyDataset
    );
}

#[test]
fn evaluate_loss_is_token_weighted() {
    let cfg = ModelConfig {
        use_sen: false,
        ..toy_cfg()
    };
    let (_, ex) = toy_examples(&cfg);
    let m = Model::new(cfg, 2).unwrap();
    let nll: Vec<f64> = ex.iter().flat_map(|e| token_nll(&m, e).unwrap()).collect();
    let want = nll.iter().sum::<f64>() / nll.len() as f64;
    for bs in [1, 3, 64] {
        let l = evaluate_loss(&m, &ex, bs).unwrap();
        assert_eq!(l.tokens, nll.len());
        assert!((l.lm - want).abs() < 1e-12);
    }
}

#[test]
fn posttrain_lineage() {
    let cfg = toy_cfg();
    let (_, ex) = toy_examples(&cfg);
    let mut m = Model::new(cfg, 1).unwrap();
    let before = m.params.clone();
    let r = posttrain(&mut m, &ex, 0, &train_cfg(10), &mut |_| {}).unwrap();
    assert!(r.steps.is_empty());
    assert_eq!(m.params, before);
    assert_eq!(m.lineage, None);
    posttrain(&mut m, &ex, 1, &train_cfg(10), &mut |_| {}).unwrap();
    assert_eq!(m.lineage.as_deref(), Some("ke"));
    assert_ne!(m.params, before);
}

#[test]
fn transfer_copies_only_the_event_encoder() {
    let cfg = tiny(8, 2, 12);
    let donor = Model::new(
        ModelConfig {
            combined_input: true,
            ..cfg.clone()
        },
        1,
    )
    .unwrap();
    let mut target = Model::new(cfg, 2).unwrap();
    let before = target.params.clone();
    transfer_encoder_weights(&donor, &mut target).unwrap();
    let mut copied = 0;
    for (_, name, t) in target.params.iter() {
        if let Some(rest) = name.strip_prefix(EVENT_ENCODER) {
            assert_eq!(
                t,
                donor
                    .params
                    .by_name(&alloc::format!("{CONTEXT_ENCODER}{rest}"))
                    .unwrap()
            );
            copied += 1;
        } else {
            assert_eq!(t, before.by_name(name).unwrap());
        }
    }
    assert_eq!(copied, 1 + 12);
}

#[test]
fn transfer_shape_mismatch_leaves_target_untouched() {
    let donor = Model::new(tiny(8, 2, 12), 1).unwrap();
    let mut target = Model::new(
        ModelConfig {
            ffn_dim: 4,
            ..tiny(8, 2, 12)
        },
        2,
    )
    .unwrap();
    let before = target.params.clone();
    assert!(matches!(
        transfer_encoder_weights(&donor, &mut target),
        Err(ModelError::Transfer(_))
    ));
    assert_eq!(target.params, before);
}

#[test]
fn checkpoint_params_must_fit_config() {
    let m = Model::new(tiny(8, 2, 12), 1).unwrap();
    assert!(Model::from_params(m.config.clone(), m.params.clone()).is_ok());
    assert!(matches!(
        Model::from_params(tiny(8, 2, 13), m.params.clone()),
        Err(ModelError::Checkpoint(_))
    ));
}

#[test]
fn greedy_generation_is_deterministic_and_clean() {
    let cfg = toy_cfg();
    let vocab = toy_vocab();
    let m = Model::new(cfg, 4).unwrap();
    let opts = GenerateOptions {
        strategy: Strategy::Greedy,
        max_len: 20,
        seed: 1,
    };
    let events = [Some("a b".to_string()), None];
    let g1 = generate(&m, &vocab, "ab cd.", &events, &opts).unwrap();
    let g2 = generate(
        &m,
        &vocab,
        "ab cd.",
        &events,
        &GenerateOptions { seed: 99, ..opts },
    )
    .unwrap();
    assert_eq!(g1, g2);
    assert!(g1.untrained);
    assert!(g1.ids.len() <= 20);
    for bad in ["[sep_", "<e_s>", "<e_sep>", "<e_e>", "<bos>", "<eos>"] {
        assert!(!g1.text.contains(bad));
    }
}

#[test]
fn nucleus_generation_depends_on_seed_only() {
    let m = Model::new(toy_cfg(), 4).unwrap();
    let vocab = toy_vocab();
    let opts = GenerateOptions {
        max_len: 15,
        ..GenerateOptions::default()
    };
    let a = generate(&m, &vocab, "ab", &[], &opts).unwrap();
    let b = generate(&m, &vocab, "ab", &[], &opts).unwrap();
    assert_eq!(a, b);
}
