mod common;

use amrdia::amr::RelationIndexMatrix;
use amrdia::decoder::{decode, decode_step, dual_attention_step, EncodedInput};
use amrdia::encoders::{encode, encode_graph, encode_sequence, graph_attention_scores, GraphEncoding, SequenceEncoding};
use amrdia::model::{causal_mask, Ablation, EncoderConfig, ModelConfig, ModelInput, Session};
use amrdia::numerics::{ParamStore, Tape, Tensor};
use amrdia::pipeline::synthetic::random_example;
use amrdia::pipeline::{TrainingExample, BOS, EOS};
use amrdia::training::compute_loss;
use proptest::prelude::*;

use common::*;

fn config(d: usize, heads: usize, vocab: usize, relations: usize) -> ModelConfig {
    let enc = EncoderConfig {
        d_model: d,
        n_heads: heads,
        n_layers: 1,
        ffn_dim: 3,
        max_seq_len: 12,
        dropout_rate: 0.0,
    };
    ModelConfig::new(enc, vocab, relations)
}

fn set(p: &mut ParamStore, name: &str, values: &[f64]) {
    let t = p.get_mut(name).unwrap_or_else(|| panic!("missing {name}"));
    assert_eq!(t.numel(), values.len(), "{name}");
    t.data_mut().copy_from_slice(values);
}

fn sinusoid(len: usize, d: usize) -> Mat {
    (0..len)
        .map(|pos| {
            (0..d)
                .map(|i| {
                    let k = (i - i % 2) as f64;
                    let a = pos as f64 / 10000f64.powf(k / d as f64);
                    if i % 2 == 0 {
                        a.sin()
                    } else {
                        a.cos()
                    }
                })
                .collect()
        })
        .collect()
}

fn embed(p: &ParamStore, ids: &[usize]) -> Mat {
    let table = param(p, "embed.tokens");
    ids.iter().map(|&i| table[i].clone()).collect()
}

fn tensor(m: &Mat) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

#[test]
fn graph_attention_two_nodes_direct_formula() {
    let cfg = config(2, 1, 6, 5);
    let mut p = cfg.init_params(0).unwrap();
    set(&mut p, "graph.0.attn.q", &[0.5, -0.3, 0.2, 0.8]);
    set(&mut p, "graph.0.attn.k", &[-0.4, 0.6, 0.9, 0.1]);
    set(&mut p, "graph.0.rel_key", &[0.1, 0.2, -0.3, 0.4, 0.7, -0.5, -0.2, 0.3, 0.05, -0.6]);
    let x = vec![vec![1.0, -2.0], vec![0.5, 1.5]];
    let rel = RelationIndexMatrix::from_ids(2, vec![0, 3, 4, 0]);

    let mut tape = Tape::new();
    let mut s = Session::new(&mut tape, &p, &cfg);
    let xv = s.tape.constant(&tensor(&x));
    let alpha = graph_attention_scores(&mut s, xv, &rel, 0).unwrap();
    let got = tape.value(alpha[0]).to_vec();

    let wq = param(&p, "graph.0.attn.q");
    let wk = param(&p, "graph.0.attn.k");
    let rk = param(&p, "graph.0.rel_key");
    let q = matmul(&x, &wq);
    let k = matmul(&x, &wk);
    let mut expect = Vec::new();
    for i in 0..2 {
        let e: Vec<f64> = (0..2)
            .map(|j| {
                let r = &rk[rel.get(i, j)];
                (q[i][0] * (k[j][0] + r[0]) + q[i][1] * (k[j][1] + r[1])) / 2f64.sqrt()
            })
            .collect();
        let z = e[0].exp() + e[1].exp();
        expect.extend(e.iter().map(|v| v.exp() / z));
    }
    assert!(max_abs_diff(&got, &expect) < 1e-12, "{got:?} vs {expect:?}");
}

#[test]
fn sequence_encoder_step_through() {
    let cfg = config(2, 1, 6, 3);
    let mut p = cfg.init_params(0).unwrap();
    set(&mut p, "embed.tokens", &[0.0, 0.0, 0.1, -0.1, 0.2, 0.2, 0.3, -0.2, 0.5, 0.4, -0.6, 0.1]);
    set(&mut p, "seq.0.attn.q", &[0.3, 0.1, -0.2, 0.4]);
    set(&mut p, "seq.0.attn.k", &[0.2, -0.5, 0.6, 0.1]);
    set(&mut p, "seq.0.attn.h", &[0.7, 0.2, -0.1, 0.3]);
    set(&mut p, "seq.0.ffn.w1", &[0.1, -0.2, 0.3, 0.4, 0.5, -0.6]);
    set(&mut p, "seq.0.ffn.b1", &[0.01, -0.02, 0.03]);
    set(&mut p, "seq.0.ffn.w2", &[0.2, 0.1, -0.3, 0.2, 0.4, -0.1]);
    set(&mut p, "seq.0.ffn.b2", &[0.05, -0.05]);
    set(&mut p, "seq.0.ln1.g", &[1.2, 0.8]);
    set(&mut p, "seq.0.ln2.b", &[0.1, -0.1]);
    let tokens = [4, 5];

    let mut tape = Tape::new();
    let mut s = Session::new(&mut tape, &p, &cfg);
    let enc = encode_sequence(&mut s, &tokens).unwrap();
    let got = tape.value(enc.states).to_vec();

    let x = add(&embed(&p, &tokens), &sinusoid(2, 2));
    let q = matmul(&x, &param(&p, "seq.0.attn.q"));
    let k = matmul(&x, &param(&p, "seq.0.attn.k"));
    let v = matmul(&x, &param(&p, "seq.0.attn.h"));
    let a = matmul(&attention(&q, &k, 1.0 / 2f64.sqrt(), None), &v);
    let x = norm(&p, "seq.0.ln1", &add(&x, &a));
    let x = norm(&p, "seq.0.ln2", &add(&x, &ffn(&p, "seq.0", &x)));
    assert!(max_abs_diff(&got, &flat(&x)) < 1e-10);
}

#[test]
fn graph_encoder_step_through_want_graph() {
    // want-01 -ARG0-> boy, want-01 -ARG1-> go-02, go-02 -ARG0-> boy
    let cfg = config(4, 2, 8, 7);
    let p = cfg.init_params(3).unwrap();
    let nodes = [5, 6, 7];
    let (arg0, arg0r, arg1, arg1r) = (3, 4, 5, 6);
    let rel = RelationIndexMatrix::from_ids(3, vec![0, arg0, arg1, arg0r, 0, arg0r, arg1r, arg0, 0]);

    let mut tape = Tape::new();
    let mut s = Session::new(&mut tape, &p, &cfg);
    let enc = encode_graph(&mut s, &nodes, &rel).unwrap();
    let got = tape.value(enc.states).to_vec();

    let x = embed(&p, &nodes);
    let q = matmul(&x, &param(&p, "graph.0.attn.q"));
    let k = matmul(&x, &param(&p, "graph.0.attn.k"));
    let v = matmul(&x, &param(&p, "graph.0.attn.v"));
    let rk = param(&p, "graph.0.rel_key");
    let rv = param(&p, "graph.0.rel_value");
    let dk = 2;
    let mut out = vec![vec![0.0; 4]; 3];
    for h in 0..2 {
        let c = h * dk..(h + 1) * dk;
        for i in 0..3 {
            let e: Vec<f64> = (0..3)
                .map(|j| {
                    let kr: Vec<f64> = k[j][c.clone()].iter().zip(&rk[rel.get(i, j)][c.clone()]).map(|(a, b)| a + b).collect();
                    dot(&q[i][c.clone()], &kr) / (dk as f64).sqrt()
                })
                .collect();
            let alpha = softmax(&e, &[true; 3]);
            for j in 0..3 {
                for col in c.clone() {
                    out[i][col] += alpha[j] * (v[j][col] + rv[rel.get(i, j)][col]);
                }
            }
        }
    }
    let x = norm(&p, "graph.0.ln1", &add(&x, &out));
    let x = norm(&p, "graph.0.ln2", &add(&x, &ffn(&p, "graph.0", &x)));
    assert!(max_abs_diff(&got, &flat(&x)) < 1e-10);
}

#[test]
fn dual_attention_direct_formula() {
    let cfg = config(2, 1, 6, 3);
    let mut p = cfg.init_params(0).unwrap();
    set(&mut p, "dec.0.cross_text.q", &[0.4, -0.2, 0.1, 0.3]);
    set(&mut p, "dec.0.cross_text.k", &[0.5, 0.1, -0.3, 0.2]);
    set(&mut p, "dec.0.cross_graph.q", &[-0.1, 0.6, 0.2, 0.2]);
    set(&mut p, "dec.0.cross_graph.k", &[0.3, 0.3, 0.4, -0.5]);
    set(&mut p, "dec.0.fuse.w", &[0.1, 0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8]);
    set(&mut p, "dec.0.fuse.b", &[0.01, 0.02]);
    let hs = vec![vec![1.0, 0.5], vec![-0.5, 2.0]];
    let hg = vec![vec![0.3, -1.0], vec![1.5, 0.2]];
    let d = vec![vec![0.7, -0.4]];

    let mut tape = Tape::new();
    let mut s = Session::new(&mut tape, &p, &cfg);
    let text = SequenceEncoding {
        states: s.tape.constant(&tensor(&hs)),
        mask: vec![true, true],
    };
    let graph = GraphEncoding {
        states: s.tape.constant(&tensor(&hg)),
        nodes: 2,
    };
    let dv = s.tape.constant(&tensor(&d));
    let ctx = dual_attention_step(&mut s, dv, &text, &graph, 0).unwrap();

    let side = |h: &Mat, name: &str| {
        let q = matmul(&d, &param(&p, &format!("dec.0.{name}.q")));
        let k = matmul(h, &param(&p, &format!("dec.0.{name}.k")));
        let e: Vec<f64> = k.iter().map(|kj| dot(&q[0], kj) / 2f64.sqrt()).collect();
        let a = softmax(&e, &[true, true]);
        vec![(0..2).map(|c| a[0] * h[0][c] + a[1] * h[1][c]).collect::<Vec<f64>>()]
    };
    let cs = side(&hs, "cross_text");
    let cg = side(&hg, "cross_graph");
    let c = add_row(&matmul(&hcat(&[cs.clone(), cg.clone()]), &param(&p, "dec.0.fuse.w")), &row(&p, "dec.0.fuse.b"));
    assert!(max_abs_diff(tape.value(ctx.text), &flat(&cs)) < 1e-12);
    assert!(max_abs_diff(tape.value(ctx.graph), &flat(&cg)) < 1e-12);
    assert!(max_abs_diff(tape.value(ctx.fused), &flat(&c)) < 1e-12);
}

fn tiny_input() -> ModelInput {
    ModelInput {
        context: vec![4, 5, 6],
        nodes: vec![5, 7],
        relations: RelationIndexMatrix::from_ids(2, vec![0, 3, 4, 0]),
    }
}

/// Decoder logits for every position of `prefix`, computed from plain
/// matrices and the encoder outputs.
fn naive_decoder(p: &ParamStore, heads: usize, enc: &EncodedInput, prefix: &[usize]) -> Mat {
    let d = p.get("dec.0.self.q").unwrap().shape()[0];
    let t = prefix.len();
    let x = add(&embed(p, prefix), &sinusoid(t, d));
    let q = matmul(&x, &param(p, "dec.0.self.q"));
    let k = matmul(&x, &param(p, "dec.0.self.k"));
    let v = matmul(&x, &param(p, "dec.0.self.v"));
    let causal = |i: usize, j: usize| j <= i;
    let dk = d / heads;
    let a = hcat(
        &(0..heads)
            .map(|h| {
                let (qh, kh, vh) = (cols(&q, h * dk, dk), cols(&k, h * dk, dk), cols(&v, h * dk, dk));
                matmul(&attention(&qh, &kh, 1.0 / (dk as f64).sqrt(), Some(&causal)), &vh)
            })
            .collect::<Vec<_>>(),
    );
    let x = norm(p, "dec.0.ln1", &add(&x, &a));
    let hs = mat(&enc.text);
    let hg = mat(&enc.graph);
    let side = |h: &Mat, name: &str| {
        let q = matmul(&x, &param(p, &format!("dec.0.{name}.q")));
        let k = matmul(h, &param(p, &format!("dec.0.{name}.k")));
        matmul(&attention(&q, &k, 1.0 / (d as f64).sqrt(), None), h)
    };
    let both = hcat(&[side(&hs, "cross_text"), side(&hg, "cross_graph")]);
    let c = add_row(&matmul(&both, &param(p, "dec.0.fuse.w")), &row(p, "dec.0.fuse.b"));
    let x = norm(p, "dec.0.ln2", &add(&x, &c));
    let x = norm(p, "dec.0.ln3", &add(&x, &ffn(p, "dec.0", &x)));
    add_row(&matmul(&x, &param(p, "out.w")), &row(p, "out.b"))
}

#[test]
fn decode_step_matches_step_through() {
    let cfg = config(4, 2, 9, 5);
    let mut p = cfg.init_params(5).unwrap();
    set(&mut p, "out.b", &[0.1, -0.2, 0.3, 0.0, 0.05, -0.05, 0.2, 0.1, -0.1]);
    let input = tiny_input();
    let enc = EncodedInput::new(&p, &cfg, Ablation::None, &input).unwrap();
    let got = decode_step(&p, &cfg, &[BOS], &enc).unwrap();
    let expect = naive_decoder(&p, 2, &enc, &[BOS]);
    assert!(max_abs_diff(&got, &expect[0]) < 1e-10);

    let prefix = [BOS, 6, 8];
    let got = decode_step(&p, &cfg, &prefix, &enc).unwrap();
    let expect = naive_decoder(&p, 2, &enc, &prefix);
    assert!(max_abs_diff(&got, &expect[2]) < 1e-10);
}

fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

#[test]
fn loss_of_two_target_tokens() {
    let cfg = config(4, 2, 9, 5);
    let p = cfg.init_params(8).unwrap();
    let ex = TrainingExample {
        input: tiny_input(),
        response: vec![7],
    };
    let enc = EncodedInput::new(&p, &cfg, Ablation::None, &ex.input).unwrap();
    let logits = naive_decoder(&p, 2, &enc, &[BOS, 7]);
    let expect = (cross_entropy(&logits[0], 7) + cross_entropy(&logits[1], EOS)) / 2.0;

    let mut tape = Tape::new();
    let mut s = Session::new(&mut tape, &p, &cfg);
    let loss = compute_loss(&mut s, std::slice::from_ref(&ex)).unwrap();
    assert!((tape.scalar(loss) - expect).abs() < 1e-12);
}

fn graph_states(p: &ParamStore, cfg: &ModelConfig, nodes: &[usize], rel: &RelationIndexMatrix) -> Vec<f64> {
    let mut tape = Tape::new();
    let mut s = Session::new(&mut tape, p, cfg);
    let g = encode_graph(&mut s, nodes, rel).unwrap();
    tape.value(g.states).to_vec()
}

fn decoder_logits(p: &ParamStore, cfg: &ModelConfig, input: &ModelInput, prefix: &[usize]) -> Vec<f64> {
    let mut tape = Tape::new();
    let mut s = Session::new(&mut tape, p, cfg);
    let (t, g) = encode(&mut s, input).unwrap();
    let logits = decode(&mut s, prefix, &t, &g).unwrap();
    tape.value(logits).to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn graph_encoder_is_permutation_equivariant(seed in 0u64..1000, n in 1usize..6, shift in 0usize..6) {
        let cfg = config(4, 2, 12, 7);
        let p = cfg.init_params(seed).unwrap();
        let ex = random_example(seed, 12, 7, 1, n, 1);
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).rev().collect();
        let nodes: Vec<usize> = perm.iter().map(|&i| ex.input.nodes[i]).collect();
        let a = graph_states(&p, &cfg, &ex.input.nodes, &ex.input.relations);
        let b = graph_states(&p, &cfg, &nodes, &ex.input.relations.permuted(&perm));
        for (i, &src) in perm.iter().enumerate() {
            let d = max_abs_diff(&b[i * 4..(i + 1) * 4], &a[src * 4..(src + 1) * 4]);
            prop_assert!(d < 1e-12);
        }
    }

    #[test]
    fn decoder_is_causal(seed in 0u64..1000, len in 2usize..6, cut in 1usize..5, tok in 4usize..12) {
        let cut = cut.min(len - 1);
        let cfg = config(4, 2, 12, 7);
        let p = cfg.init_params(seed).unwrap();
        let ex = random_example(seed, 12, 7, 3, 3, len);
        let mut prefix = vec![BOS];
        prefix.extend(&ex.response[..len - 1]);
        let mut changed = prefix.clone();
        for t in changed.iter_mut().skip(cut) {
            *t = tok;
        }
        let a = decoder_logits(&p, &cfg, &ex.input, &prefix);
        let b = decoder_logits(&p, &cfg, &ex.input, &changed);
        prop_assert_eq!(&a[..cut * 12], &b[..cut * 12]);
    }

    #[test]
    fn no_amr_ignores_the_graph(seed in 0u64..1000, other in 0u64..1000) {
        let cfg = config(4, 2, 12, 7);
        let p = cfg.init_params(seed).unwrap();
        let a = random_example(seed, 12, 7, 4, 3, 2);
        let b = random_example(other, 12, 7, 4, 5, 2);
        let mut swapped = a.clone();
        swapped.input.nodes = b.input.nodes;
        swapped.input.relations = b.input.relations;
        let loss = |ex: &TrainingExample| {
            let mut tape = Tape::new();
            let mut s = Session::new(&mut tape, &p, &cfg).with_ablation(Ablation::NoAmr);
            let l = compute_loss(&mut s, std::slice::from_ref(ex)).unwrap();
            tape.scalar(l)
        };
        prop_assert_eq!(loss(&a), loss(&swapped));
    }

    #[test]
    fn every_attention_map_is_row_stochastic(seed in 0u64..1000, heads in 1usize..3) {
        let cfg = config(4, heads, 12, 7);
        let p = cfg.init_params(seed).unwrap();
        let ex = random_example(seed, 12, 7, 4, 3, 3);
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, &p, &cfg);
        compute_loss(&mut s, std::slice::from_ref(&ex)).unwrap();
        let mut labels = std::collections::BTreeSet::new();
        for m in tape.attention_maps() {
            labels.insert(m.label);
            for r in m.weights.chunks(m.cols) {
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(r.iter().all(|&w| w >= 0.0));
            }
        }
        prop_assert_eq!(labels.len(), 5);
    }
}

#[test]
fn causal_mask_is_lower_triangular() {
    let m = causal_mask(3);
    assert_eq!(m, vec![true, false, false, true, true, false, true, true, true]);
}
