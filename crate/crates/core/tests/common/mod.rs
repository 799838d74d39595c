//! Fixtures and naive reference implementations shared by the integration
//! tests.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use amrdia::amr::{read_penman_blocks, AmrGraph, ParseError};
use amrdia::numerics::{ParamStore, Tensor};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

/// Every graph of `valid.penman`, with its starting line.
pub fn valid_graphs() -> Vec<(usize, AmrGraph)> {
    read_penman_blocks(&read_fixture("valid.penman"))
        .into_iter()
        .map(|b| (b.line, b.graph.unwrap_or_else(|e| panic!("line {}: {e}", b.line))))
        .collect()
}

/// Each block of `malformed.penman` as (expected error name, parse result).
pub fn malformed_cases() -> Vec<(String, Result<AmrGraph, ParseError>)> {
    read_penman_blocks(&read_fixture("malformed.penman"))
        .into_iter()
        .map(|b| {
            let expect = b
                .comments
                .iter()
                .find_map(|c| c.strip_prefix("::expect ").map(|s| s.trim().to_string()))
                .expect("block names its error");
            (expect, b.graph)
        })
        .collect()
}

pub fn error_name(e: &ParseError) -> &'static str {
    match e {
        ParseError::UnbalancedParens { .. } => "UnbalancedParens",
        ParseError::DuplicateVariable { .. } => "DuplicateVariable",
        ParseError::UnknownVariableReference { .. } => "UnknownVariableReference",
        ParseError::EmptyConcept { .. } => "EmptyConcept",
        ParseError::MissingSlash { .. } => "MissingSlash",
        ParseError::UnterminatedString { .. } => "UnterminatedString",
        ParseError::UnexpectedToken { .. } => "UnexpectedToken",
        ParseError::UnexpectedEnd { .. } => "UnexpectedEnd",
        ParseError::TrailingInput { .. } => "TrailingInput",
        ParseError::SelfRelation { .. } => "SelfRelation",
        ParseError::DuplicateTriple { .. } => "DuplicateTriple",
        ParseError::Invalid(_) => "Invalid",
    }
}

// ---- dense matrices as nested vectors ----

pub type Mat = Vec<Vec<f64>>;

pub fn mat(t: &Tensor) -> Mat {
    let shape = t.shape();
    let cols = *shape.last().unwrap();
    t.data().chunks(cols).map(|r| r.to_vec()).collect()
}

pub fn param(p: &ParamStore, name: &str) -> Mat {
    let t = p.get(name).unwrap_or_else(|| panic!("missing {name}"));
    if t.shape().len() == 1 {
        vec![t.data().to_vec()]
    } else {
        mat(t)
    }
}

pub fn row(p: &ParamStore, name: &str) -> Vec<f64> {
    p.get(name).unwrap().data().to_vec()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = b[0].len();
    a.iter()
        .map(|r| {
            (0..n)
                .map(|j| r.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn add_row(a: &Mat, b: &[f64]) -> Mat {
    a.iter().map(|r| r.iter().zip(b).map(|(x, y)| x + y).collect()).collect()
}

pub fn cols(a: &Mat, start: usize, len: usize) -> Mat {
    a.iter().map(|r| r[start..start + len].to_vec()).collect()
}

pub fn hcat(parts: &[Mat]) -> Mat {
    (0..parts[0].len())
        .map(|i| parts.iter().flat_map(|p| p[i].iter().copied()).collect())
        .collect()
}

/// Plain softmax of one row, skipping entries where `keep` is false.
pub fn softmax(xs: &[f64], keep: &[bool]) -> Vec<f64> {
    let exps: Vec<f64> = xs
        .iter()
        .zip(keep)
        .map(|(&x, &k)| if k { x.exp() } else { 0.0 })
        .collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

pub fn layer_norm(a: &Mat, g: &[f64], b: &[f64]) -> Mat {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let sd = (var + 1e-5).sqrt();
            r.iter()
                .enumerate()
                .map(|(i, x)| (x - mean) / sd * g[i] + b[i])
                .collect()
        })
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn ffn(p: &ParamStore, prefix: &str, x: &Mat) -> Mat {
    let h = add_row(&matmul(x, &param(p, &format!("{prefix}.ffn.w1"))), &row(p, &format!("{prefix}.ffn.b1")));
    let h: Mat = h.iter().map(|r| r.iter().map(|&v| gelu(v)).collect()).collect();
    add_row(&matmul(&h, &param(p, &format!("{prefix}.ffn.w2"))), &row(p, &format!("{prefix}.ffn.b2")))
}

pub fn norm(p: &ParamStore, prefix: &str, x: &Mat) -> Mat {
    layer_norm(x, &row(p, &format!("{prefix}.g")), &row(p, &format!("{prefix}.b")))
}

/// `softmax(q kᵀ · scale)` row by row with an optional boolean mask.
pub fn attention(q: &Mat, k: &Mat, scale: f64, mask: Option<&dyn Fn(usize, usize) -> bool>) -> Mat {
    q.iter()
        .enumerate()
        .map(|(i, qi)| {
            let scores: Vec<f64> = k.iter().map(|kj| dot(qi, kj) * scale).collect();
            let keep: Vec<bool> = (0..k.len()).map(|j| mask.is_none_or(|m| m(i, j))).collect();
            softmax(&scores, &keep)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn flat(a: &Mat) -> Vec<f64> {
    a.iter().flatten().copied().collect()
}

// ---- brute-force text metrics ----

/// LCS length by trying every subsequence of the shorter sequence.
pub fn brute_lcs(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let is_subseq = |s: &[&String]| {
        let mut it = long.iter();
        s.iter().all(|x| it.any(|y| y == *x))
    };
    let mut best = 0;
    for bits in 0u32..(1 << short.len()) {
        let n = bits.count_ones() as usize;
        if n <= best {
            continue;
        }
        let pick: Vec<&String> = (0..short.len()).filter(|i| bits >> i & 1 == 1).map(|i| &short[i]).collect();
        if is_subseq(&pick) {
            best = n;
        }
    }
    best
}

pub fn ngram_counts(tokens: &[String], n: usize) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *out.entry(tokens[i..i + n].join("\u{1}")).or_insert(0) += 1;
        }
    }
    out
}

/// (clipped matches, candidate n-gram total)
pub fn clipped(cand: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let hits = c.iter().map(|(g, k)| (*k).min(*r.get(g).unwrap_or(&0))).sum();
    (hits, c.values().sum())
}

/// Corpus BLEU-`max_n` with brevity penalty and add-one smoothing for orders
/// above one that have no matches.
pub fn naive_bleu(cands: &[Vec<String>], refs: &[Vec<String>], max_n: usize) -> f64 {
    let c_len: usize = cands.iter().map(Vec::len).sum();
    let r_len: usize = refs.iter().map(Vec::len).sum();
    if c_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (mut hits, mut total) = (0, 0);
        for (c, r) in cands.iter().zip(refs) {
            let (h, t) = clipped(c, r, n);
            hits += h;
            total += t;
        }
        let p = if hits > 0 {
            hits as f64 / total as f64
        } else if n >= 2 {
            1.0 / (total as f64 + 1.0)
        } else {
            return 0.0;
        };
        log_sum += p.ln() / max_n as f64;
    }
    let bp = if c_len >= r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    bp * log_sum.exp()
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}
