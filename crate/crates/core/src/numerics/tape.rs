//! Reverse-mode differentiation over a flat operation tape.
//!
//! Every op appends a node holding its forward value; [`Tape::backward`] walks
//! the nodes in reverse and accumulates gradients into the [`ParamStore`]
//! tensors the parameter leaves were read from. The op set is exactly what the
//! encoders, decoder and loss need.

use std::collections::HashMap;
use std::rc::Rc;

use super::tensor::{ParamStore, Tensor};
use super::NumericsError;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Transpose(Var),
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    RelationScores {
        q: Var,
        table: Var,
        ids: Rc<[usize]>,
        offset: usize,
    },
    RelationMix {
        alpha: Var,
        table: Var,
        ids: Rc<[usize]>,
        offset: usize,
    },
    MulConst {
        x: Var,
        factor: Vec<f64>,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    label: Option<&'static str>,
}

/// A softmax output recorded on the tape, viewed as a row-stochastic matrix.
#[derive(Debug)]
pub struct AttentionMap<'a> {
    pub label: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub weights: &'a [f64],
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

/// (rows, cols) view: 1-D is a single row, higher ranks fold leading dims.
fn matrix_dims(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        [lead @ .., last] => (lead.iter().product(), *last),
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn gelu(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let value = 0.5 * x * (1.0 + t);
    let d_inner = C * (1.0 + 3.0 * 0.044715 * x * x);
    let deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner;
    (value, deriv)
}

/// Row-wise softmax with max subtraction; masked entries get probability 0.
pub fn softmax_rows(x: &[f64], cols: usize, mask: Option<&[bool]>) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (r, (row, dst)) in x.chunks(cols).zip(out.chunks_mut(cols)).enumerate() {
        let allowed = |j: usize| mask.is_none_or(|m| m[r * cols + j]);
        let max = (0..cols)
            .filter(|&j| allowed(j))
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for j in 0..cols {
            if allowed(j) {
                dst[j] = (row[j] - max).exp();
                total += dst[j];
            }
        }
        dst.iter_mut().for_each(|v| *v /= total);
    }
    out
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            label: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("consistent node")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        matrix_dims(self.shape(v))
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Constant)
    }

    /// Reads a parameter from the store; repeated reads return the same handle.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NumericsError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| NumericsError::MissingParam(name.to_string()))?;
        let v = self.push(t.shape().to_vec(), t.data().to_vec(), Op::Param);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sb.len() != 2 || sa.is_empty() || sa.len() > 2 || *sa.last().unwrap() != sb[0] {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let (m, k) = matrix_dims(&sa);
        let n = sb[1];
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, &y) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += x * y;
                }
            }
        }
        let shape = if sa.len() == 1 { vec![n] } else { vec![m, n] };
        Ok(self.push(shape, out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("add", self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b)))
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let (_, cols) = self.dims(x);
        if self.shape(bias) != [cols] {
            return Err(mismatch("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias);
        let out = self
            .value(x)
            .chunks(cols)
            .flat_map(|row| row.iter().zip(b).map(|(v, w)| v + w))
            .collect();
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddBias(x, bias)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("mul", self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * s).collect();
        self.push(self.shape(x).to_vec(), out, Op::Scale(x, s))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, x: Var, factor: Vec<f64>) -> Result<Var, NumericsError> {
        if factor.len() != self.value(x).len() {
            return Err(mismatch("mul_const", self.shape(x), &[factor.len()]));
        }
        let out = self.value(x).iter().zip(&factor).map(|(v, f)| v * f).collect();
        Ok(self.push(self.shape(x).to_vec(), out, Op::MulConst { x, factor }))
    }

    pub fn concat_last_dim(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts.first().ok_or(NumericsError::ShapeMismatch {
            op: "concat",
            lhs: vec![],
            rhs: vec![],
        })?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let (rows, _) = self.dims(*first);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(mismatch("concat", self.shape(*first), s));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(shape, out, Op::Concat(parts.to_vec())))
    }

    pub fn transpose_last_two(&mut self, x: Var) -> Result<Var, NumericsError> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(mismatch("transpose", &s, &[]));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let batch = s[..s.len() - 2].iter().product::<usize>();
        let v = self.value(x);
        let mut out = vec![0.0; v.len()];
        for b in 0..batch {
            let base = b * r * c;
            for i in 0..r {
                for j in 0..c {
                    out[base + j * r + i] = v[base + i * c + j];
                }
            }
        }
        let mut shape = s;
        let n = shape.len();
        shape.swap(n - 2, n - 1);
        Ok(self.push(shape, out, Op::Transpose(x)))
    }

    /// Softmax over the last axis. Entries whose mask flag is `false` get
    /// probability zero. The output is recorded as an attention map under `label`.
    pub fn softmax(
        &mut self,
        x: Var,
        mask: Option<&[bool]>,
        label: &'static str,
    ) -> Result<Var, NumericsError> {
        let (_, cols) = self.dims(x);
        if let Some(m) = mask {
            if m.len() != self.value(x).len() {
                return Err(mismatch("softmax", self.shape(x), &[m.len()]));
            }
        }
        let out = softmax_rows(self.value(x), cols, mask);
        let v = self.push(self.shape(x).to_vec(), out, Op::Softmax(x));
        self.nodes[v.0].label = Some(label);
        Ok(v)
    }

    /// Sum over rows of `-log softmax(logits_row)[target_row]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NumericsError> {
        let (rows, vocab) = self.dims(logits);
        if rows != targets.len() {
            return Err(mismatch("cross_entropy", self.shape(logits), &[targets.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
            return Err(NumericsError::IndexOutOfRange {
                op: "cross_entropy",
                index: bad,
                bound: vocab,
            });
        }
        let mut loss = 0.0;
        for (row, &t) in self.value(logits).chunks(vocab).zip(targets) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        Ok(self.push(
            vec![],
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Gathers rows of a `[V, d]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(mismatch("embedding", &s, &[]));
        }
        let (v, d) = (s[0], s[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(NumericsError::IndexOutOfRange {
                    op: "embedding",
                    index: id,
                    bound: v,
                });
            }
            out.extend_from_slice(&self.value(table)[id * d..(id + 1) * d]);
        }
        Ok(self.push(
            vec![ids.len(), d],
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, NumericsError> {
        let (rows, d) = self.dims(x);
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(mismatch("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut out = vec![0.0; rows * d];
        let mut xhat = vec![0.0; rows * d];
        let mut rstd = vec![0.0; rows];
        for (r, row) in self.value(x).chunks(d).enumerate() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        Ok(self.push(
            self.shape(x).to_vec(),
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        ))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| gelu(v).0).collect();
        self.push(self.shape(x).to_vec(), out, Op::Gelu(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let (rows, cols) = self.dims(x);
        if start + len > cols || self.shape(x).len() != 2 {
            return Err(mismatch("slice_cols", self.shape(x), &[start, len]));
        }
        let out = self
            .value(x)
            .chunks(cols)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Ok(self.push(vec![rows, len], out, Op::SliceCols { x, start }))
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, NumericsError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(mismatch("select_rows", &s, &[]));
        }
        let cols = s[1];
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= s[0] {
                return Err(NumericsError::IndexOutOfRange {
                    op: "select_rows",
                    index: r,
                    bound: s[0],
                });
            }
            out.extend_from_slice(&self.value(x)[r * cols..(r + 1) * cols]);
        }
        Ok(self.push(
            vec![rows.len(), cols],
            out,
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    fn check_relation_ids(
        &self,
        m: usize,
        table: Var,
        ids: &[usize],
        offset: usize,
        width: usize,
    ) -> Result<(), NumericsError> {
        let ts = self.shape(table);
        if ts.len() != 2 || offset + width > ts[1] || ids.len() != m * m {
            return Err(mismatch("relation", ts, &[m, offset, width]));
        }
        if let Some(&bad) = ids.iter().find(|&&r| r >= ts[0]) {
            return Err(NumericsError::IndexOutOfRange {
                op: "relation",
                index: bad,
                bound: ts[0],
            });
        }
        Ok(())
    }

    /// `out[i][j] = q_i · table[ids[i][j]][offset..offset + width]` for an
    /// `[M, width]` query matrix and an `M×M` id matrix.
    pub fn relation_scores(
        &mut self,
        q: Var,
        table: Var,
        ids: Rc<[usize]>,
        offset: usize,
    ) -> Result<Var, NumericsError> {
        let (m, w) = self.dims(q);
        self.check_relation_ids(m, table, &ids, offset, w)?;
        let tcols = self.shape(table)[1];
        let (qv, tv) = (self.value(q), self.value(table));
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            let qi = &qv[i * w..(i + 1) * w];
            for j in 0..m {
                let r = ids[i * m + j];
                let emb = &tv[r * tcols + offset..r * tcols + offset + w];
                out[i * m + j] = qi.iter().zip(emb).map(|(a, b)| a * b).sum();
            }
        }
        Ok(self.push(
            vec![m, m],
            out,
            Op::RelationScores {
                q,
                table,
                ids,
                offset,
            },
        ))
    }

    /// `out[i] = Σ_j alpha[i][j] · table[ids[i][j]][offset..offset + width]`.
    pub fn relation_mix(
        &mut self,
        alpha: Var,
        table: Var,
        ids: Rc<[usize]>,
        offset: usize,
        width: usize,
    ) -> Result<Var, NumericsError> {
        let (m, m2) = self.dims(alpha);
        if m != m2 {
            return Err(mismatch("relation_mix", self.shape(alpha), &[m, m]));
        }
        self.check_relation_ids(m, table, &ids, offset, width)?;
        let tcols = self.shape(table)[1];
        let (av, tv) = (self.value(alpha), self.value(table));
        let mut out = vec![0.0; m * width];
        for i in 0..m {
            let dst = &mut out[i * width..(i + 1) * width];
            for j in 0..m {
                let a = av[i * m + j];
                let r = ids[i * m + j];
                let emb = &tv[r * tcols + offset..r * tcols + offset + width];
                for (o, e) in dst.iter_mut().zip(emb) {
                    *o += a * e;
                }
            }
        }
        Ok(self.push(
            vec![m, width],
            out,
            Op::RelationMix {
                alpha,
                table,
                ids,
                offset,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        self.push(vec![], vec![total], Op::Sum(x))
    }

    /// All softmax outputs on the tape, in recording order.
    pub fn attention_maps(&self) -> impl Iterator<Item = AttentionMap<'_>> {
        self.nodes.iter().filter_map(|n| {
            let label = n.label?;
            let (rows, cols) = matrix_dims(&n.shape);
            Some(AttentionMap {
                label,
                rows,
                cols,
                weights: &n.value,
            })
        })
    }

    /// Gradients of `loss` with respect to every node.
    fn gradients(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>, NumericsError> {
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NotScalar {
                shape: self.shape(loss).to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant | Op::Param => {}
                Op::MatMul(a, b) => {
                    let (m, k) = self.dims(*a);
                    let n = self.shape(*b)[1];
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = acc(&mut grads, *a, m * k);
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            ga[i * k + p] +=
                                gi.iter().zip(&bv[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                    let gb = acc(&mut grads, *b, k * n);
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, y) in gb[p * n..(p + 1) * n].iter_mut().zip(gi) {
                                *o += x * y;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        acc(&mut grads, v, g.len())
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(o, x)| *o += x);
                    }
                }
                Op::AddBias(x, bias) => {
                    acc(&mut grads, *x, g.len())
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(o, v)| *o += v);
                    let cols = self.shape(*bias)[0];
                    let gb = acc(&mut grads, *bias, cols);
                    for row in g.chunks(cols) {
                        gb.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                    let gb = acc(&mut grads, *b, g.len());
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
                Op::Scale(x, s) => {
                    acc(&mut grads, *x, g.len())
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(o, v)| *o += v * s);
                }
                Op::MulConst { x, factor } => {
                    acc(&mut grads, *x, g.len())
                        .iter_mut()
                        .zip(g.iter().zip(factor))
                        .for_each(|(o, (v, f))| *o += v * f);
                }
                Op::Concat(parts) => {
                    let total = *node.shape.last().unwrap();
                    let rows = g.len() / total.max(1);
                    let mut offset = 0;
                    for &p in parts {
                        let w = *self.shape(p).last().unwrap();
                        let gp = acc(&mut grads, p, rows * w);
                        for r in 0..rows {
                            for j in 0..w {
                                gp[r * w + j] += g[r * total + offset + j];
                            }
                        }
                        offset += w;
                    }
                }
                Op::Transpose(x) => {
                    let s = self.shape(*x);
                    let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
                    let batch = g.len() / (r * c).max(1);
                    let gx = acc(&mut grads, *x, g.len());
                    for b in 0..batch {
                        let base = b * r * c;
                        for i in 0..r {
                            for j in 0..c {
                                gx[base + i * c + j] += g[base + j * r + i];
                            }
                        }
                    }
                }
                Op::Softmax(x) => {
                    let (_, cols) = matrix_dims(&node.shape);
                    let y = &node.value;
                    let gx = acc(&mut grads, *x, g.len());
                    for (r, (yr, gr)) in y.chunks(cols).zip(g.chunks(cols)).enumerate() {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            gx[r * cols + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
                Op::CrossEntropy { logits, targets } => {
                    let (rows, vocab) = self.dims(*logits);
                    let probs = softmax_rows(self.value(*logits), vocab, None);
                    let gl = acc(&mut grads, *logits, rows * vocab);
                    for (r, &t) in targets.iter().enumerate() {
                        for j in 0..vocab {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            gl[r * vocab + j] += g[0] * (probs[r * vocab + j] - onehot);
                        }
                    }
                }
                Op::Embedding { table, ids } => {
                    let s = self.shape(*table);
                    let (v, d) = (s[0], s[1]);
                    let gt = acc(&mut grads, *table, v * d);
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            gt[id * d + j] += g[r * d + j];
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
                    let d = self.shape(*gamma)[0];
                    let gv = self.value(*gamma);
                    {
                        let gg = acc(&mut grads, *gamma, d);
                        for (gr, hr) in g.chunks(d).zip(xhat.chunks(d)) {
                            for j in 0..d {
                                gg[j] += gr[j] * hr[j];
                            }
                        }
                    }
                    {
                        let gb = acc(&mut grads, *beta, d);
                        for gr in g.chunks(d) {
                            gb.iter_mut().zip(gr).for_each(|(o, v)| *o += v);
                        }
                    }
                    let gx = acc(&mut grads, *x, g.len());
                    for (r, (gr, hr)) in g.chunks(d).zip(xhat.chunks(d)).enumerate() {
                        let dh: Vec<f64> = gr.iter().zip(gv).map(|(a, b)| a * b).collect();
                        let mean_dh = dh.iter().sum::<f64>() / d as f64;
                        let mean_dh_h =
                            dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            gx[r * d + j] += rstd[r] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let gx = acc(&mut grads, *x, g.len());
                    for i in 0..g.len() {
                        gx[i] += g[i] * gelu(xv[i]).1;
                    }
                }
                Op::SliceCols { x, start } => {
                    let (rows, cols) = self.dims(*x);
                    let w = node.shape[1];
                    let gx = acc(&mut grads, *x, rows * cols);
                    for r in 0..rows {
                        for j in 0..w {
                            gx[r * cols + start + j] += g[r * w + j];
                        }
                    }
                }
                Op::SelectRows { x, rows } => {
                    let (n, cols) = self.dims(*x);
                    let gx = acc(&mut grads, *x, n * cols);
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..cols {
                            gx[r * cols + j] += g[k * cols + j];
                        }
                    }
                }
                Op::RelationScores {
                    q,
                    table,
                    ids,
                    offset,
                } => {
                    let (m, w) = self.dims(*q);
                    let ts = self.shape(*table);
                    let (tr, tc) = (ts[0], ts[1]);
                    let (qv, tv) = (self.value(*q), self.value(*table));
                    let gq = acc(&mut grads, *q, m * w);
                    for i in 0..m {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            let r = ids[i * m + j];
                            for k in 0..w {
                                gq[i * w + k] += gij * tv[r * tc + offset + k];
                            }
                        }
                    }
                    let gt = acc(&mut grads, *table, tr * tc);
                    for i in 0..m {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            let r = ids[i * m + j];
                            for k in 0..w {
                                gt[r * tc + offset + k] += gij * qv[i * w + k];
                            }
                        }
                    }
                }
                Op::RelationMix {
                    alpha,
                    table,
                    ids,
                    offset,
                } => {
                    let (m, _) = self.dims(*alpha);
                    let w = node.shape[1];
                    let ts = self.shape(*table);
                    let (tr, tc) = (ts[0], ts[1]);
                    let (av, tv) = (self.value(*alpha), self.value(*table));
                    let ga = acc(&mut grads, *alpha, m * m);
                    for i in 0..m {
                        let gi = &g[i * w..(i + 1) * w];
                        for j in 0..m {
                            let r = ids[i * m + j];
                            let emb = &tv[r * tc + offset..r * tc + offset + w];
                            ga[i * m + j] += gi.iter().zip(emb).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                    let gt = acc(&mut grads, *table, tr * tc);
                    for i in 0..m {
                        let gi = &g[i * w..(i + 1) * w];
                        for j in 0..m {
                            let a = av[i * m + j];
                            let r = ids[i * m + j];
                            for k in 0..w {
                                gt[r * tc + offset + k] += a * gi[k];
                            }
                        }
                    }
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    acc(&mut grads, *x, n).iter_mut().for_each(|o| *o += g[0]);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    /// Back-propagates from a scalar and adds the result into the gradient
    /// buffers of every parameter read through [`Tape::param`]. Gradients
    /// accumulate across calls until the store is reset.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), NumericsError> {
        let grads = self.gradients(loss)?;
        for (name, &v) in &self.params {
            if let Some(g) = &grads[v.0] {
                let t = store
                    .get_mut(name)
                    .ok_or_else(|| NumericsError::MissingParam(name.clone()))?;
                t.grad_mut().iter_mut().zip(g).for_each(|(o, x)| *o += x);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(entries: &[(&str, Tensor)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, t) in entries {
            s.insert(*n, t.clone());
        }
        s
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let i = tape.constant(&Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
        let x = tape.constant(&Tensor::from_rows(&[[3.0], [4.0]]).unwrap());
        let y = tape.matmul(i, x).unwrap();
        assert_eq!(tape.shape(y), &[2, 1]);
        assert_eq!(tape.value(y), &[3.0, 4.0]);
    }

    #[test]
    fn matmul_shape_errors() {
        let mut tape = Tape::new();
        let a = tape.constant(&Tensor::zeros(&[2, 3]));
        let b = tape.constant(&Tensor::zeros(&[2, 3]));
        assert!(matches!(
            tape.matmul(a, b),
            Err(NumericsError::ShapeMismatch { op: "matmul", .. })
        ));
        let c = tape_const(&mut tape, &[3, 2]);
        assert!(tape.add(a, c).is_err());
    }

    fn tape_const(tape: &mut Tape, shape: &[usize]) -> Var {
        tape.constant(&Tensor::zeros(shape))
    }

    #[test]
    fn concat_vectors() {
        let mut tape = Tape::new();
        let a = tape.constant(&Tensor::vector(vec![1.0, 2.0]));
        let b = tape.constant(&Tensor::vector(vec![3.0]));
        let c = tape.concat_last_dim(&[a, b]).unwrap();
        assert_eq!(tape.value(c), &[1.0, 2.0, 3.0]);
        assert_eq!(tape.shape(c), &[3]);
    }

    #[test]
    fn transpose() {
        let mut tape = Tape::new();
        let a = tape.constant(&Tensor::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap());
        let t = tape.transpose_last_two(a).unwrap();
        assert_eq!(tape.shape(t), &[3, 2]);
        assert_eq!(tape.value(t), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn softmax_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(&Tensor::vector(vec![0.0, 0.0]));
        let s = tape.softmax(x, None, "t").unwrap();
        assert_eq!(tape.value(s), &[0.5, 0.5]);
        let x = tape.constant(&Tensor::vector(vec![0.0, 2f64.ln()]));
        let s = tape.softmax(x, None, "t").unwrap();
        assert!((tape.value(s)[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((tape.value(s)[1] - 2.0 / 3.0).abs() < 1e-15);
        let x = tape.constant(&Tensor::vector(vec![1.0, 5.0, -2.0]));
        let m = tape.softmax(x, Some(&[true, false, true]), "t").unwrap();
        assert_eq!(tape.value(m)[1], 0.0);
        assert!((tape.value(m).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(tape.attention_maps().count(), 3);
    }

    #[test]
    fn cross_entropy_values() {
        let mut tape = Tape::new();
        let l = tape.constant(&Tensor::vector(vec![0.0; 4]));
        let ce = tape.cross_entropy(l, &[1]).unwrap();
        assert!((tape.scalar(ce) - 4f64.ln()).abs() < 1e-12);
        let l = tape.constant(&Tensor::vector(vec![1.0, 2.0, 3.0]));
        let ce = tape.cross_entropy(l, &[2]).unwrap();
        let expected = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln() - 3.0;
        assert!((tape.scalar(ce) - expected).abs() < 1e-12);
        assert!((tape.scalar(ce) - 0.40761).abs() < 1e-5);
        let l = tape.constant(&Tensor::vector(vec![0.0, 30.0, 0.0]));
        let ce = tape.cross_entropy(l, &[1]).unwrap();
        assert!(tape.scalar(ce) < 1e-9);
        assert!(matches!(
            tape.cross_entropy(l, &[3]),
            Err(NumericsError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn square_and_sum_gradients() {
        let mut s = store(&[("w", Tensor::vector(vec![3.0]))]);
        let mut tape = Tape::new();
        let w = tape.param(&s, "w").unwrap();
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss, &mut s).unwrap();
        assert_eq!(s.get("w").unwrap().grad().unwrap(), &[6.0]);
        // accumulates without reset
        tape.backward(loss, &mut s).unwrap();
        assert_eq!(s.get("w").unwrap().grad().unwrap(), &[12.0]);

        let mut s = store(&[("w", Tensor::zeros(&[2, 3, 2]))]);
        let mut tape = Tape::new();
        let w = tape.param(&s, "w").unwrap();
        let loss = tape.sum(w);
        tape.backward(loss, &mut s).unwrap();
        assert!(s.get("w").unwrap().grad().unwrap().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut s = store(&[("w", Tensor::vector(vec![1.0, 2.0]))]);
        let mut tape = Tape::new();
        let w = tape.param(&s, "w").unwrap();
        assert!(matches!(
            tape.backward(w, &mut s),
            Err(NumericsError::NotScalar { .. })
        ));
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h).0 - gelu(x - h).0) / (2.0 * h);
            assert!((fd - gelu(x).1).abs() < 1e-8);
        }
    }
}
