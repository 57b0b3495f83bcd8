//! Reverse-mode differentiation over a tape of matrix operations.
//!
//! A [`Graph`] records every intermediate value in execution order. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and returns
//! gradients for every named parameter that took part.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use super::tensor::{gemm_acc, matmul, Matrix};

pub type NodeId = usize;

const LN_EPS: f64 = 1e-5;
/// Floor on log-probabilities inside cross-entropy.
pub const LOG_PROB_FLOOR: f64 = -1e4;

/// Which entries of a score matrix may receive probability mass.
#[derive(Debug, Clone)]
pub enum Mask {
    None,
    /// Row i may attend to columns 0..=i.
    Causal,
    /// Same column mask for every row.
    Columns(Vec<bool>),
}

impl Mask {
    fn allows(&self, r: usize, c: usize) -> bool {
        match self {
            Mask::None => true,
            Mask::Causal => c <= r,
            Mask::Columns(cols) => cols[c],
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    Add(NodeId, NodeId),
    AddRow { x: NodeId, row: NodeId },
    MulConst { x: NodeId, mask: Matrix },
    Scale(NodeId, f64),
    Relu(NodeId),
    Sigmoid(NodeId),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, xhat: Matrix, inv_std: Vec<f64> },
    Softmax { x: NodeId },
    Gather { table: NodeId, ids: Vec<usize> },
    ReplaceRows { x: NodeId, rows: Vec<usize> },
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize },
    Mix { gen: NodeId, copy: NodeId, gate: NodeId },
    CrossEntropy { probs: NodeId, targets: Vec<usize>, scale: f64, smoothing: f64 },
    Sum(Vec<NodeId>),
}

struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
}

pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    params: HashMap<&'a str, NodeId>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register a named parameter; repeated calls return the same node.
    pub fn param(&mut self, name: &'a str, value: &'a Matrix) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(Cow::Borrowed(value), Op::Param);
        self.params.insert(name, id);
        id
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Cow::Owned(value), Op::Leaf)
    }

    pub fn constant_ref(&mut self, value: &'a Matrix) -> NodeId {
        self.push(Cow::Borrowed(value), Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.matmul_t(a, false, b, false)
    }

    pub fn matmul_t(&mut self, a: NodeId, ta: bool, b: NodeId, tb: bool) -> NodeId {
        let v = matmul(self.value(a), ta, self.value(b), tb);
        self.push(Cow::Owned(v), Op::MatMul { a, b, ta, tb })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(Cow::Owned(v), Op::Add(a, b))
    }

    /// Add a 1×d row to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        let r = self.value(row);
        assert_eq!((r.rows, r.cols), (1, v.cols), "add_row expects a 1×d row");
        for i in 0..v.rows {
            for (a, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *a += b;
            }
        }
        self.push(Cow::Owned(v), Op::AddRow { x, row })
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, x: NodeId, mask: Matrix) -> NodeId {
        let mut v = self.value(x).clone();
        for (a, m) in v.data.iter_mut().zip(&mask.data) {
            *a *= m;
        }
        self.push(Cow::Owned(v), Op::MulConst { x, mask })
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        let mut v = self.value(x).clone();
        v.scale(k);
        self.push(Cow::Owned(v), Op::Scale(x, k))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        for a in &mut v.data {
            *a = a.max(0.0);
        }
        self.push(Cow::Owned(v), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        for a in &mut v.data {
            *a = sigmoid(*a);
        }
        self.push(Cow::Owned(v), Op::Sigmoid(x))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        let g = self.value(gain);
        let b = self.value(bias);
        let mut xhat = Matrix::zeros(n, d);
        let mut out = Matrix::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat.set(i, j, h);
                out.set(i, j, h * g.data[j] + b.data[j]);
            }
        }
        self.push(Cow::Owned(out), Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    /// Row-wise softmax; disallowed entries are exactly zero. A row with no
    /// allowed entry is all zeros.
    pub fn softmax(&mut self, x: NodeId, mask: &Mask) -> NodeId {
        let xv = self.value(x);
        let (n, m) = xv.shape();
        let mut out = Matrix::zeros(n, m);
        for i in 0..n {
            let row = xv.row(i);
            let max = (0..m)
                .filter(|&j| mask.allows(i, j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut z = 0.0;
            let o = out.row_mut(i);
            for j in 0..m {
                if mask.allows(i, j) {
                    o[j] = (row[j] - max).exp();
                    z += o[j];
                }
            }
            for v in o.iter_mut() {
                *v /= z;
            }
        }
        self.push(Cow::Owned(out), Op::Softmax { x })
    }

    pub fn gather_rows(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols);
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(t.row(id));
        }
        self.push(Cow::Owned(out), Op::Gather { table, ids: ids.to_vec() })
    }

    /// Overwrite the given rows with a constant; no gradient flows through them.
    pub fn replace_rows(&mut self, x: NodeId, rows: &[usize], value: f64) -> NodeId {
        let mut v = self.value(x).clone();
        for &r in rows {
            v.row_mut(r).iter_mut().for_each(|a| *a = value);
        }
        self.push(Cow::Owned(v), Op::ReplaceRows { x, rows: rows.to_vec() })
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols, cols);
            data.extend_from_slice(&v.data);
            rows += v.rows;
        }
        self.push(Cow::Owned(Matrix::from_vec(rows, cols, data)), Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows, rows);
            for i in 0..rows {
                out.row_mut(i)[off..off + v.cols].copy_from_slice(v.row(i));
            }
            off += v.cols;
        }
        self.push(Cow::Owned(out), Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        let v = self.value(x);
        let mut out = Matrix::zeros(v.rows, end - start);
        for i in 0..v.rows {
            out.row_mut(i).copy_from_slice(&v.row(i)[start..end]);
        }
        self.push(Cow::Owned(out), Op::SliceCols { x, start })
    }

    /// `(1 - gate) * gen + gate * copy`, with `gate` an n×1 column.
    pub fn mix(&mut self, gen: NodeId, copy: NodeId, gate: NodeId) -> NodeId {
        let g = self.value(gen);
        let c = self.value(copy);
        let a = self.value(gate);
        assert_eq!(g.shape(), c.shape());
        assert_eq!((a.rows, a.cols), (g.rows, 1));
        let mut out = Matrix::zeros(g.rows, g.cols);
        for i in 0..g.rows {
            let alpha = a.data[i];
            for j in 0..g.cols {
                out.set(i, j, (1.0 - alpha) * g.get(i, j) + alpha * c.get(i, j));
            }
        }
        self.push(Cow::Owned(out), Op::Mix { gen, copy, gate })
    }

    /// `scale * Σ_i -log probs[i, targets[i]]` as a 1×1 node.
    pub fn cross_entropy(&mut self, probs: NodeId, targets: &[usize], scale: f64) -> NodeId {
        self.cross_entropy_smoothed(probs, targets, scale, 0.0)
    }

    /// Cross-entropy against `(1 - smoothing)·onehot + smoothing·uniform`.
    pub fn cross_entropy_smoothed(
        &mut self,
        probs: NodeId,
        targets: &[usize],
        scale: f64,
        smoothing: f64,
    ) -> NodeId {
        let p = self.value(probs);
        assert_eq!(p.rows, targets.len());
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            total -= (1.0 - smoothing) * clamped_log(p.get(i, t));
            if smoothing > 0.0 {
                let mean: f64 = p.row(i).iter().map(|&v| clamped_log(v)).sum::<f64>() / p.cols as f64;
                total -= smoothing * mean;
            }
        }
        self.push(
            Cow::Owned(Matrix::from_vec(1, 1, vec![scale * total])),
            Op::CrossEntropy { probs, targets: targets.to_vec(), scale, smoothing },
        )
    }

    pub fn sum(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            v.add_assign(self.value(p));
        }
        self.push(Cow::Owned(v), Op::Sum(parts.to_vec()))
    }

    /// Gradients of the scalar node `loss` with respect to every parameter.
    pub fn backward(&self, loss: NodeId) -> BTreeMap<String, Matrix> {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(Matrix::filled(1, 1, 1.0));

        fn acc(grads: &mut [Option<Matrix>], id: NodeId, delta: Matrix) {
            match &mut grads[id] {
                Some(g) => g.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        }
        fn acc_with(grads: &mut [Option<Matrix>], id: NodeId, shape: (usize, usize), f: impl FnOnce(&mut Matrix)) {
            let g = grads[id].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1));
            f(g);
        }

        for id in (0..=loss).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let y: &Matrix = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param => {
                    grads[id] = Some(dy);
                }
                Op::MatMul { a, b, ta, tb } => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    // y = op(A) op(B)
                    // dA: if !ta, dA = dy op(B)^T ; if ta, dA = op(B) dy^T
                    acc_with(&mut grads, *a, av.shape(), |g| {
                        if *ta {
                            gemm_acc(g, bv, *tb, &dy, true);
                        } else {
                            gemm_acc(g, &dy, false, bv, !*tb);
                        }
                    });
                    acc_with(&mut grads, *b, bv.shape(), |g| {
                        if *tb {
                            gemm_acc(g, &dy, true, av, *ta);
                        } else {
                            gemm_acc(g, av, !*ta, &dy, false);
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, dy.clone());
                    acc(&mut grads, *b, dy);
                }
                Op::AddRow { x, row } => {
                    let mut dr = Matrix::zeros(1, dy.cols);
                    for i in 0..dy.rows {
                        for (a, b) in dr.data.iter_mut().zip(dy.row(i)) {
                            *a += b;
                        }
                    }
                    acc(&mut grads, *row, dr);
                    acc(&mut grads, *x, dy);
                }
                Op::MulConst { x, mask } => {
                    let mut d = dy;
                    for (a, m) in d.data.iter_mut().zip(&mask.data) {
                        *a *= m;
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Scale(x, k) => {
                    let mut d = dy;
                    d.scale(*k);
                    acc(&mut grads, *x, d);
                }
                Op::Relu(x) => {
                    let mut d = dy;
                    for (a, v) in d.data.iter_mut().zip(&y.data) {
                        if *v <= 0.0 {
                            *a = 0.0;
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Sigmoid(x) => {
                    let mut d = dy;
                    for (a, s) in d.data.iter_mut().zip(&y.data) {
                        *a *= s * (1.0 - s);
                    }
                    acc(&mut grads, *x, d);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let (n, dim) = xhat.shape();
                    let g = self.value(*gain);
                    let mut dg = Matrix::zeros(1, dim);
                    let mut db = Matrix::zeros(1, dim);
                    let mut dx = Matrix::zeros(n, dim);
                    for i in 0..n {
                        let dyr = dy.row(i);
                        let xr = xhat.row(i);
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for j in 0..dim {
                            dg.data[j] += dyr[j] * xr[j];
                            db.data[j] += dyr[j];
                            let dxh = dyr[j] * g.data[j];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xr[j];
                        }
                        let k = inv_std[i] / dim as f64;
                        let out = dx.row_mut(i);
                        for j in 0..dim {
                            let dxh = dyr[j] * g.data[j];
                            out[j] = k * (dim as f64 * dxh - sum_dxhat - xr[j] * sum_dxhat_xhat);
                        }
                    }
                    acc(&mut grads, *gain, dg);
                    acc(&mut grads, *bias, db);
                    acc(&mut grads, *x, dx);
                }
                Op::Softmax { x } => {
                    let mut dx = Matrix::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let yr = y.row(i);
                        let dr = dy.row(i);
                        let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
                            *o = yr[j] * (dr[j] - dot);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Gather { table, ids } => {
                    let shape = self.value(*table).shape();
                    acc_with(&mut grads, *table, shape, |g| {
                        for (i, &r) in ids.iter().enumerate() {
                            for (a, b) in g.row_mut(r).iter_mut().zip(dy.row(i)) {
                                *a += b;
                            }
                        }
                    });
                }
                Op::ReplaceRows { x, rows } => {
                    let mut d = dy;
                    for &r in rows {
                        d.row_mut(r).iter_mut().for_each(|a| *a = 0.0);
                    }
                    acc(&mut grads, *x, d);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.value(p).shape();
                        let d = Matrix::from_vec(r, c, dy.data[off * c..(off + r) * c].to_vec());
                        acc(&mut grads, p, d);
                        off += r;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.value(p).shape();
                        let mut d = Matrix::zeros(r, c);
                        for i in 0..r {
                            d.row_mut(i).copy_from_slice(&dy.row(i)[off..off + c]);
                        }
                        acc(&mut grads, p, d);
                        off += c;
                    }
                }
                Op::SliceCols { x, start } => {
                    let shape = self.value(*x).shape();
                    acc_with(&mut grads, *x, shape, |g| {
                        for i in 0..dy.rows {
                            for (a, b) in g.row_mut(i)[*start..*start + dy.cols].iter_mut().zip(dy.row(i)) {
                                *a += b;
                            }
                        }
                    });
                }
                Op::Mix { gen, copy, gate } => {
                    let gv = self.value(*gen);
                    let cv = self.value(*copy);
                    let av = self.value(*gate);
                    let mut dg = Matrix::zeros(gv.rows, gv.cols);
                    let mut dc = Matrix::zeros(gv.rows, gv.cols);
                    let mut da = Matrix::zeros(gv.rows, 1);
                    for i in 0..gv.rows {
                        let alpha = av.data[i];
                        let mut s = 0.0;
                        for j in 0..gv.cols {
                            let d = dy.get(i, j);
                            dg.set(i, j, (1.0 - alpha) * d);
                            dc.set(i, j, alpha * d);
                            s += d * (cv.get(i, j) - gv.get(i, j));
                        }
                        da.data[i] = s;
                    }
                    acc(&mut grads, *gen, dg);
                    acc(&mut grads, *copy, dc);
                    acc(&mut grads, *gate, da);
                }
                Op::CrossEntropy { probs, targets, scale, smoothing } => {
                    let p = self.value(*probs);
                    let k = dy.data[0] * scale;
                    let live = |v: f64| v > 0.0 && v.ln() > LOG_PROB_FLOOR;
                    let mut d = Matrix::zeros(p.rows, p.cols);
                    for (i, &t) in targets.iter().enumerate() {
                        if *smoothing > 0.0 {
                            let w = smoothing / p.cols as f64;
                            for j in 0..p.cols {
                                let v = p.get(i, j);
                                if live(v) {
                                    d.set(i, j, -k * w / v);
                                }
                            }
                        }
                        let v = p.get(i, t);
                        if live(v) {
                            d.set(i, t, d.get(i, t) - k * (1.0 - smoothing) / v);
                        }
                    }
                    acc(&mut grads, *probs, d);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        acc(&mut grads, p, dy.clone());
                    }
                }
            }
        }

        self.params
            .iter()
            .map(|(&name, &id)| {
                let shape = self.value(id).shape();
                let g = grads[id].take().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1));
                (name.to_owned(), g)
            })
            .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn clamped_log(p: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(LOG_PROB_FLOOR)
    } else {
        LOG_PROB_FLOOR
    }
}
