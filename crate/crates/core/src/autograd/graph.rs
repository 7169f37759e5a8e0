use super::tensor::{gemm, Tensor};
use super::AutogradError;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sin(Var),
    Cos(Var),
    Abs(Var),
    Recip(Var),
    Clamp(Var, f64, f64),
    RowNorm(Var),
    Dot(Var, Var),
    Softmax(Var),
    LogSumExp(Var),
    Mse(Var, Var),
    CrossEntropy(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    Transpose(Var),
    Reshape(Var),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    PickRows(Var, Vec<usize>),
    Gather(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// list is already a topological order and `backward` walks it in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn rows_cols(t: &Tensor) -> (usize, usize) {
    match t.shape() {
        [] => (1, 1),
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => unreachable!("rank > 2 tensors are rejected on construction"),
    }
}

fn reduced_shape(t: &Tensor) -> Vec<usize> {
    match t.shape() {
        [r, _] => vec![*r],
        _ => Vec::new(),
    }
}

fn add_into(acc: &mut Option<Vec<f64>>, contrib: &[f64]) {
    match acc {
        Some(buf) => buf.iter_mut().zip(contrib).for_each(|(a, c)| *a += c),
        None => *acc = Some(contrib.to_vec()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn check_rank(t: &Tensor) -> Result<(), AutogradError> {
        if t.rank() > 2 {
            return Err(AutogradError::UnsupportedRank(t.rank()));
        }
        Ok(())
    }

    /// Trainable or differentiable input.
    pub fn param(&mut self, value: Tensor) -> Result<Var, AutogradError> {
        Self::check_rank(&value)?;
        Ok(self.push(value, Op::Leaf, true))
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, AutogradError> {
        Self::check_rank(&value)?;
        Ok(self.push(value, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` call's loss with respect to `v`, if
    /// `v` participated in it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Clears gradients so `backward` may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutogradError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(AutogradError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.tracked(&[x]);
        self.push(out, op, rg)
    }

    fn zip(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, AutogradError> {
        self.same_shape(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.tracked(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let mismatch = || AutogradError::ShapeMismatch {
            op: "matmul",
            lhs: ta.shape().to_vec(),
            rhs: tb.shape().to_vec(),
        };
        let (n, k) = ta.dims2().ok_or_else(mismatch)?;
        let (k2, m) = tb.dims2().ok_or_else(mismatch)?;
        if k != k2 {
            return Err(mismatch());
        }
        let mut out = vec![0.0; n * m];
        gemm(ta.data(), (n, k), false, tb.data(), (k, m), false, &mut out, 0.0);
        let out = Tensor::matrix(n, m, out)?;
        let rg = self.tracked(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.zip("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.zip("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.zip("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn broadcast_check(
        &self,
        name: &'static str,
        x: Var,
        v: Var,
        along_rows: bool,
    ) -> Result<(usize, usize), AutogradError> {
        let (tx, tv) = (self.value(x), self.value(v));
        let err = || AutogradError::ShapeMismatch {
            op: name,
            lhs: tx.shape().to_vec(),
            rhs: tv.shape().to_vec(),
        };
        let (r, c) = tx.dims2().ok_or_else(err)?;
        let want = if along_rows { c } else { r };
        if tv.rank() != 1 || tv.len() != want {
            return Err(err());
        }
        Ok((r, c))
    }

    /// `x[i, j] + v[j]` for a matrix `x` and a vector `v`.
    pub fn add_row(&mut self, x: Var, v: Var) -> Result<Var, AutogradError> {
        let (r, c) = self.broadcast_check("add_row", x, v, true)?;
        let (tx, tv) = (self.value(x), self.value(v));
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(c) {
            row.iter_mut().zip(tv.data()).for_each(|(a, b)| *a += b);
        }
        let out = Tensor::matrix(r, c, data)?;
        let rg = self.tracked(&[x, v]);
        Ok(self.push(out, Op::AddRow(x, v), rg))
    }

    /// `x[i, j] * v[j]`.
    pub fn mul_row(&mut self, x: Var, v: Var) -> Result<Var, AutogradError> {
        let (r, c) = self.broadcast_check("mul_row", x, v, true)?;
        let (tx, tv) = (self.value(x), self.value(v));
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(c) {
            row.iter_mut().zip(tv.data()).for_each(|(a, b)| *a *= b);
        }
        let out = Tensor::matrix(r, c, data)?;
        let rg = self.tracked(&[x, v]);
        Ok(self.push(out, Op::MulRow(x, v), rg))
    }

    /// `x[i, j] * v[i]`.
    pub fn mul_col(&mut self, x: Var, v: Var) -> Result<Var, AutogradError> {
        let (r, c) = self.broadcast_check("mul_col", x, v, false)?;
        let (tx, tv) = (self.value(x), self.value(v));
        let mut data = tx.data().to_vec();
        for (row, s) in data.chunks_mut(c).zip(tv.data()) {
            row.iter_mut().for_each(|a| *a *= s);
        }
        let out = Tensor::matrix(r, c, data)?;
        let rg = self.tracked(&[x, v]);
        Ok(self.push(out, Op::MulCol(x, v), rg))
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Var {
        self.unary(x, Op::Scale(x, alpha), |v| alpha * v)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sin(x), f64::sin)
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, Op::Cos(x), f64::cos)
    }

    /// Elementwise absolute value; the subgradient at 0 is 0.
    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), f64::abs)
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.unary(x, Op::Recip(x), |v| 1.0 / v)
    }

    /// Elementwise clamp into `[lo, hi]`; either bound may be infinite.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.max(lo).min(hi))
    }

    /// Euclidean norm of each row (matrix → vector) or of the whole vector
    /// (vector → scalar). The gradient of a zero-length row is taken as 0.
    pub fn l2norm(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (r, c) = rows_cols(t);
        let data = (0..r)
            .map(|i| t.data()[i * c..(i + 1) * c].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let out = Tensor::new(reduced_shape(t), data).expect("reduced shape");
        let rg = self.tracked(&[x]);
        self.push(out, Op::RowNorm(x), rg)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || ta.shape() != tb.shape() {
            return Err(AutogradError::ShapeMismatch {
                op: "dot",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        let rg = self.tracked(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), rg))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var, AutogradError> {
        let t = self.value(x);
        let (r, c) = rows_cols(t);
        if c == 0 || t.rank() == 0 {
            return Err(AutogradError::EmptyAxis("softmax"));
        }
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c).take(r) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.tracked(&[x]);
        Ok(self.push(out, Op::Softmax(x), rg))
    }

    /// Log-sum-exp along the last axis (matrix → vector, vector → scalar).
    pub fn logsumexp(&mut self, x: Var) -> Result<Var, AutogradError> {
        let t = self.value(x);
        let (r, c) = rows_cols(t);
        if c == 0 || t.rank() == 0 {
            return Err(AutogradError::EmptyAxis("logsumexp"));
        }
        let data = t
            .data()
            .chunks(c)
            .take(r)
            .map(|row| {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            })
            .collect();
        let out = Tensor::new(reduced_shape(t), data)?;
        let rg = self.tracked(&[x]);
        Ok(self.push(out, Op::LogSumExp(x), rg))
    }

    /// Mean squared error between equally shaped tensors (→ scalar).
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.same_shape("mse", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let n = ta.len().max(1) as f64;
        let s = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        let rg = self.tracked(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::Mse(a, b), rg))
    }

    /// Per-row cross entropy `logsumexp(row) - row[target]` of an `N x C`
    /// logit matrix; returns an `N` vector so callers can weight rows.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, AutogradError> {
        let t = self.value(logits);
        let (r, c) = t.dims2().ok_or(AutogradError::ShapeMismatch {
            op: "cross_entropy",
            lhs: t.shape().to_vec(),
            rhs: vec![targets.len()],
        })?;
        if c == 0 {
            return Err(AutogradError::EmptyAxis("cross_entropy"));
        }
        if targets.len() != r || targets.iter().any(|&k| k >= c) {
            return Err(AutogradError::IndexOutOfRange("cross_entropy"));
        }
        let data = t
            .data()
            .chunks(c)
            .zip(targets)
            .map(|(row, &k)| {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - row[k]
            })
            .collect();
        let out = Tensor::vector(data);
        let rg = self.tracked(&[logits]);
        Ok(self.push(out, Op::CrossEntropy(logits, targets.to_vec()), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.tracked(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        let rg = self.tracked(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, AutogradError> {
        let t = self.value(x);
        let (r, c) = t.dims2().ok_or(AutogradError::UnsupportedRank(t.rank()))?;
        let src = t.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let out = Tensor::matrix(c, r, data)?;
        let rg = self.tracked(&[x]);
        Ok(self.push(out, Op::Transpose(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutogradError> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        Self::check_rank(&out)?;
        let rg = self.tracked(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, AutogradError> {
        let t = self.value(x);
        let (r, c) = t.dims2().ok_or(AutogradError::UnsupportedRank(t.rank()))?;
        if start > end || end > r {
            return Err(AutogradError::IndexOutOfRange("slice_rows"));
        }
        let out = Tensor::matrix(end - start, c, t.data()[start * c..end * c].to_vec())?;
        let rg = self.tracked(&[x]);
        Ok(self.push(out, Op::SliceRows(x, start), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutogradError> {
        let first = parts.first().ok_or(AutogradError::EmptyAxis("concat_rows"))?;
        let c = self.value(*first).dims2().map(|d| d.1);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            match (t.dims2(), c) {
                (Some((r, pc)), Some(c)) if pc == c => {
                    rows += r;
                    data.extend_from_slice(t.data());
                }
                _ => {
                    return Err(AutogradError::ShapeMismatch {
                        op: "concat_rows",
                        lhs: self.value(*first).shape().to_vec(),
                        rhs: t.shape().to_vec(),
                    })
                }
            }
        }
        let out = Tensor::matrix(rows, c.unwrap_or(0), data)?;
        let rg = self.tracked(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutogradError> {
        let first = parts.first().ok_or(AutogradError::EmptyAxis("concat_cols"))?;
        let r = self.value(*first).dims2().map(|d| d.0);
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let t = self.value(*p);
            match (t.dims2(), r) {
                (Some((pr, c)), Some(r)) if pr == r => widths.push(c),
                _ => {
                    return Err(AutogradError::ShapeMismatch {
                        op: "concat_cols",
                        lhs: self.value(*first).shape().to_vec(),
                        rhs: t.shape().to_vec(),
                    })
                }
            }
        }
        let rows = r.unwrap_or(0);
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(*p).data()[i * w..(i + 1) * w]);
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        let rg = self.tracked(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// `out[i] = x[i, idx[i]]` for an `N x C` matrix.
    pub fn pick_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, AutogradError> {
        let t = self.value(x);
        let (r, c) = t.dims2().ok_or(AutogradError::UnsupportedRank(t.rank()))?;
        if idx.len() != r || idx.iter().any(|&k| k >= c) {
            return Err(AutogradError::IndexOutOfRange("pick_rows"));
        }
        let data = idx.iter().enumerate().map(|(i, &k)| t.data()[i * c + k]).collect();
        let rg = self.tracked(&[x]);
        Ok(self.push(Tensor::vector(data), Op::PickRows(x, idx.to_vec()), rg))
    }

    /// `out[i] = x[idx[i]]` for a vector `x`.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var, AutogradError> {
        let t = self.value(x);
        if t.rank() != 1 || idx.iter().any(|&k| k >= t.len()) {
            return Err(AutogradError::IndexOutOfRange("gather"));
        }
        let data = idx.iter().map(|&k| t.data()[k]).collect();
        let rg = self.tracked(&[x]);
        Ok(self.push(Tensor::vector(data), Op::Gather(x, idx.to_vec()), rg))
    }

    /// Accumulates d(loss)/d(node) for every tracked node reachable from
    /// the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutogradError> {
        if self.backward_done {
            return Err(AutogradError::BackwardTwice);
        }
        if self.value(loss).len() != 1 {
            return Err(AutogradError::NotScalar(self.value(loss).shape().to_vec()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(idx, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        // Only keep gradients of tracked nodes.
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let tracked = |v: Var| self.nodes[v.0].requires_grad;
        macro_rules! send {
            ($v:expr, $buf:expr) => {
                if tracked($v) {
                    add_into(&mut grads[$v.0], &$buf);
                }
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (n, k) = ta.dims2().unwrap();
                let (_, m) = tb.dims2().unwrap();
                if tracked(*a) {
                    let mut da = vec![0.0; n * k];
                    gemm(g, (n, m), false, tb.data(), (k, m), true, &mut da, 0.0);
                    add_into(&mut grads[a.0], &da);
                }
                if tracked(*b) {
                    let mut db = vec![0.0; k * m];
                    gemm(ta.data(), (n, k), true, g, (n, m), false, &mut db, 0.0);
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::Add(a, b) => {
                send!(*a, g);
                send!(*b, g);
            }
            Op::Sub(a, b) => {
                send!(*a, g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                send!(*b, neg);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let da: Vec<f64> = g.iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                let db: Vec<f64> = g.iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                send!(*a, da);
                send!(*b, db);
            }
            Op::AddRow(x, v) => {
                send!(*x, g);
                let c = val(*v).len();
                let mut dv = vec![0.0; c];
                for row in g.chunks(c) {
                    dv.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                }
                send!(*v, dv);
            }
            Op::MulRow(x, v) => {
                let (tx, tv) = (val(*x), val(*v));
                let c = tv.len();
                let mut dx = g.to_vec();
                for row in dx.chunks_mut(c) {
                    row.iter_mut().zip(tv.data()).for_each(|(d, s)| *d *= s);
                }
                let mut dv = vec![0.0; c];
                for (grow, xrow) in g.chunks(c).zip(tx.data().chunks(c)) {
                    for j in 0..c {
                        dv[j] += grow[j] * xrow[j];
                    }
                }
                send!(*x, dx);
                send!(*v, dv);
            }
            Op::MulCol(x, v) => {
                let (tx, tv) = (val(*x), val(*v));
                let (_, c) = tx.dims2().unwrap();
                let mut dx = g.to_vec();
                for (row, s) in dx.chunks_mut(c).zip(tv.data()) {
                    row.iter_mut().for_each(|d| *d *= s);
                }
                let dv: Vec<f64> = g
                    .chunks(c)
                    .zip(tx.data().chunks(c))
                    .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                    .collect();
                send!(*x, dx);
                send!(*v, dv);
            }
            Op::Scale(x, alpha) => {
                let dx: Vec<f64> = g.iter().map(|v| v * alpha).collect();
                send!(*x, dx);
            }
            Op::AddScalar(x) => send!(*x, g),
            Op::Relu(x) => {
                let dx: Vec<f64> = g
                    .iter()
                    .zip(val(*x).data())
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect();
                send!(*x, dx);
            }
            Op::Sin(x) => {
                let dx: Vec<f64> = g.iter().zip(val(*x).data()).map(|(g, v)| g * v.cos()).collect();
                send!(*x, dx);
            }
            Op::Cos(x) => {
                let dx: Vec<f64> = g.iter().zip(val(*x).data()).map(|(g, v)| -g * v.sin()).collect();
                send!(*x, dx);
            }
            Op::Abs(x) => {
                let dx: Vec<f64> = g
                    .iter()
                    .zip(val(*x).data())
                    .map(|(g, &v)| {
                        if v > 0.0 {
                            *g
                        } else if v < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                send!(*x, dx);
            }
            Op::Recip(x) => {
                let dx: Vec<f64> = g.iter().zip(out.data()).map(|(g, y)| -g * y * y).collect();
                send!(*x, dx);
            }
            Op::Clamp(x, lo, hi) => {
                let dx: Vec<f64> = g
                    .iter()
                    .zip(val(*x).data())
                    .map(|(g, &v)| if v > *lo && v < *hi { *g } else { 0.0 })
                    .collect();
                send!(*x, dx);
            }
            Op::RowNorm(x) => {
                let tx = val(*x);
                let (_, c) = rows_cols(tx);
                let mut dx = vec![0.0; tx.len()];
                for (i, (drow, xrow)) in dx.chunks_mut(c).zip(tx.data().chunks(c)).enumerate() {
                    let n = out.data()[i];
                    if n > 0.0 {
                        drow.iter_mut().zip(xrow).for_each(|(d, x)| *d = g[i] * x / n);
                    }
                }
                send!(*x, dx);
            }
            Op::Dot(a, b) => {
                let da: Vec<f64> = val(*b).data().iter().map(|y| g[0] * y).collect();
                let db: Vec<f64> = val(*a).data().iter().map(|x| g[0] * x).collect();
                send!(*a, da);
                send!(*b, db);
            }
            Op::Softmax(x) => {
                let (_, c) = rows_cols(out);
                let mut dx = vec![0.0; out.len()];
                for ((drow, yrow), grow) in dx.chunks_mut(c).zip(out.data().chunks(c)).zip(g.chunks(c)) {
                    let inner: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                    for j in 0..c {
                        drow[j] = yrow[j] * (grow[j] - inner);
                    }
                }
                send!(*x, dx);
            }
            Op::LogSumExp(x) => {
                let tx = val(*x);
                let (_, c) = rows_cols(tx);
                let mut dx = vec![0.0; tx.len()];
                for (i, (drow, xrow)) in dx.chunks_mut(c).zip(tx.data().chunks(c)).enumerate() {
                    let lse = out.data()[i];
                    drow.iter_mut().zip(xrow).for_each(|(d, v)| *d = g[i] * (v - lse).exp());
                }
                send!(*x, dx);
            }
            Op::Mse(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let n = ta.len().max(1) as f64;
                let da: Vec<f64> = ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(x, y)| g[0] * 2.0 * (x - y) / n)
                    .collect();
                let db: Vec<f64> = da.iter().map(|v| -v).collect();
                send!(*a, da);
                send!(*b, db);
            }
            Op::CrossEntropy(x, targets) => {
                let tx = val(*x);
                let (_, c) = tx.dims2().unwrap();
                let mut dx = vec![0.0; tx.len()];
                for (i, (drow, xrow)) in dx.chunks_mut(c).zip(tx.data().chunks(c)).enumerate() {
                    let m = xrow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let s: f64 = xrow.iter().map(|v| (v - m).exp()).sum();
                    for j in 0..c {
                        drow[j] = g[i] * (xrow[j] - m).exp() / s;
                    }
                    drow[targets[i]] -= g[i];
                }
                send!(*x, dx);
            }
            Op::Sum(x) => {
                let dx = vec![g[0]; val(*x).len()];
                send!(*x, dx);
            }
            Op::Mean(x) => {
                let n = val(*x).len();
                let dx = vec![g[0] / n.max(1) as f64; n];
                send!(*x, dx);
            }
            Op::Transpose(x) => {
                // out is c x r; gradient goes back to r x c.
                let (c, r) = out.dims2().unwrap();
                let mut dx = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        dx[i * c + j] = g[j * r + i];
                    }
                }
                send!(*x, dx);
            }
            Op::Reshape(x) => send!(*x, g),
            Op::SliceRows(x, start) => {
                let tx = val(*x);
                let (_, c) = tx.dims2().unwrap();
                let mut dx = vec![0.0; tx.len()];
                dx[start * c..start * c + g.len()].copy_from_slice(g);
                send!(*x, dx);
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = val(*p).len();
                    if tracked(*p) {
                        add_into(&mut grads[p.0], &g[off..off + len]);
                    }
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = out.dims2().unwrap();
                let mut off = 0;
                for p in parts {
                    let (_, w) = val(*p).dims2().unwrap();
                    if tracked(*p) {
                        let mut dp = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            dp.extend_from_slice(&g[i * total + off..i * total + off + w]);
                        }
                        add_into(&mut grads[p.0], &dp);
                    }
                    off += w;
                }
            }
            Op::PickRows(x, idx) => {
                let tx = val(*x);
                let (_, c) = tx.dims2().unwrap();
                let mut dx = vec![0.0; tx.len()];
                for (i, &k) in idx.iter().enumerate() {
                    dx[i * c + k] += g[i];
                }
                send!(*x, dx);
            }
            Op::Gather(x, idx) => {
                let mut dx = vec![0.0; val(*x).len()];
                for (i, &k) in idx.iter().enumerate() {
                    dx[k] += g[i];
                }
                send!(*x, dx);
            }
        }
    }
}
