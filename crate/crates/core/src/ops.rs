//! Forward implementations and backward rules of every tape operation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Real;
use crate::tape::{Op, Tape, Var};
use crate::tensor::{broadcast_shape, for_each_broadcast, mm_nn, mm_nt, mm_tn, Tensor};

fn dims2(op: &'static str, s: &[usize]) -> Result<(usize, usize)> {
    match *s {
        [m, n] => Ok((m, n)),
        _ => Err(Error::shape(op, s, &[])),
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    // split on sign so exp never overflows
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `(outer, len, inner)` decomposition of `shape` around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Real> Tape<'_, T> {
    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2("matmul", self.shape(a))?;
        let (k2, n) = dims2("matmul", self.shape(b))?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let out = mm_nn(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Tensor::new(&[m, n], out)?, Op::MatMul(a, b), &[a, b])
    }

    /// `a[m×k] · b[n×k]ᵀ`; the form used for linear layers with weights
    /// stored as `[out × in]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2("matmul_t", self.shape(a))?;
        let (n, k2) = dims2("matmul_t", self.shape(b))?;
        if k != k2 {
            return Err(Error::shape("matmul_t", self.shape(a), self.shape(b)));
        }
        let out = mm_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul_t", Tensor::new(&[m, n], out)?, Op::MatMulT(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        dims2("transpose", self.shape(a))?;
        let out = self.value(a).transpose2();
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    fn broadcast_binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = broadcast_shape(sa, sb).ok_or_else(|| Error::shape(name, sa, sb))?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); out_shape.iter().product()];
        for_each_broadcast(sa, sb, &out_shape, |o, ia, ib| out[o] = f(va[ia], vb[ib]));
        self.push(name, Tensor::new(&out_shape, out)?, op, &[a, b])
    }

    /// Element-wise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise (Hadamard) product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let out = self.value(a).map(|x| x * c);
        self.push("scale", out, Op::Scale(a, c), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.tanh());
        self.push("tanh", out, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push("relu", out, Op::Relu(a), &[a])
    }

    /// Concatenation along the last axis; all leading extents must agree.
    pub fn concat_last(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let lead = self.shape(first)[..self.shape(first).len() - 1].to_vec();
        let rows = self.value(first).rows();
        let mut width = 0;
        for &x in xs {
            let s = self.shape(x);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat", self.shape(first), s));
            }
            width += s[s.len() - 1];
        }
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &x in xs {
                out.extend_from_slice(self.value(x).row(r));
            }
        }
        let mut shape = lead;
        shape.push(width);
        self.push("concat", Tensor::new(&shape, out)?, Op::ConcatLast(xs.to_vec()), xs)
    }

    /// Stacks rank-2 tensors with equal column counts along axis 0.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let (_, n) = dims2("concat_rows", self.shape(first))?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &x in xs {
            let (m, n2) = dims2("concat_rows", self.shape(x))?;
            if n2 != n {
                return Err(Error::shape("concat_rows", self.shape(first), self.shape(x)));
            }
            rows += m;
            out.extend_from_slice(self.value(x).data());
        }
        self.push(
            "concat_rows",
            Tensor::new(&[rows, n], out)?,
            Op::ConcatRows(xs.to_vec()),
            xs,
        )
    }

    /// Softmax along `axis`, with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Index {
                what: "softmax axis",
                index: axis,
                bound: shape.len(),
            });
        }
        let xv = self.value(x).data();
        if xv.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "softmax" });
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let mut out = vec![T::zero(); xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let mut max = T::neg_infinity();
                for k in 0..len {
                    max = max.max(xv[at(k)]);
                }
                let mut sum = T::zero();
                for k in 0..len {
                    let e = (xv[at(k)] - max).exp();
                    out[at(k)] = e;
                    sum += e;
                }
                for k in 0..len {
                    out[at(k)] = out[at(k)] / sum;
                }
            }
        }
        self.push("softmax", Tensor::new(&shape, out)?, Op::Softmax { x, axis }, &[x])
    }

    /// Normalizes each last-axis row to zero mean and unit variance, then
    /// applies `gamma ⊙ · + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::config("layer_norm eps must be positive"));
        }
        let d = self.value(x).cols();
        for p in [gamma, beta] {
            if self.shape(p) != [d] {
                return Err(Error::shape("layer_norm", self.shape(x), self.shape(p)));
            }
        }
        let rows = self.value(x).rows();
        let eps = T::of(eps);
        let n = T::of(d as f64);
        let mut xhat = Vec::with_capacity(rows * d);
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(rows * d);
        {
            let xt = self.value(x);
            let (g, b) = (self.value(gamma).data(), self.value(beta).data());
            for r in 0..rows {
                let row = xt.row(r);
                let mean = row.iter().copied().sum::<T>() / n;
                let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
                let is = T::one() / (var + eps).sqrt();
                inv_std.push(is);
                for (j, &v) in row.iter().enumerate() {
                    let h = (v - mean) * is;
                    xhat.push(h);
                    out.push(g[j] * h + b[j]);
                }
            }
        }
        let shape = self.shape(x).to_vec();
        self.push(
            "layer_norm",
            Tensor::new(&shape, out)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// Inverted dropout: in training each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`. Returns `x`
    /// itself when not training or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(alloc::format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.uniform() < p { T::zero() } else { keep })
            .collect();
        let xt = self.value(x);
        let out = Tensor::new(
            xt.shape(),
            xt.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect(),
        )?;
        self.push("dropout", out, Op::Dropout { x, mask }, &[x])
    }

    /// Row gather from a `[V × d]` table; backward scatter-adds, so repeated
    /// ids accumulate.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = dims2("gather_rows", self.shape(table))?;
        if ids.is_empty() {
            return Err(Error::contract("gather_rows with no ids"));
        }
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Index {
                    what: "gather_rows",
                    index: id,
                    bound: v,
                });
            }
            out.extend_from_slice(t.row(id));
        }
        self.push(
            "gather_rows",
            Tensor::new(&[ids.len(), d], out)?,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.push("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        let s = self.sum(x)?;
        self.scale(s, T::of(1.0 / n as f64))
    }

    /// Sums out the last axis.
    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        let mut shape = xt.shape()[..xt.rank() - 1].to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        let out: Vec<T> = (0..xt.rows()).map(|r| xt.row(r).iter().copied().sum()).collect();
        self.push("sum_last", Tensor::new(&shape, out)?, Op::SumLast(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        self.push("reshape", out, Op::Reshape(x), &[x])
    }

    /// Columns `start..end` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xt = self.value(x);
        let d = xt.cols();
        if start >= end || end > d {
            return Err(Error::Index {
                what: "slice_last",
                index: end,
                bound: d,
            });
        }
        let mut out = Vec::with_capacity(xt.rows() * (end - start));
        for r in 0..xt.rows() {
            out.extend_from_slice(&xt.row(r)[start..end]);
        }
        let mut shape = xt.shape().to_vec();
        *shape.last_mut().unwrap() = end - start;
        self.push(
            "slice_last",
            Tensor::new(&shape, out)?,
            Op::SliceLast { x, start },
            &[x],
        )
    }

    /// Mean over the batch of `-log softmax(logits)[label]`. Logits are
    /// `[B × M]`; labels are item indices in `1..=M`, label `l` scoring
    /// against column `l - 1`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[u32]) -> Result<Var> {
        let (b, m) = dims2("cross_entropy", self.shape(logits))?;
        if labels.len() != b {
            return Err(Error::shape("cross_entropy", &[b, m], &[labels.len()]));
        }
        let mut cols = Vec::with_capacity(b);
        for &l in labels {
            let l = l as usize;
            if l == 0 || l > m {
                return Err(Error::Index {
                    what: "cross_entropy label",
                    index: l,
                    bound: m + 1,
                });
            }
            cols.push(l - 1);
        }
        let lt = self.value(logits);
        let mut probs = Vec::with_capacity(b * m);
        let mut loss = 0.0f64;
        for (r, &c) in cols.iter().enumerate() {
            let row = lt.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            loss += (lse - row[c]).as_f64();
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        let out = Tensor::scalar(T::of(loss / b as f64));
        self.push(
            "cross_entropy",
            out,
            Op::CrossEntropy {
                logits,
                labels: cols,
                probs,
            },
            &[logits],
        )
    }

    /// Local backward rule of node `i` given its output gradient `g`.
    pub(crate) fn backprop(
        &self,
        i: usize,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            &Op::MatMul(a, b) => {
                let (m, k) = dims2("matmul", self.shape(a))?;
                let n = self.shape(b)[1];
                if self.needs_grad(a) {
                    let da = mm_nt(g.data(), self.value(b).data(), m, n, k);
                    self.accumulate(grads, a, Tensor::new(&[m, k], da)?);
                }
                if self.needs_grad(b) {
                    let db = mm_tn(self.value(a).data(), g.data(), m, k, n);
                    self.accumulate(grads, b, Tensor::new(&[k, n], db)?);
                }
            }
            &Op::MatMulT(a, b) => {
                let (m, k) = dims2("matmul_t", self.shape(a))?;
                let n = self.shape(b)[0];
                if self.needs_grad(a) {
                    let da = mm_nn(g.data(), self.value(b).data(), m, n, k);
                    self.accumulate(grads, a, Tensor::new(&[m, k], da)?);
                }
                if self.needs_grad(b) {
                    let db = mm_tn(g.data(), self.value(a).data(), m, n, k);
                    self.accumulate(grads, b, Tensor::new(&[n, k], db)?);
                }
            }
            &Op::Transpose(a) => self.accumulate(grads, a, g.transpose2()),
            &Op::Add(a, b) => {
                self.reduce_broadcast(grads, a, b, g, |gv, _, _| (gv, gv));
            }
            &Op::Sub(a, b) => {
                self.reduce_broadcast(grads, a, b, g, |gv, _, _| (gv, -gv));
            }
            &Op::Mul(a, b) => {
                self.reduce_broadcast(grads, a, b, g, |gv, x, y| (gv * y, gv * x));
            }
            &Op::Scale(a, c) => self.accumulate(grads, a, g.map(|v| v * c)),
            &Op::Sigmoid(a) => {
                let y = self.nodes[i].value.as_ref().unwrap();
                let d = zip_map(g, y, |gv, yv| gv * yv * (T::one() - yv));
                self.accumulate(grads, a, d);
            }
            &Op::Tanh(a) => {
                let y = self.nodes[i].value.as_ref().unwrap();
                let d = zip_map(g, y, |gv, yv| gv * (T::one() - yv * yv));
                self.accumulate(grads, a, d);
            }
            &Op::Relu(a) => {
                let d = zip_map(g, self.value(a), |gv, xv| {
                    if xv > T::zero() {
                        gv
                    } else {
                        T::zero()
                    }
                });
                self.accumulate(grads, a, d);
            }
            Op::ConcatLast(xs) => {
                let rows = g.rows();
                let mut offset = 0;
                for &x in xs {
                    let w = self.value(x).cols();
                    if self.needs_grad(x) {
                        let mut part = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            part.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        self.accumulate(grads, x, Tensor::new(self.shape(x), part)?);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let len = self.value(x).len();
                    if self.needs_grad(x) {
                        let part = g.data()[offset..offset + len].to_vec();
                        self.accumulate(grads, x, Tensor::new(self.shape(x), part)?);
                    }
                    offset += len;
                }
            }
            &Op::Softmax { x, axis } => {
                let y = self.nodes[i].value.as_ref().unwrap();
                let (outer, len, inner) = axis_split(y.shape(), axis);
                let (yv, gv) = (y.data(), g.data());
                let mut dx = vec![T::zero(); yv.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + j;
                        let dot: T = (0..len).map(|k| gv[at(k)] * yv[at(k)]).sum();
                        for k in 0..len {
                            dx[at(k)] = yv[at(k)] * (gv[at(k)] - dot);
                        }
                    }
                }
                self.accumulate(grads, x, Tensor::new(y.shape(), dx)?);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = self.value(*x).cols();
                let rows = inv_std.len();
                let gam = self.value(*gamma).data();
                let n = T::of(d as f64);
                if self.needs_grad(*x) {
                    let mut dx = Vec::with_capacity(rows * d);
                    for r in 0..rows {
                        let gr = g.row(r);
                        let hr = &xhat[r * d..(r + 1) * d];
                        let dh: Vec<T> = gr.iter().zip(gam).map(|(&a, &b)| a * b).collect();
                        let sum_dh: T = dh.iter().copied().sum();
                        let sum_dhh: T = dh.iter().zip(hr).map(|(&a, &b)| a * b).sum();
                        for j in 0..d {
                            dx.push(inv_std[r] / n * (n * dh[j] - sum_dh - hr[j] * sum_dhh));
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(self.shape(*x), dx)?);
                }
                let mut dgamma = vec![T::zero(); d];
                let mut dbeta = vec![T::zero(); d];
                for r in 0..rows {
                    for (j, &gv) in g.row(r).iter().enumerate() {
                        dgamma[j] += gv * xhat[r * d + j];
                        dbeta[j] += gv;
                    }
                }
                self.accumulate(grads, *gamma, Tensor::new(&[d], dgamma)?);
                self.accumulate(grads, *beta, Tensor::new(&[d], dbeta)?);
            }
            Op::Dropout { x, mask } => {
                let d = Tensor::new(
                    g.shape(),
                    g.data().iter().zip(mask).map(|(&a, &m)| a * m).collect(),
                )?;
                self.accumulate(grads, *x, d);
            }
            Op::GatherRows { table, ids } => {
                let mut dt = Tensor::zeros(self.shape(*table));
                for (r, &id) in ids.iter().enumerate() {
                    for (t, &gv) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *t += gv;
                    }
                }
                self.accumulate(grads, *table, dt);
            }
            &Op::Sum(x) => {
                let gv = g.data()[0];
                self.accumulate(grads, x, Tensor::full(self.shape(x), gv));
            }
            &Op::SumLast(x) => {
                let xt = self.value(x);
                let d = xt.cols();
                let dx = (0..xt.len()).map(|k| g.data()[k / d]).collect();
                self.accumulate(grads, x, Tensor::new(xt.shape(), dx)?);
            }
            &Op::Reshape(x) => {
                let dx = g.clone().reshape(self.shape(x))?;
                self.accumulate(grads, x, dx);
            }
            &Op::SliceLast { x, start } => {
                let mut dx = Tensor::zeros(self.shape(x));
                let w = g.cols();
                for r in 0..g.rows() {
                    dx.row_mut(r)[start..start + w].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, x, dx);
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let b = labels.len();
                let m = probs.len() / b;
                let scale = g.data()[0] / T::of(b as f64);
                let mut dl: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (r, &c) in labels.iter().enumerate() {
                    dl[r * m + c] -= scale;
                }
                self.accumulate(grads, *logits, Tensor::new(&[b, m], dl)?);
            }
        }
        Ok(())
    }

    /// Sums a broadcast output gradient back onto each input's shape.
    fn reduce_broadcast(
        &self,
        grads: &mut [Option<Tensor<T>>],
        a: Var,
        b: Var,
        g: &Tensor<T>,
        rule: impl Fn(T, T, T) -> (T, T),
    ) {
        let (ta, tb) = (self.value(a), self.value(b));
        let mut da = vec![T::zero(); ta.len()];
        let mut db = vec![T::zero(); tb.len()];
        let gv = g.data();
        for_each_broadcast(ta.shape(), tb.shape(), g.shape(), |o, ia, ib| {
            let (x, y) = rule(gv[o], ta.data()[ia], tb.data()[ib]);
            da[ia] += x;
            db[ib] += y;
        });
        let sa = ta.shape().to_vec();
        let sb = tb.shape().to_vec();
        self.accumulate(grads, a, Tensor::new(&sa, da).expect("shape"));
        self.accumulate(grads, b, Tensor::new(&sb, db).expect("shape"));
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::new(
        a.shape(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("same shape")
}
