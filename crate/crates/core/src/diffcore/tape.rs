use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::{Gradients, ParamId, ParamStore, Real, Tensor};
use crate::error::{contract_err, dim_err, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    /// `x @ w + b` with `b` a broadcast row or a full matrix.
    Linear(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[m x n] + [1 x n]` broadcast over rows.
    AddRow(Var, Var),
    /// `[m x n] * [m x 1]` broadcast over columns.
    MulCol(Var, Var),
    Scale(Var, T),
    Gelu(Var),
    Square(Var),
    Sum(Var),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    /// Elementwise local derivative, kept for `Gelu`.
    aux: Option<Vec<T>>,
}

/// Append-only record of primitive operations for reverse-mode differentiation.
#[derive(Clone, Debug, Default)]
pub struct Tape<T = f64> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool, aux: Option<Vec<T>>) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            aux,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, false, None)
    }

    /// Records a snapshot of a registered parameter.
    pub fn param(&mut self, id: ParamId, store: &ParamStore<T>) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), true, None)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(dim_err!("matmul inner dimensions {} vs {}", k, k2));
        }
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::matrix(m, n, data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), ng, None))
    }

    /// Fused affine map `x @ w + b`; `b` is `[1 x n]` (broadcast) or `[m x n]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(x);
        let (k2, n) = self.dims(w);
        if k != k2 {
            return Err(dim_err!("linear inner dimensions {} vs {}", k, k2));
        }
        let bl = self.value(b).len();
        if bl != n && bl != m * n {
            return Err(dim_err!(
                "linear bias has {} elements, expected {} or {}",
                bl,
                n,
                m * n
            ));
        }
        let data = kernels::linear(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            m,
            k,
            n,
        );
        let value = Tensor::matrix(m, n, data)?;
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(value, Op::Linear(x, w, b), ng, None))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(dim_err!(
                "elementwise shapes {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, op, ng, None))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, n) = self.dims(a);
        let (r, rn) = self.dims(row);
        if r != 1 || rn != n {
            return Err(dim_err!(
                "row broadcast needs [1 x {}], got [{} x {}]",
                n,
                r,
                rn
            ));
        }
        let mut value = self.value(a).clone();
        kernels::add_row_inplace(value.data_mut(), self.value(row).data());
        let ng = self.needs(a) || self.needs(row);
        Ok(self.push(value, Op::AddRow(a, row), ng, None))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let (cm, cn) = self.dims(col);
        if cm != m || cn != 1 {
            return Err(dim_err!(
                "column broadcast needs [{} x 1], got [{} x {}]",
                m,
                cm,
                cn
            ));
        }
        let mut value = self.value(a).clone();
        let c = self.value(col).data();
        for (row, &s) in value.data_mut().chunks_exact_mut(n).zip(c) {
            row.iter_mut().for_each(|v| *v *= s);
        }
        let ng = self.needs(a) || self.needs(col);
        Ok(self.push(value, Op::MulCol(a, col), ng, None))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let value = self.value(a).map(|v| v * s);
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, s), ng, None)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (out, der) = kernels::gelu_forward(src.data());
        let value = Tensor::new(src.shape().to_vec(), out).expect("shape preserved");
        let ng = self.needs(a);
        self.push(value, Op::Gelu(a), ng, Some(der))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        let ng = self.needs(a);
        self.push(value, Op::Square(a), ng, None)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(value, Op::Sum(a), ng, None)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum(a);
        self.scale(s, T::from_f64(1.0 / n as f64))
    }

    /// Accumulates `d loss / d param` for every parameter on the tape.
    pub fn backward(&self, loss: Var, grads: &mut Gradients<T>) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(contract_err!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            ));
        }
        self.backward_seeded(loss, &Tensor::scalar(T::ONE), grads)
    }

    /// Reverse pass from `out` with an explicit output cotangent.
    pub fn backward_seeded(
        &self,
        out: Var,
        seed: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<()> {
        if seed.len() != self.value(out).len() {
            return Err(dim_err!(
                "seed has {} elements, output has {}",
                seed.len(),
                self.value(out).len()
            ));
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; out.0 + 1];
        adj[out.0] = Some(seed.data().to_vec());
        for idx in (0..=out.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match node.op {
                Op::Constant => {}
                Op::Param(id) => grads.accumulate(id, &g),
                Op::MatMul(a, b) => {
                    let (m, k) = self.dims(a);
                    let n = self.value(b).cols();
                    if self.needs(a) {
                        let buf = slot(&mut adj, a, m * k);
                        kernels::matmul_nt_acc(&g, self.value(b).data(), m, n, k, T::ONE, buf);
                    }
                    if self.needs(b) {
                        let buf = slot(&mut adj, b, k * n);
                        kernels::matmul_tn_acc(self.value(a).data(), &g, m, k, n, T::ONE, buf);
                    }
                }
                Op::Linear(x, w, b) => {
                    let (m, k) = self.dims(x);
                    let n = self.value(w).cols();
                    if self.needs(x) {
                        let buf = slot(&mut adj, x, m * k);
                        kernels::matmul_nt_acc(&g, self.value(w).data(), m, n, k, T::ONE, buf);
                    }
                    if self.needs(w) {
                        let buf = slot(&mut adj, w, k * n);
                        kernels::matmul_tn_acc(self.value(x).data(), &g, m, k, n, T::ONE, buf);
                    }
                    if self.needs(b) {
                        let bl = self.value(b).len();
                        if bl == g.len() {
                            kernels::add_inplace(slot(&mut adj, b, bl), &g);
                        } else {
                            let sums = kernels::column_sums(&g, n);
                            kernels::add_inplace(slot(&mut adj, b, n), &sums);
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        if self.needs(v) {
                            kernels::add_inplace(slot(&mut adj, v, g.len()), &g);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(a) {
                        kernels::add_inplace(slot(&mut adj, a, g.len()), &g);
                    }
                    if self.needs(b) {
                        let buf = slot(&mut adj, b, g.len());
                        buf.iter_mut().zip(&g).for_each(|(d, &x)| *d -= x);
                    }
                }
                Op::Mul(a, b) => {
                    for (v, other) in [(a, b), (b, a)] {
                        if self.needs(v) {
                            let o = self.value(other).data();
                            let buf = slot(&mut adj, v, g.len());
                            for ((d, &x), &y) in buf.iter_mut().zip(&g).zip(o) {
                                *d += x * y;
                            }
                        }
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(a) {
                        kernels::add_inplace(slot(&mut adj, a, g.len()), &g);
                    }
                    if self.needs(row) {
                        let n = self.value(row).len();
                        let sums = kernels::column_sums(&g, n);
                        kernels::add_inplace(slot(&mut adj, row, n), &sums);
                    }
                }
                Op::MulCol(a, col) => {
                    let n = self.value(a).cols();
                    let c = self.value(col).data();
                    if self.needs(a) {
                        let buf = slot(&mut adj, a, g.len());
                        for ((drow, grow), &s) in
                            buf.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(c)
                        {
                            drow.iter_mut().zip(grow).for_each(|(d, &x)| *d += x * s);
                        }
                    }
                    if self.needs(col) {
                        let av = self.value(a).data();
                        let buf = slot(&mut adj, col, c.len());
                        for ((d, grow), arow) in buf
                            .iter_mut()
                            .zip(g.chunks_exact(n))
                            .zip(av.chunks_exact(n))
                        {
                            *d += grow
                                .iter()
                                .zip(arow)
                                .fold(T::ZERO, |acc, (&x, &y)| acc + x * y);
                        }
                    }
                }
                Op::Scale(a, s) => {
                    let buf = slot(&mut adj, a, g.len());
                    buf.iter_mut().zip(&g).for_each(|(d, &x)| *d += x * s);
                }
                Op::Gelu(a) => {
                    let der = node.aux.as_ref().expect("gelu keeps its derivative");
                    let buf = slot(&mut adj, a, g.len());
                    for ((d, &x), &s) in buf.iter_mut().zip(&g).zip(der) {
                        *d += x * s;
                    }
                }
                Op::Square(a) => {
                    let av = self.value(a).data();
                    let buf = slot(&mut adj, a, g.len());
                    for ((d, &x), &y) in buf.iter_mut().zip(&g).zip(av) {
                        *d += x * (y + y);
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(a).len();
                    let buf = slot(&mut adj, a, n);
                    buf.iter_mut().for_each(|d| *d += g[0]);
                }
            }
        }
        Ok(())
    }
}

fn slot<T: Real>(adj: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    adj[v.0].get_or_insert_with(|| vec![T::ZERO; len])
}
