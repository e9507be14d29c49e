//! Slice kernels shared by the tape and the tape-free forward paths, so both
//! produce bitwise-identical values.

use alloc::vec;
use alloc::vec::Vec;

use super::gelu::{cdf_pdf_block, BLOCK};
use super::Real;

/// `a (m x k) @ b (k x n)`.
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::ZERO; m * n];
    matmul_acc(a, b, m, k, n, T::ZERO, &mut c);
    c
}

/// `c = a @ b + beta * c`.
pub fn matmul_acc<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, beta: T, c: &mut [T]) {
    debug_assert!(a.len() == m * k && b.len() == k * n && c.len() == m * n);
    // SAFETY: lengths checked above; `c` is a distinct mutable borrow.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::ONE,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c += a^T @ g` where `a` is `m x k`, `g` is `m x n`, `c` is `k x n`.
pub fn matmul_tn_acc<T: Real>(
    a: &[T],
    g: &[T],
    m: usize,
    k: usize,
    n: usize,
    beta: T,
    c: &mut [T],
) {
    debug_assert!(a.len() == m * k && g.len() == m * n && c.len() == k * n);
    // SAFETY: a^T is described by swapped strides over the same buffer.
    unsafe {
        T::gemm(
            k,
            m,
            n,
            T::ONE,
            a.as_ptr(),
            1,
            k as isize,
            g.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c += g @ b^T` where `g` is `m x n`, `b` is `k x n`, `c` is `m x k`.
pub fn matmul_nt_acc<T: Real>(
    g: &[T],
    b: &[T],
    m: usize,
    n: usize,
    k: usize,
    beta: T,
    c: &mut [T],
) {
    debug_assert!(g.len() == m * n && b.len() == k * n && c.len() == m * k);
    // SAFETY: b^T is described by swapped strides over the same buffer.
    unsafe {
        T::gemm(
            m,
            n,
            k,
            T::ONE,
            g.as_ptr(),
            n as isize,
            1,
            b.as_ptr(),
            1,
            n as isize,
            beta,
            c.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

pub fn add_row_inplace<T: Real>(x: &mut [T], row: &[T]) {
    for chunk in x.chunks_exact_mut(row.len()) {
        for (v, &r) in chunk.iter_mut().zip(row) {
            *v += r;
        }
    }
}

pub fn add_inplace<T: Real>(x: &mut [T], y: &[T]) {
    for (v, &w) in x.iter_mut().zip(y) {
        *v += w;
    }
}

/// Calls `f(x_i, Phi(x_i), phi(x_i))` for every element in order,
/// evaluating the normal CDF in interleaved blocks.
#[inline]
fn for_each_cdf<T: Real>(x: &[T], mut f: impl FnMut(f64, f64, f64)) {
    let mut chunks = x.chunks_exact(BLOCK);
    for chunk in &mut chunks {
        let xs: [f64; BLOCK] = core::array::from_fn(|i| chunk[i].to_f64());
        let (p, d) = cdf_pdf_block(&xs);
        for i in 0..BLOCK {
            f(xs[i], p[i], d[i]);
        }
    }
    for v in chunks.remainder() {
        let xv = v.to_f64();
        let (p, d) = super::std_normal_cdf_pdf(xv);
        f(xv, p, d);
    }
}

pub fn gelu_inplace<T: Real>(x: &mut [T]) {
    let mut out = Vec::with_capacity(x.len());
    for_each_cdf(x, |v, p, _| out.push(T::from_f64(v * p)));
    x.copy_from_slice(&out);
}

/// GeLU values and elementwise derivatives.
pub fn gelu_forward<T: Real>(x: &[T]) -> (Vec<T>, Vec<T>) {
    let mut out = Vec::with_capacity(x.len());
    let mut der = Vec::with_capacity(x.len());
    for_each_cdf(x, |v, p, d| {
        out.push(T::from_f64(v * p));
        der.push(T::from_f64(p + v * d));
    });
    (out, der)
}

/// Column sums of an `m x n` matrix.
pub fn column_sums<T: Real>(x: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; n];
    for chunk in x.chunks_exact(n) {
        for (o, &v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    out
}

/// `x (m x k) @ w (k x n) + bias`, where `bias` is a `1 x n` row broadcast
/// over rows or a full `m x n` matrix.
pub fn linear<T: Real>(x: &[T], w: &[T], bias: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = if bias.len() == m * n {
        bias.to_vec()
    } else {
        debug_assert_eq!(bias.len(), n);
        let mut o = Vec::with_capacity(m * n);
        for _ in 0..m {
            o.extend_from_slice(bias);
        }
        o
    };
    matmul_acc(x, w, m, k, n, T::ONE, &mut out);
    out
}
