//! Forward and adjoint kernels shared by the eager evaluator and the tape.

use super::Array;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn mismatch<T: Scalar>(op: &'static str, a: &Array<T>, b: &Array<T>) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

pub(crate) fn same_shape<T: Scalar>(op: &'static str, a: &Array<T>, b: &Array<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(mismatch(op, a, b));
    }
    Ok(())
}

/// `a (m×k) · b (k×n)`.
pub(crate) fn matmul<T: Scalar>(a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    if k != k2 {
        return Err(mismatch("matmul", a, b));
    }
    let mut out = Array::zeros(m, n);
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    for i in 0..m {
        let orow = &mut od[i * n..(i + 1) * n];
        for p in 0..k {
            let w = ad[i * k + p];
            if w == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &x) in orow.iter_mut().zip(brow) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

/// `g · bᵀ` for `g (m×n)`, `b (k×n)`.
pub(crate) fn matmul_nt<T: Scalar>(g: &Array<T>, b: &Array<T>) -> Array<T> {
    let (m, n) = g.shape();
    let k = b.rows();
    let mut out = Array::zeros(m, k);
    let (gd, bd) = (g.data(), b.data());
    let od = out.data_mut();
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &bd[p * n..(p + 1) * n];
            let mut s = T::zero();
            for (&x, &y) in grow.iter().zip(brow) {
                s += x * y;
            }
            od[i * k + p] = s;
        }
    }
    out
}

/// `aᵀ · g` for `a (m×k)`, `g (m×n)`.
pub(crate) fn matmul_tn<T: Scalar>(a: &Array<T>, g: &Array<T>) -> Array<T> {
    let (m, k) = a.shape();
    let n = g.cols();
    let mut out = Array::zeros(k, n);
    let (ad, gd) = (a.data(), g.data());
    let od = out.data_mut();
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let w = ad[i * k + p];
            if w == T::zero() {
                continue;
            }
            let orow = &mut od[p * n..(p + 1) * n];
            for (o, &x) in orow.iter_mut().zip(grow) {
                *o += w * x;
            }
        }
    }
    out
}

pub(crate) fn zip<T: Scalar>(
    op: &'static str,
    a: &Array<T>,
    b: &Array<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Array<T>> {
    same_shape(op, a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Array::new(a.rows(), a.cols(), data)
}

/// `a + bias` where `bias` is a column vector broadcast over the columns of `a`.
pub(crate) fn add_col<T: Scalar>(a: &Array<T>, bias: &Array<T>) -> Result<Array<T>> {
    if bias.cols() != 1 || bias.rows() != a.rows() {
        return Err(mismatch("add_col", a, bias));
    }
    let n = a.cols();
    let mut out = a.clone();
    for (r, row) in out.data_mut().chunks_mut(n.max(1)).enumerate() {
        let b = bias.data()[r];
        for x in row {
            *x += b;
        }
    }
    Ok(out)
}

/// Sum over columns, giving a column vector.
pub(crate) fn sum_cols<T: Scalar>(g: &Array<T>) -> Array<T> {
    let n = g.cols();
    Array::column(
        g.data()
            .chunks(n.max(1))
            .map(|row| row.iter().copied().sum())
            .collect(),
    )
}

pub(crate) fn concat_rows<T: Scalar>(parts: &[&Array<T>]) -> Result<Array<T>> {
    let Some(first) = parts.first() else {
        return Err(Error::Usage("concat_rows of nothing".into()));
    };
    let cols = first.cols();
    let mut rows = 0;
    let mut data = Vec::new();
    for p in parts {
        if p.cols() != cols {
            return Err(mismatch("concat_rows", first, p));
        }
        rows += p.rows();
        data.extend_from_slice(p.data());
    }
    Array::new(rows, cols, data)
}

/// Overflow-safe `ln(1 + eˣ)`.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
