//! Eager kernels: affine maps, activations, masked softmax and cross-entropy.
//!
//! The tape records these same kernels; the free functions are usable on
//! their own and carry their analytic backward passes.

use alloc::format;
use alloc::vec::Vec;

use super::{Real, Tensor};
use crate::{Error, Result};

/// Probability floor applied before taking logs.
pub const PROB_EPS: f64 = 1e-12;

/// Gradients of [`affine`].
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrads<T> {
    pub x: Tensor<T>,
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

/// `y = xW + b` with `b` a `1 x out` row broadcast over the rows of `x`.
pub fn affine<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(Error::shape(
            "affine",
            format!("bias {:?} for weight {:?}", b.shape(), w.shape()),
        ));
    }
    let mut y = x.matmul(w)?;
    for r in 0..y.rows() {
        for (v, &bv) in y.row_mut(r).iter_mut().zip(b.data()) {
            *v += bv;
        }
    }
    Ok(y)
}

pub fn affine_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<AffineGrads<T>> {
    let gx = grad_out.matmul_nt(w)?;
    let gw = x.matmul_tn(grad_out)?;
    let mut gb = Tensor::zeros(1, grad_out.cols());
    for r in 0..grad_out.rows() {
        for (b, &g) in gb.data_mut().iter_mut().zip(grad_out.row(r)) {
            *b += g;
        }
    }
    Ok(AffineGrads { x: gx, w: gw, b: gb })
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_grad<T: Real>(y: T) -> T {
    y * (T::one() - y)
}

pub fn tanh<T: Real>(x: T) -> T {
    x.tanh()
}

pub fn tanh_grad<T: Real>(y: T) -> T {
    T::one() - y * y
}

/// Softmax over `v`; masked-out entries (mask `false`) get probability zero.
pub fn softmax<T: Real>(v: &[T], mask: Option<&[bool]>) -> Result<Vec<T>> {
    if let Some(m) = mask {
        if m.len() != v.len() {
            return Err(Error::shape(
                "softmax",
                format!("mask of length {} for {} scores", m.len(), v.len()),
            ));
        }
    }
    let mut out = alloc::vec![T::zero(); v.len()];
    if softmax_into(v, mask, &mut out) {
        Ok(out)
    } else {
        Err(Error::AllMasked)
    }
}

/// Writes the masked softmax of `v` into `out`; returns `false` (leaving `out`
/// zeroed) when every entry is masked.
pub(crate) fn softmax_into<T: Real>(v: &[T], mask: Option<&[bool]>, out: &mut [T]) -> bool {
    let live = |i: usize| mask.is_none_or(|m| m[i]);
    let mut max = T::neg_infinity();
    for (i, &x) in v.iter().enumerate() {
        if live(i) && x > max {
            max = x;
        }
    }
    if max == T::neg_infinity() {
        out.iter_mut().for_each(|o| *o = T::zero());
        return false;
    }
    let mut total = T::zero();
    for (i, (&x, o)) in v.iter().zip(out.iter_mut()).enumerate() {
        *o = if live(i) { (x - max).exp() } else { T::zero() };
        total += *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
    true
}

/// Vector-Jacobian product of softmax given its output `y`.
pub fn softmax_backward<T: Real>(y: &[T], grad_out: &[T]) -> Vec<T> {
    let dot: T = y.iter().zip(grad_out).map(|(&a, &b)| a * b).sum();
    y.iter()
        .zip(grad_out)
        .map(|(&yi, &gi)| yi * (gi - dot))
        .collect()
}

/// Result of [`cross_entropy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy<T> {
    pub loss: T,
    /// `pred[gold]` was at or below [`PROB_EPS`] and got clamped.
    pub clamped: bool,
}

/// `-ln pred[gold]`, clamped at [`PROB_EPS`].
pub fn cross_entropy<T: Real>(pred: &[T], gold: usize) -> CrossEntropy<T> {
    let eps = T::lit(PROB_EPS);
    let p = pred[gold];
    if p <= eps {
        CrossEntropy {
            loss: -eps.ln(),
            clamped: true,
        }
    } else {
        CrossEntropy {
            loss: -p.ln(),
            clamped: false,
        }
    }
}

/// Gradient of [`cross_entropy`] with respect to `pred`.
pub fn cross_entropy_grad<T: Real>(pred: &[T], gold: usize) -> Vec<T> {
    let mut g = alloc::vec![T::zero(); pred.len()];
    if pred[gold] > T::lit(PROB_EPS) {
        g[gold] = -T::one() / pred[gold];
    }
    g
}
