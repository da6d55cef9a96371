//! Value-level helpers shared by the tape ops and the losses.

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor, Var};

/// Floor applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let cols = logits.cols();
    let mut data = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(cols.max(1)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total = exps.iter().fold(T::zero(), |a, &e| a + e);
        data.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::from_vec(logits.shape(), data).expect("softmax keeps shape")
}

pub fn log_softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let cols = logits.cols();
    let mut data = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(cols.max(1)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let total = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
        let lse = max + total.ln();
        data.extend(row.iter().map(|&v| v - lse));
    }
    Tensor::from_vec(logits.shape(), data).expect("log-softmax keeps shape")
}

/// Shannon entropy `-Σ p log p` with `0 log 0 = 0`.
pub fn entropy<T: Scalar>(p: &[T]) -> Result<T> {
    let total = p.iter().fold(T::zero(), |a, &v| a + v);
    if p.is_empty() || p.iter().any(|&v| v < T::zero() || !v.is_finite()) || (total - T::one()).abs() > T::of(1e-8) {
        return Err(Error::validation("probabilities", "must be nonnegative and sum to 1"));
    }
    Ok(p
        .iter()
        .filter(|&&v| v > T::zero())
        .fold(T::zero(), |a, &v| a - v * v.ln()))
}

/// Binary cross-entropy of a single prediction, clamped into `[ε, 1-ε]`.
pub fn binary_cross_entropy<T: Scalar>(pred: T, target: T) -> T {
    let eps = T::of(PROB_EPS);
    let p = pred.max(eps).min(T::one() - eps);
    -(target * p.ln() + (T::one() - target) * (T::one() - p).ln())
}

/// Mean binary cross-entropy of a column of predictions against constant
/// targets in `{0, 1}`.
pub fn bce_mean<'t, T: Scalar>(pred: Var<'t, T>, targets: &[T]) -> Result<Var<'t, T>> {
    let tape_target = constant_like(pred, targets)?;
    let eps = T::of(PROB_EPS);
    let p = pred.clamp(eps, T::one() - eps);
    let pos = p.log_floor(eps).mul(tape_target)?;
    let one_minus_t = constant_like(pred, &targets.iter().map(|&t| T::one() - t).collect::<Vec<_>>())?;
    let neg = p.neg().add_scalar(T::one()).log_floor(eps).mul(one_minus_t)?;
    Ok(pos.add(neg)?.mean().neg())
}

fn constant_like<'t, T: Scalar>(like: Var<'t, T>, values: &[T]) -> Result<Var<'t, T>> {
    let shape = like.shape();
    let tensor = Tensor::from_vec(&shape, values.to_vec())?;
    Ok(like.tape().constant(tensor))
}
