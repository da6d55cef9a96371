//! Central finite-difference oracle for tape gradients.

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Largest discrepancy found by [`grad_check_many`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Which input tensor and flat coordinate produced the maximum.
    pub worst: Option<(usize, usize)>,
    pub coordinates_checked: usize,
}

/// Checks `f` against central differences in every coordinate of `theta`.
///
/// The error at one coordinate is `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<T, F>(theta: &Tensor<T>, step: T, f: F) -> Result<T>
where
    T: Scalar,
    F: for<'t> Fn(Var<'t, T>) -> Result<Var<'t, T>>,
{
    let report = grad_check_many(std::slice::from_ref(theta), step, 1, |_, vars| f(vars[0]))?;
    Ok(T::of(report.max_rel_error))
}

/// Multi-input version of [`grad_check`]. Only every `stride`-th coordinate of
/// each input is probed, which keeps checks on wide layers affordable.
pub fn grad_check_many<T, F>(thetas: &[Tensor<T>], step: T, stride: usize, f: F) -> Result<GradCheckReport>
where
    T: Scalar,
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>>,
{
    let analytic: Vec<Tensor<T>> = {
        let tape = Tape::new();
        let vars: Vec<_> = thetas.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&tape, &vars)?;
        if !out.item().is_finite() {
            return Err(Error::Evaluation("objective is not finite at the base point".into()));
        }
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.wrt(v)).collect()
    };

    let eval = |inputs: &[Tensor<T>]| -> Result<T> {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let v = f(&tape, &vars)?.item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation("objective is not finite at a probe point".into()))
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates_checked: 0,
    };
    let mut probe: Vec<Tensor<T>> = thetas.to_vec();
    for (which, theta) in thetas.iter().enumerate() {
        for idx in (0..theta.len()).step_by(stride.max(1)) {
            let base = theta.data()[idx];
            probe[which].data_mut()[idx] = base + step;
            let plus = eval(&probe)?;
            probe[which].data_mut()[idx] = base - step;
            let minus = eval(&probe)?;
            probe[which].data_mut()[idx] = base;

            let numeric = (plus - minus) / (step + step);
            let a = analytic[which].data()[idx];
            let err = ((a - numeric).abs() / a.abs().max(T::one())).as_f64();
            report.coordinates_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((which, idx));
            }
        }
    }
    Ok(report)
}
