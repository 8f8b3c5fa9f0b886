//! Dense feedforward classifier with analytic gradients and momentum SGD.

mod checkpoint;
mod matrix;
mod mlp;
mod sgd;

pub use checkpoint::{decode_model, encode_model, load_checkpoint, save_checkpoint};
pub use matrix::Matrix;
pub use mlp::{init_model, Activation, MlpModel, ParamBuffers};
pub use sgd::{SgdState, StepDecay};

use crate::error::{Error, Result};
use crate::losses::{batch_loss, LossSpec};
use crate::scalar::{all_finite, Real};

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if !all_finite(logits) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&s| (s - max).exp()).collect();
    let z: T = out.iter().copied().sum();
    for p in &mut out {
        *p /= z;
    }
    Ok(out)
}

/// `log softmax(logits)`, computed as `s - max - ln Σ exp(s - max)`.
pub fn log_softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if !all_finite(logits) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&s| (s - max).exp()).sum::<T>().ln();
    Ok(logits.iter().map(|&s| s - max - lse).collect())
}

/// Row-wise softmax of a logit matrix.
pub fn predict_proba<T: Real>(model: &MlpModel<T>, batch: &Matrix<T>) -> Result<Matrix<T>> {
    let mut logits = model.forward(batch)?;
    for r in 0..logits.rows() {
        let p = softmax(logits.row(r))?;
        logits.row_mut(r).copy_from_slice(&p);
    }
    Ok(logits)
}

/// One optimizer step on a mini-batch. Returns the mini-batch loss evaluated
/// before the update.
pub fn backward_and_step<T: Real>(
    model: &mut MlpModel<T>,
    state: &mut SgdState<T>,
    batch: &Matrix<T>,
    labels: &[usize],
    loss: &LossSpec<T>,
) -> Result<T> {
    if batch.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows but {} labels",
            batch.rows(),
            labels.len()
        )));
    }
    let trace = model.forward_trace(batch)?;
    let logits = trace.pre_activations.last().unwrap();
    let (value, dlogits) = batch_loss(logits, labels, loss)?;
    let grads = model.backward(&trace, dlogits)?;
    state.step(model, &grads);
    Ok(value)
}

/// Gradient of the mean mini-batch loss with respect to every parameter,
/// without updating anything.
pub fn parameter_gradients<T: Real>(
    model: &MlpModel<T>,
    batch: &Matrix<T>,
    labels: &[usize],
    loss: &LossSpec<T>,
) -> Result<(T, ParamBuffers<T>)> {
    let trace = model.forward_trace(batch)?;
    let logits = trace.pre_activations.last().unwrap();
    let (value, dlogits) = batch_loss(logits, labels, loss)?;
    Ok((value, model.backward(&trace, dlogits)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric_and_shift_invariant() {
        assert_eq!(softmax(&[0.0f64, 0.0]).unwrap(), vec![0.5, 0.5]);
        for c in [-1e3, -3.0, 0.0, 7.5, 1e3] {
            let p = softmax(&[c, c, c, c]).unwrap();
            assert!(p.iter().all(|&x| (x - 0.25f64).abs() < 1e-12));
        }
    }

    #[test]
    fn softmax_ln2_case() {
        let p = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_nonfinite() {
        assert!(softmax(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let s = [0.3f64, -1.2, 2.5, 0.0];
        let p = softmax(&s).unwrap();
        for (lp, p) in log_softmax(&s).unwrap().iter().zip(p) {
            assert!((lp - p.ln()).abs() < 1e-14);
        }
    }
}
