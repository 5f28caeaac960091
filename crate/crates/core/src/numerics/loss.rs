use super::matrix::Matrix;
use crate::error::{Error, Result};

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_shapes(context: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            context,
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    if a.as_slice().is_empty() {
        return Err(Error::TooFewRows {
            context,
            needed: 1,
            found: 0,
        });
    }
    Ok(())
}

/// Mean binary cross-entropy on pre-sigmoid scores, and its gradient with
/// respect to those scores.
///
/// Per element the loss is `softplus(z) − t·z`, which equals
/// `−[t·ln σ(z) + (1−t)·ln(1−σ(z))]` and stays finite for any finite `z`.
pub fn bce_with_logits(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    check_shapes("bce_with_logits", logits, targets)?;
    let count = logits.as_slice().len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.as_slice().len());
    for (&z, &t) in logits.as_slice().iter().zip(targets.as_slice()) {
        total += softplus(z) - t * z;
        grad.push((super::mlp::sigmoid(z) - t) / count);
    }
    Ok((
        total / count,
        Matrix::from_vec(logits.rows(), logits.cols(), grad)?,
    ))
}

/// Mean absolute error with subgradient `sign(pred − t)/count`, `sign(0) = 0`.
pub fn mae_loss(pred: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    check_shapes("mae_loss", pred, targets)?;
    let count = pred.as_slice().len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.as_slice().len());
    for (&p, &t) in pred.as_slice().iter().zip(targets.as_slice()) {
        let d = p - t;
        total += d.abs();
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad.push(sign / count);
    }
    Ok((total / count, Matrix::from_vec(pred.rows(), pred.cols(), grad)?))
}
