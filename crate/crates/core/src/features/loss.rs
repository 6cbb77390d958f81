//! Reverse Huber (BerHu) loss and the batch data loss over Cartesian targets.

use super::FeatureError;

/// Fraction of the largest batch residual used as the L1/L2 switch point.
pub const BERHU_C_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Derivative with respect to the residual.
    pub grad: f64,
}

/// `|r|` for `|r| <= c`, `(r² + c²) / 2c` beyond.
pub fn berhu(residual: f64, c: f64) -> Result<LossValue, FeatureError> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(FeatureError::NonPositiveC(c));
    }
    let a = residual.abs();
    Ok(if a <= c {
        LossValue {
            value: a,
            grad: if residual == 0.0 { 0.0 } else { residual.signum() },
        }
    } else {
        LossValue {
            value: (residual * residual + c * c) / (2.0 * c),
            grad: residual / c,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataLoss {
    pub value: f64,
    /// Batch switch point, `0.2 · max |φ - φ*|`.
    pub c: f64,
    /// `∂L/∂φ` per sample, with `c` held fixed.
    pub grad: Vec<[f64; 3]>,
}

pub fn batch_c(batch: &[([f64; 3], [f64; 3])]) -> f64 {
    let max = batch
        .iter()
        .flat_map(|(p, t)| (0..3).map(move |k| (p[k] - t[k]).abs()))
        .fold(0.0, f64::max);
    BERHU_C_FRACTION * max
}

/// Mean BerHu loss over the x, y, z components of `(prediction, target)` pairs.
pub fn data_loss(batch: &[([f64; 3], [f64; 3])]) -> Result<DataLoss, FeatureError> {
    data_loss_with_c(batch, batch_c(batch))
}

/// Data loss at an externally fixed switch point. A zero `c` means every
/// residual is zero, which scores zero.
pub fn data_loss_with_c(batch: &[([f64; 3], [f64; 3])], c: f64) -> Result<DataLoss, FeatureError> {
    if batch.is_empty() {
        return Err(FeatureError::EmptyBatch);
    }
    let norm = 1.0 / (3.0 * batch.len() as f64);
    if c == 0.0 {
        return Ok(DataLoss {
            value: 0.0,
            c,
            grad: vec![[0.0; 3]; batch.len()],
        });
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(batch.len());
    for (pred, target) in batch {
        let mut g = [0.0; 3];
        for k in 0..3 {
            let l = berhu(pred[k] - target[k], c)?;
            total += l.value;
            g[k] = l.grad * norm;
        }
        grad.push(g);
    }
    Ok(DataLoss {
        value: total * norm,
        c,
        grad,
    })
}
