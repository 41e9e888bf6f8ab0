use nalgebra::DMatrix;

use crate::error::{Result, TbnnError};

/// `raw = Σ_{i∈mask} ‖pred_i − target_i‖²`; `metric = raw / n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskedLoss {
    pub raw: f64,
    pub metric: f64,
}

fn check(pred: &DMatrix<f64>, target: &DMatrix<f64>, n: usize) -> Result<usize> {
    if pred.shape() != target.shape() {
        return Err(TbnnError::invalid(format!(
            "prediction shape {:?} does not match target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if n == 0 || pred.nrows() % n != 0 {
        return Err(TbnnError::invalid(format!("{} rows cannot be split into {n} nodes", pred.nrows())));
    }
    Ok(pred.nrows() / n)
}

/// Squared error over the masked nodes plus its gradient w.r.t. `pred`.
/// Rows are node-major with `rows / n` rows per node; `mask = None` means every node.
pub fn masked_sse(
    pred: &DMatrix<f64>,
    target: &DMatrix<f64>,
    n: usize,
    mask: Option<&[usize]>,
) -> Result<(f64, DMatrix<f64>)> {
    let d = check(pred, target, n)?;
    let mut grad = DMatrix::zeros(pred.nrows(), pred.ncols());
    let mut raw = 0.0;
    let mut visit = |i: usize| -> Result<()> {
        if i >= n {
            return Err(TbnnError::invalid(format!("mask index {i} out of range for {n} nodes")));
        }
        for r in i * d..(i + 1) * d {
            for c in 0..pred.ncols() {
                let e = pred[(r, c)] - target[(r, c)];
                raw += e * e;
                grad[(r, c)] = 2.0 * e;
            }
        }
        Ok(())
    };
    match mask {
        Some(m) => {
            if m.is_empty() {
                return Err(TbnnError::EmptyMask);
            }
            for &i in m {
                visit(i)?;
            }
        }
        None => {
            for i in 0..n {
                visit(i)?;
            }
        }
    }
    Ok((raw, grad))
}

pub fn loss_masked_mse(pred: &DMatrix<f64>, target: &DMatrix<f64>, n: usize, mask: Option<&[usize]>) -> Result<MaskedLoss> {
    let (raw, _) = masked_sse(pred, target, n, mask)?;
    Ok(MaskedLoss { raw, metric: raw / n as f64 })
}

/// Mean cross-entropy of row-wise softmax over `logits` (batch × classes) and its gradient.
pub fn softmax_cross_entropy(logits: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, DMatrix<f64>)> {
    if logits.nrows() != labels.len() {
        return Err(TbnnError::DimensionMismatch {
            context: "logit rows vs labels",
            expected: logits.nrows(),
            found: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(TbnnError::invalid("no labels"));
    }
    let b = labels.len() as f64;
    let mut grad = DMatrix::zeros(logits.nrows(), logits.ncols());
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= logits.ncols() {
            return Err(TbnnError::invalid(format!("label {y} out of range")));
        }
        let row = logits.row(r);
        let max = row.max();
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = z.ln() + max;
        loss += log_z - logits[(r, y)];
        for c in 0..logits.ncols() {
            let p = (logits[(r, c)] - log_z).exp();
            grad[(r, c)] = (p - if c == y { 1.0 } else { 0.0 }) / b;
        }
    }
    Ok((loss / b, grad))
}
