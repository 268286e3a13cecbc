// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Value and gradients of the margin-augmented cross-entropy for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginLoss {
    pub loss: f64,
    pub grad_logits: Vec<f64>,
    /// Derivative with respect to each pair norm `‖V_y − V_j‖` (zero at `j = y`).
    pub grad_pair: Vec<f64>,
}

/// Cross-entropy over `g_j = f_j + ε·‖V_y − V_j‖` (`j ≠ y`), `g_y = f_y`.
///
/// `pair_row[j]` is `‖V_y − V_j‖` for the true label `y`.
pub fn margin_loss(logits: &[f64], label: usize, eps_train: f64, pair_row: &[f64]) -> Result<MarginLoss> {
    let n = logits.len();
    if label >= n {
        return Err(Error::InvalidArgument(format!("label {label} with {n} classes")));
    }
    if pair_row.len() != n {
        return Err(Error::dims("margin_loss", format!("{} pair norms for {n} logits", pair_row.len())));
    }
    if !(eps_train >= 0.0) {
        return Err(Error::InvalidArgument(format!("training radius {eps_train}")));
    }
    let g: Vec<f64> = (0..n)
        .map(|j| if j == label { logits[j] } else { logits[j] + eps_train * pair_row[j] })
        .collect();
    let top = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = g.iter().map(|v| (v - top).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + top - g[label];
    let mut grad_logits: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let grad_pair = (0..n)
        .map(|j| if j == label { 0.0 } else { eps_train * grad_logits[j] })
        .collect();
    grad_logits[label] -= 1.0;
    Ok(MarginLoss {
        loss,
        grad_logits,
        grad_pair,
    })
}

/// Adds `scale · Σ_j grad_pair[j] · ∂‖V_y − V_j‖/∂V` into `grad_v`.
pub fn pair_norm_backward(
    v: &Matrix,
    label: usize,
    pair_row: &[f64],
    grad_pair: &[f64],
    scale: f64,
    grad_v: &mut Matrix,
) {
    let c = v.cols();
    for j in 0..v.rows() {
        let (d, gp) = (pair_row[j], grad_pair[j]);
        if j == label || d == 0.0 || gp == 0.0 {
            continue;
        }
        let k = scale * gp / d;
        for col in 0..c {
            let diff = k * (v[(label, col)] - v[(j, col)]);
            grad_v.as_mut_slice()[label * c + col] += diff;
            grad_v.as_mut_slice()[j * c + col] -= diff;
        }
    }
}
