// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use super::{ActivationKind, ActivationSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Absolute value on the leading `β·len` entries, identity on the rest.
pub fn beta_abs(x: &[f64], spec: &ActivationSpec) -> Vec<f64> {
    let k = spec.abs_count(x.len());
    x.iter()
        .enumerate()
        .map(|(i, &v)| if i < k { v.abs() } else { v })
        .collect()
}

/// `(max(x₁, x₂), min(x₁, x₂))` over the two halves of `x`.
pub fn minmax(x: &[f64]) -> Result<Vec<f64>> {
    if !x.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "MinMax needs an even length, got {}",
            x.len()
        )));
    }
    let d = x.len() / 2;
    let mut out = vec![0.0; x.len()];
    for i in 0..d {
        let (a, b) = (x[i], x[i + d]);
        out[i] = a.max(b);
        out[i + d] = a.min(b);
    }
    Ok(out)
}

/// The orthogonal `(1/√2)·[[I, −I], [I, I]]` of size `2d` that turns β-Abs at
/// `β = 0.5` into MinMax by conjugation.
pub fn minmax_rotation(d: usize) -> Matrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Matrix::from_fn(2 * d, 2 * d, |i, j| {
        let (bi, bj) = (i / d, j / d);
        if i % d != j % d {
            0.0
        } else if bi == 0 && bj == 1 {
            -s
        } else {
            s
        }
    })
}

/// Applies the activation to every `c`-channel row of `z`.
pub fn activation_forward(z: &[f64], c: usize, spec: &ActivationSpec) -> Vec<f64> {
    let mut out = z.to_vec();
    match spec.kind {
        ActivationKind::BetaAbs => {
            let k = spec.abs_count(c);
            for row in out.chunks_exact_mut(c) {
                row[..k].iter_mut().for_each(|v| *v = v.abs());
            }
        }
        ActivationKind::MinMax => {
            let d = c / 2;
            for row in out.chunks_exact_mut(c) {
                for i in 0..d {
                    let (a, b) = (row[i], row[i + d]);
                    row[i] = a.max(b);
                    row[i + d] = a.min(b);
                }
            }
        }
    }
    out
}

/// Pulls `grad` back through the activation evaluated at pre-activation `z`.
///
/// β-Abs uses `sign(0) = +1`; MinMax routes ties to the unswapped order.
pub fn activation_backward(z: &[f64], grad: &[f64], c: usize, spec: &ActivationSpec) -> Vec<f64> {
    let mut out = grad.to_vec();
    match spec.kind {
        ActivationKind::BetaAbs => {
            let k = spec.abs_count(c);
            for (g, zr) in out.chunks_exact_mut(c).zip(z.chunks_exact(c)) {
                for i in 0..k {
                    if zr[i] < 0.0 {
                        g[i] = -g[i];
                    }
                }
            }
        }
        ActivationKind::MinMax => {
            let d = c / 2;
            for (g, zr) in out.chunks_exact_mut(c).zip(z.chunks_exact(c)) {
                for i in 0..d {
                    if zr[i] < zr[i + d] {
                        g.swap(i, i + d);
                    }
                }
            }
        }
    }
    out
}
