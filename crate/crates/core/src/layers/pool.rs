// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use super::FeatureMap;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-channel ℓ₂ norm over all spatial positions; one row per batch item.
pub fn l2_spatial_pool(x: &FeatureMap) -> Matrix {
    let mut out = Matrix::zeros(x.batch, x.c);
    let per = x.h * x.w;
    for b in 0..x.batch {
        let row = &mut out.as_mut_slice()[b * x.c..(b + 1) * x.c];
        for pos in x.data[b * per * x.c..(b + 1) * per * x.c].chunks_exact(x.c) {
            for (acc, v) in row.iter_mut().zip(pos) {
                *acc += v * v;
            }
        }
        row.iter_mut().for_each(|v| *v = v.sqrt());
    }
    out
}

/// Gradient `x/‖x_c‖`, taken as zero for an all-zero channel.
pub fn l2_spatial_pool_backward(x: &FeatureMap, pooled: &Matrix, grad: &Matrix) -> Result<FeatureMap> {
    if pooled.rows() != x.batch || pooled.cols() != x.c || grad.rows() != x.batch || grad.cols() != x.c {
        return Err(Error::dims(
            "l2_spatial_pool_backward",
            format!(
                "input {}x{}, pooled {}x{}, grad {}x{}",
                x.batch,
                x.c,
                pooled.rows(),
                pooled.cols(),
                grad.rows(),
                grad.cols()
            ),
        ));
    }
    let mut out = x.zeros_like();
    let per = x.h * x.w * x.c;
    for b in 0..x.batch {
        let scale: Vec<f64> = pooled
            .row(b)
            .iter()
            .zip(grad.row(b))
            .map(|(&n, &g)| if n > 0.0 { g / n } else { 0.0 })
            .collect();
        let src = &x.data[b * per..(b + 1) * per];
        let dst = &mut out.data[b * per..(b + 1) * per];
        for (d, s) in dst.chunks_exact_mut(x.c).zip(src.chunks_exact(x.c)) {
            for ((o, v), k) in d.iter_mut().zip(s).zip(&scale) {
                *o = v * k;
            }
        }
    }
    Ok(out)
}
