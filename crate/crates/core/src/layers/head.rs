// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix};

/// Linear head `V·z + bias` for each row `z` of `features`; returns `batch × classes`.
pub fn head_forward(features: &Matrix, v: &Matrix, bias: &[f64]) -> Result<Matrix> {
    if features.cols() != v.cols() || bias.len() != v.rows() {
        return Err(Error::dims(
            "head_forward",
            format!(
                "features {}x{}, V {}x{}, bias {}",
                features.rows(),
                features.cols(),
                v.rows(),
                v.cols(),
                bias.len()
            ),
        ));
    }
    let mut logits = matmul_nt(features, v)?;
    for row in logits.as_mut_slice().chunks_exact_mut(bias.len().max(1)) {
        row.iter_mut().zip(bias).for_each(|(l, b)| *l += b);
    }
    Ok(logits)
}

/// Returns `(grad_features, grad_v, grad_bias)`.
pub fn head_backward(
    features: &Matrix,
    v: &Matrix,
    grad_logits: &Matrix,
) -> Result<(Matrix, Matrix, Vec<f64>)> {
    if grad_logits.rows() != features.rows() || grad_logits.cols() != v.rows() {
        return Err(Error::dims(
            "head_backward",
            format!(
                "grad {}x{} for batch {} and {} classes",
                grad_logits.rows(),
                grad_logits.cols(),
                features.rows(),
                v.rows()
            ),
        ));
    }
    let grad_features = matmul(grad_logits, v)?;
    let grad_v = matmul_tn(grad_logits, features)?;
    let mut grad_bias = vec![0.0; v.rows()];
    for row in grad_logits.as_slice().chunks_exact(v.rows().max(1)) {
        grad_bias.iter_mut().zip(row).for_each(|(g, r)| *g += r);
    }
    Ok((grad_features, grad_v, grad_bias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_head_and_zero_features() {
        let z = Matrix::from_rows(&[&[1.0, -2.0, 3.0]]);
        assert_eq!(head_forward(&z, &Matrix::identity(3), &[0.0; 3]).unwrap(), z);
        let v = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let out = head_forward(&Matrix::zeros(1, 3), &v, &[0.5, -0.5]).unwrap();
        assert_eq!(out.as_slice(), &[0.5, -0.5]);
        assert!(head_forward(&z, &v, &[0.0]).is_err());
    }

    #[test]
    fn feature_gradient_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = Matrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
        let z = Matrix::from_fn(1, 6, |_, _| rng.random_range(-1.0..1.0));
        let g = Matrix::from_fn(1, 4, |_, _| rng.random_range(-1.0..1.0));
        let (gz, gv, gb) = head_backward(&z, &v, &g).unwrap();
        let want = v.matvec_t(g.row(0)).unwrap();
        for (a, b) in gz.row(0).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(gb, g.row(0).to_vec());
        assert!((gv[(2, 5)] - g[(0, 2)] * z[(0, 5)]).abs() < 1e-15);
    }
}
