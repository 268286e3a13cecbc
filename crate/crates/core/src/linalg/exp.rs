// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use super::matrix::{frobenius_norm, matmul, Matrix};
use crate::error::{Error, Result};

/// Scale the argument by powers of two until its Frobenius norm drops below this.
const SCALE_THRESHOLD: f64 = 0.25;
/// Taylor summation stops once a term is this small relative to the partial sum.
const TERM_RTOL: f64 = 1e-16;
const MAX_TERMS: usize = 64;

/// Reference matrix exponential by scaling and squaring with a Taylor core.
pub fn matrix_exp(a: &Matrix) -> Result<Matrix> {
    let n = a.require_square("matrix_exp")?;
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix_exp input"));
    }
    let norm = frobenius_norm(a);
    let mut squarings = 0u32;
    let mut scaled_norm = norm;
    while scaled_norm >= SCALE_THRESHOLD {
        scaled_norm *= 0.5;
        squarings += 1;
    }
    let b = a.scale(0.5f64.powi(squarings as i32));

    let mut result = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=MAX_TERMS {
        term = matmul(&term, &b)?;
        term.scale_mut(1.0 / k as f64);
        result.axpy(1.0, &term)?;
        if frobenius_norm(&term) < TERM_RTOL * frobenius_norm(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result)?;
    }
    if !result.is_finite() {
        return Err(Error::NonFinite("matrix_exp result"));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matrix::orthogonality_drift, skew};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exp(&Matrix::zeros(4, 4)).unwrap();
        assert_eq!(e, Matrix::identity(4));
    }

    #[test]
    fn exp_of_diagonal() {
        let e = matrix_exp(&Matrix::from_diag(&[1.0, 2.0])).unwrap();
        let want = Matrix::from_diag(&[1f64.exp(), 2f64.exp()]);
        assert!(e.max_abs_diff(&want) < 1e-12, "{e:?}");
    }

    #[test]
    fn exp_of_planar_skew_is_rotation() {
        let t = 0.7f64;
        let a = Matrix::from_rows(&[&[0.0, t], &[-t, 0.0]]);
        let e = matrix_exp(&a).unwrap();
        let want = Matrix::from_rows(&[&[t.cos(), t.sin()], &[-t.sin(), t.cos()]]);
        assert!(e.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            matrix_exp(&Matrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        let mut a = Matrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(matrix_exp(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn skew_exponential_is_orthogonal_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let d = 3 + trial % 6;
            let g = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let s = skew(&g).unwrap().into_matrix();
            let s = s.scale(10.0 * rng.random::<f64>() / frobenius_norm(&s));
            let e = matrix_exp(&s).unwrap();
            assert!(orthogonality_drift(&e) < 1e-10);

            let a = g.scale(5.0 * rng.random::<f64>() / frobenius_norm(&g));
            let prod = matmul(&matrix_exp(&a).unwrap(), &matrix_exp(&a.scale(-1.0)).unwrap())
                .unwrap();
            assert!(prod.max_abs_diff(&Matrix::identity(d)) < 1e-10);
        }
    }
}
