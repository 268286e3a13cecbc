// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matrix::{Matrix, OrthogonalParam, TAU_RETRACTED};
use crate::error::{Error, Result};

/// Haar-distributed orthogonal matrix from a fixed seed.
pub fn random_orthogonal(d: usize, seed: u64) -> Result<OrthogonalParam> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_orthogonal_with(d, &mut rng)
}

/// QR of a standard Gaussian matrix with the `R` diagonal made positive.
///
/// The QR is Gram-Schmidt with one reorthogonalisation pass, which yields a
/// positive `R` diagonal directly, so no separate sign correction is needed.
pub fn random_orthogonal_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<OrthogonalParam> {
    if d == 0 {
        return Err(Error::InvalidArgument(
            "orthogonal dimension must be at least 1".into(),
        ));
    }
    // cols[j] is column j of Q
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for q in &cols {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // a Gaussian draw landing in the span is a probability-zero event; redraw
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    let q = Matrix::from_fn(d, d, |i, j| cols[j][i]);
    Ok(OrthogonalParam::new_unchecked(q, TAU_RETRACTED))
}
