// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! One-sided (Hestenes) Jacobi SVD and the polar projection built on it.
//!
//! Columns of the working matrix are orthogonalised pairwise by plane
//! rotations; the accumulated rotations form `V` and the final column norms
//! are the singular values. Accurate to working precision for the small and
//! mid-sized square matrices that appear as layer weights.

use super::matrix::{matmul_nt, Matrix, OrthogonalParam, TAU_RETRACTED};
use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 60;
/// Pairs with `|⟨a_p, a_q⟩| ≤ PAIR_TOL·‖a_p‖‖a_q‖` count as orthogonal.
const PAIR_TOL: f64 = 1e-15;
/// Relative column norm below which a column is treated as exactly zero.
const NEGLIGIBLE_COLUMN: f64 = 1e-14;
/// Singular values at or below this are treated as zero by `polar_project`.
pub const RANK_TOL: f64 = 1e-12;

/// Thin SVD `a = U·diag(s)·Vᵀ` with `s` sorted descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if a.rows() < a.cols() {
        let Svd { u, s, v } = svd(&a.transpose())?;
        return Ok(Svd { u: v, s, v: u });
    }
    let (m, n) = (a.rows(), a.cols());
    // Row i of `w` is column i of the working matrix; row i of `vt` is column i of V.
    let mut w = a.transpose();
    let mut vt = Matrix::identity(n);
    let fro2: f64 = a.as_slice().iter().map(|x| x * x).sum();
    // Squared column norm at or below which a column counts as zero.
    let negligible = NEGLIGIBLE_COLUMN * NEGLIGIBLE_COLUMN * fro2;

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (wp, wq) = (w.row(p), w.row(q));
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in wp.iter().zip(wq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0
                    || alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= PAIR_TOL * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence(MAX_SWEEPS));
    }

    let norms: Vec<f64> = (0..n)
        .map(|i| w.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let s: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let null_tol = smax * (m as f64) * f64::EPSILON;

    // Columns of U for nonzero singular values; the rest are completed below.
    let mut ucols: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&i| {
            (norms[i] > null_tol && norms[i] > 0.0)
                .then(|| w.row(i).iter().map(|x| x / norms[i]).collect())
        })
        .collect();
    complete_orthonormal(&mut ucols, m);

    let u = Matrix::from_fn(m, n, |r, c| ucols[c].as_ref().unwrap()[r]);
    let v = Matrix::from_fn(n, n, |r, c| vt[(order[c], r)]);
    Ok(Svd { u, s, v })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the `None` slots with unit vectors orthogonal to every other column.
fn complete_orthonormal(cols: &mut [Option<Vec<f64>>], m: usize) {
    let mut candidate = 0usize;
    for slot in 0..cols.len() {
        if cols[slot].is_some() {
            continue;
        }
        while candidate < m {
            let mut v = vec![0.0; m];
            v[candidate] = 1.0;
            candidate += 1;
            // two passes of Gram-Schmidt keep the completion orthogonal to rounding
            for _ in 0..2 {
                for other in cols.iter().flatten() {
                    let dot: f64 = v.iter().zip(other).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(other).for_each(|(a, b)| *a -= dot * b);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                cols[slot] = Some(v);
                break;
            }
        }
    }
}

/// Closest orthogonal matrix in Frobenius norm: `U·Vᵀ` from the SVD.
pub fn polar_project(a: &Matrix) -> Result<OrthogonalParam> {
    a.require_square("polar_project")?;
    let Svd { u, s, v } = svd(a)?;
    let smin = s.last().copied().unwrap_or(0.0);
    if smin <= RANK_TOL {
        return Err(Error::RankDeficient(smin));
    }
    Ok(OrthogonalParam::new_unchecked(
        matmul_nt(&u, &v)?,
        TAU_RETRACTED,
    ))
}
