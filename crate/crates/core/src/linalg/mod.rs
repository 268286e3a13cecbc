// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense real linear algebra: products, symmetric/skew parts, the reference
//! matrix exponential, Jacobi SVD, polar projection and orthogonal init.

mod exp;
mod init;
mod matrix;
mod svd;

pub use exp::matrix_exp;
pub use init::{random_orthogonal, random_orthogonal_with};
pub use matrix::{
    frobenius_norm, matmul, matmul_nt, matmul_tn, orthogonality_drift, skew, sym, Matrix,
    OrthogonalParam, SkewMatrix, TAU_BETWEEN, TAU_RETRACTED,
};
pub(crate) use matrix::gemm;
pub use svd::{polar_project, svd, Svd, MAX_SWEEPS, RANK_TOL};
