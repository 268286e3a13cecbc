// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not skew-symmetric (symmetric part norm {0:.3e})")]
    NotSkew(f64),

    #[error("matrix is rank deficient (smallest singular value {0:.3e})")]
    RankDeficient(f64),

    #[error("SVD failed to converge after {0} sweeps")]
    SvdNoConvergence(usize),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("tensor `{name}` violates orthogonality: drift {drift:.3e} exceeds {tolerance:.1e}")]
    Orthogonality {
        name: String,
        drift: f64,
        tolerance: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite loss at step {step}; worst drift {drift:.3e} in `{param}`")]
    Diverged {
        step: usize,
        param: String,
        drift: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }
}
