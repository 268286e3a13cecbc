// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! 1-Lipschitz shift-mixing networks with orthogonal weights, a manifold
//! optimizer to train them and deterministic ℓ₂ certification.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod data;
pub mod error;
pub mod linalg;
pub mod layers;
pub mod manifold;
pub mod model;
pub mod oracles;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
