// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! 1-Lipschitz building blocks. Every map here is either an isometry
//! (shifts with circular padding, orthogonal channel mixing, patchify, channel
//! lift) or a 1-Lipschitz contraction (zero-padded shifts, β-Abs, MinMax,
//! L2 spatial pooling).

mod activation;
mod block;
mod head;
mod pool;
mod shift;
mod stem;

pub use activation::{
    activation_backward, activation_forward, beta_abs, minmax, minmax_rotation,
};
pub use block::{block_backward, block_forward, BlockCache, BlockGrads, BlockParams};
pub use head::{head_backward, head_forward};
pub use pool::{l2_spatial_pool, l2_spatial_pool_backward};
pub use shift::{shift_1d, shift_2d, shift_2d_adjoint};
pub use stem::{channel_lift, channel_lift_backward, patchify, patchify_backward};

use crate::error::{Error, Result};

/// A batch of `h × w × c` activation maps, channels fastest:
/// entry `(b, y, x, ch)` lives at `((b·h + y)·w + x)·c + ch`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub batch: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    /// A single map.
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        Self::batched(1, h, w, c, data)
    }

    pub fn batched(batch: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * h * w * c {
            return Err(Error::dims(
                "FeatureMap",
                format!("{} values for {batch}x{h}x{w}x{c}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("FeatureMap"));
        }
        Ok(FeatureMap {
            batch,
            h,
            w,
            c,
            data,
        })
    }

    pub fn zeros(batch: usize, h: usize, w: usize, c: usize) -> Self {
        FeatureMap {
            batch,
            h,
            w,
            c,
            data: vec![0.0; batch * h * w * c],
        }
    }

    #[inline]
    pub fn index(&self, b: usize, y: usize, x: usize, ch: usize) -> usize {
        ((b * self.h + y) * self.w + x) * self.c + ch
    }

    #[inline]
    pub fn get(&self, b: usize, y: usize, x: usize, ch: usize) -> f64 {
        self.data[self.index(b, y, x, ch)]
    }

    /// Number of spatial positions across the whole batch.
    pub fn positions(&self) -> usize {
        self.batch * self.h * self.w
    }

    pub fn map_len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        (self.batch, self.h, self.w, self.c) == (other.batch, other.h, other.w, other.c)
    }

    pub(crate) fn zeros_like(&self) -> FeatureMap {
        FeatureMap::zeros(self.batch, self.h, self.w, self.c)
    }

    /// The `b`-th map of the batch as its own map.
    pub fn item(&self, b: usize) -> FeatureMap {
        let len = self.map_len();
        FeatureMap {
            batch: 1,
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data[b * len..(b + 1) * len].to_vec(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Circular,
    Zero,
}

/// Shift ratio `α` and boundary handling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftSpec {
    pub alpha: f64,
    pub padding: Padding,
}

impl ShiftSpec {
    pub fn circular(alpha: f64) -> Self {
        ShiftSpec {
            alpha,
            padding: Padding::Circular,
        }
    }

    /// Channels per shifted partition, `α·c`, with `partitions·α·c ≤ c`.
    pub fn partition_size(&self, c: usize, partitions: usize) -> Result<usize> {
        let exact = self.alpha * c as f64;
        let d = exact.round();
        if !(self.alpha >= 0.0) || (exact - d).abs() > 1e-9 {
            return Err(Error::InvalidPartition(format!(
                "alpha {} times {c} channels is not an integer",
                self.alpha
            )));
        }
        let d = d as usize;
        if partitions * d > c {
            return Err(Error::InvalidPartition(format!(
                "{partitions} partitions of {d} exceed {c} channels"
            )));
        }
        Ok(d)
    }
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec::circular(1.0 / 16.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    BetaAbs,
    MinMax,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationSpec {
    pub beta: f64,
    pub kind: ActivationKind,
}

impl ActivationSpec {
    pub fn beta_abs(beta: f64) -> Self {
        ActivationSpec {
            beta,
            kind: ActivationKind::BetaAbs,
        }
    }

    pub fn minmax() -> Self {
        ActivationSpec {
            beta: 0.5,
            kind: ActivationKind::MinMax,
        }
    }

    /// Checks the spec against a channel count.
    pub fn validate(&self, c: usize) -> Result<()> {
        match self.kind {
            ActivationKind::BetaAbs => {
                let exact = self.beta * c as f64;
                if !(0.0..=1.0).contains(&self.beta) || (exact - exact.round()).abs() > 1e-9 {
                    return Err(Error::InvalidPartition(format!(
                        "beta {} times {c} channels is not an integer in [0, {c}]",
                        self.beta
                    )));
                }
            }
            ActivationKind::MinMax => {
                if !c.is_multiple_of(2) {
                    return Err(Error::InvalidPartition(format!(
                        "MinMax needs an even channel count, got {c}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of leading channels that get the absolute value.
    pub(crate) fn abs_count(&self, c: usize) -> usize {
        ((self.beta * c as f64) + 1e-9).floor().min(c as f64) as usize
    }
}

impl Default for ActivationSpec {
    fn default() -> Self {
        ActivationSpec::beta_abs(0.75)
    }
}
