// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use super::{FeatureMap, Padding, ShiftSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Three-way 1D shift of a `features × length` sequence.
///
/// Rows `[0, αd)` move one step right, rows `[αd, 2αd)` one step left, the rest
/// stay. Circular padding wraps; zero padding drops the wrapped entry.
pub fn shift_1d(x: &Matrix, spec: &ShiftSpec) -> Result<Matrix> {
    let (d, n) = (x.rows(), x.cols());
    let part = spec.partition_size(d, 2)?;
    let mut out = x.clone();
    if n == 0 {
        return Ok(out);
    }
    for r in 0..part {
        for j in 0..n {
            out[(r, j)] = match (j, spec.padding) {
                (0, Padding::Zero) => 0.0,
                (0, Padding::Circular) => x[(r, n - 1)],
                _ => x[(r, j - 1)],
            };
        }
    }
    for r in part..2 * part {
        for j in 0..n {
            out[(r, j)] = match (j + 1 == n, spec.padding) {
                (true, Padding::Zero) => 0.0,
                (true, Padding::Circular) => x[(r, 0)],
                _ => x[(r, j + 1)],
            };
        }
    }
    Ok(out)
}

/// Partition offsets `(dy, dx)` for the four shifted channel groups, in channel order
/// after the untouched leading group.
const OFFSETS_2D: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Five-way 2D shift: channels split as `[c − 4d, d, d, d, d]` with `d = α·c`;
/// the four trailing groups roll down, up, right and left by one position.
pub fn shift_2d(x: &FeatureMap, spec: &ShiftSpec) -> Result<FeatureMap> {
    shift_2d_signed(x, spec, 1)
}

/// Adjoint of [`shift_2d`]: the opposite shift with the same padding.
///
/// For circular padding this is also the inverse.
pub fn shift_2d_adjoint(x: &FeatureMap, spec: &ShiftSpec) -> Result<FeatureMap> {
    shift_2d_signed(x, spec, -1)
}

fn shift_2d_signed(x: &FeatureMap, spec: &ShiftSpec, sign: isize) -> Result<FeatureMap> {
    let d = spec.partition_size(x.c, 4).map_err(|e| match e {
        Error::InvalidPartition(msg) => Error::InvalidPartition(format!("shift_2d: {msg}")),
        other => other,
    })?;
    let mut out = x.clone();
    if d == 0 {
        return Ok(out);
    }
    let (h, w, c) = (x.h as isize, x.w as isize, x.c);
    let base = c - 4 * d;
    for (g, &(dy, dx)) in OFFSETS_2D.iter().enumerate() {
        let (dy, dx) = (dy * sign, dx * sign);
        let lo = base + g * d;
        for b in 0..x.batch {
            for y in 0..h {
                for xx in 0..w {
                    let (sy, sx) = (y - dy, xx - dx);
                    let dst = x.index(b, y as usize, xx as usize, lo);
                    let inside = (0..h).contains(&sy) && (0..w).contains(&sx);
                    if inside || spec.padding == Padding::Circular {
                        let src = x.index(
                            b,
                            sy.rem_euclid(h) as usize,
                            sx.rem_euclid(w) as usize,
                            lo,
                        );
                        out.data[dst..dst + d].copy_from_slice(&x.data[src..src + d]);
                    } else {
                        out.data[dst..dst + d].fill(0.0);
                    }
                }
            }
        }
    }
    Ok(out)
}
