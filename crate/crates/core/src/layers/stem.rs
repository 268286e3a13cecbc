// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use super::FeatureMap;
use crate::error::{Error, Result};

/// Space-to-depth: each `q × q` patch becomes one position with `c·q²` channels.
///
/// Output channel `(a·q + b)·c + ch` holds input `(y·q + a, x·q + b, ch)`.
pub fn patchify(x: &FeatureMap, q: usize) -> Result<FeatureMap> {
    if q == 0 || !x.h.is_multiple_of(q) || !x.w.is_multiple_of(q) {
        return Err(Error::InvalidArgument(format!(
            "patch size {q} does not divide {}x{}",
            x.h, x.w
        )));
    }
    let (oh, ow, oc) = (x.h / q, x.w / q, x.c * q * q);
    let mut out = FeatureMap::zeros(x.batch, oh, ow, oc);
    for b in 0..x.batch {
        for y in 0..oh {
            for xx in 0..ow {
                for a in 0..q {
                    for bb in 0..q {
                        let src = x.index(b, y * q + a, xx * q + bb, 0);
                        let dst = out.index(b, y, xx, (a * q + bb) * x.c);
                        out.data[dst..dst + x.c].copy_from_slice(&x.data[src..src + x.c]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse (and adjoint) of [`patchify`].
pub fn patchify_backward(g: &FeatureMap, q: usize) -> Result<FeatureMap> {
    if q == 0 || !g.c.is_multiple_of(q * q) {
        return Err(Error::InvalidArgument(format!(
            "{} channels are not a multiple of {q}²",
            g.c
        )));
    }
    let c = g.c / (q * q);
    let mut out = FeatureMap::zeros(g.batch, g.h * q, g.w * q, c);
    for b in 0..g.batch {
        for y in 0..g.h {
            for xx in 0..g.w {
                for a in 0..q {
                    for bb in 0..q {
                        let src = g.index(b, y, xx, (a * q + bb) * c);
                        let dst = out.index(b, y * q + a, xx * q + bb, 0);
                        out.data[dst..dst + c].copy_from_slice(&g.data[src..src + c]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Zero-pads the channel axis up to `target_c`.
pub fn channel_lift(x: &FeatureMap, target_c: usize) -> Result<FeatureMap> {
    if target_c < x.c {
        return Err(Error::InvalidArgument(format!(
            "cannot lift {} channels down to {target_c}",
            x.c
        )));
    }
    let mut out = FeatureMap::zeros(x.batch, x.h, x.w, target_c);
    for (dst, src) in out
        .data
        .chunks_exact_mut(target_c)
        .zip(x.data.chunks_exact(x.c.max(1)))
    {
        dst[..x.c].copy_from_slice(src);
    }
    Ok(out)
}

/// Adjoint of [`channel_lift`]: keeps the leading `c` channels.
pub fn channel_lift_backward(g: &FeatureMap, c: usize) -> Result<FeatureMap> {
    if c > g.c {
        return Err(Error::InvalidArgument(format!("cannot restrict {} channels to {c}", g.c)));
    }
    let mut out = FeatureMap::zeros(g.batch, g.h, g.w, c);
    for (dst, src) in out.data.chunks_exact_mut(c.max(1)).zip(g.data.chunks_exact(g.c)) {
        dst.copy_from_slice(&src[..c]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(h: usize, w: usize, c: usize) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        FeatureMap::batched(2, h, w, c, (0..2 * h * w * c).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn patchify_cases() {
        let x = random_map(4, 6, 3);
        assert_eq!(patchify(&x, 1).unwrap(), x);

        let small = FeatureMap::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = patchify(&small, 2).unwrap();
        assert_eq!((p.h, p.w, p.c), (1, 1, 4));
        assert_eq!(p.data, vec![1.0, 2.0, 3.0, 4.0]);

        let p = patchify(&x, 2).unwrap();
        assert_eq!(p.norm(), x.norm());
        assert_eq!(patchify_backward(&p, 2).unwrap(), x);
        assert!(patchify(&x, 4).is_err());
    }

    #[test]
    fn lift_cases() {
        let x = random_map(2, 2, 3);
        assert_eq!(channel_lift(&x, 3).unwrap(), x);
        let one = FeatureMap::new(1, 1, 2, vec![0.5, -1.0]).unwrap();
        assert_eq!(channel_lift(&one, 4).unwrap().data, vec![0.5, -1.0, 0.0, 0.0]);
        let l = channel_lift(&x, 8).unwrap();
        assert_eq!(l.norm(), x.norm());
        assert_eq!(channel_lift_backward(&l, 3).unwrap(), x);
        assert!(channel_lift(&x, 2).is_err());
    }
}
