// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! The shift-mixing block `σ(M·Rᵀ·S(R·(x + p)) + b)`.
//!
//! Channel matrices act on every spatial position, so the whole batch is
//! handled as one `positions × c` matrix and each projection is a single GEMM.

use super::activation::{activation_backward, activation_forward};
use super::shift::{shift_2d, shift_2d_adjoint};
use super::{ActivationSpec, FeatureMap, ShiftSpec};
use crate::error::{Error, Result};
use crate::linalg::{gemm, matmul, matmul_nt, matmul_tn, Matrix, OrthogonalParam};

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub r: OrthogonalParam,
    pub m: OrthogonalParam,
    pub bias: Vec<f64>,
    /// Positional embedding, one value per spatial position (`h × w`), shared by all channels.
    pub pos: Vec<f64>,
    pub h: usize,
    pub w: usize,
}

impl BlockParams {
    pub fn channels(&self) -> usize {
        self.r.dim()
    }

    fn check(&self, x: &FeatureMap) -> Result<()> {
        let c = self.channels();
        if self.m.dim() != c
            || self.bias.len() != c
            || self.pos.len() != self.h * self.w
            || (x.h, x.w, x.c) != (self.h, self.w, c)
        {
            return Err(Error::dims(
                "block_forward",
                format!(
                    "input {}x{}x{} vs block {}x{}x{} (M {}, bias {}, pos {})",
                    x.h,
                    x.w,
                    x.c,
                    self.h,
                    self.w,
                    c,
                    self.m.dim(),
                    self.bias.len(),
                    self.pos.len()
                ),
            ));
        }
        Ok(())
    }
}

/// Intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct BlockCache {
    /// `x + p`
    shifted_in: FeatureMap,
    /// `S(R·(x + p))`
    mixed: FeatureMap,
    /// Pre-activation `M·Rᵀ·S(...) + b`.
    pre_act: Vec<f64>,
    r: Matrix,
    m: Matrix,
    /// `M·Rᵀ`
    mrt: Matrix,
    shift: ShiftSpec,
    act: ActivationSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrads {
    pub x: FeatureMap,
    pub r: Matrix,
    pub m: Matrix,
    pub bias: Vec<f64>,
    pub pos: Vec<f64>,
}

/// `rows × c` times `op(w)`, with `op(w) = wᵀ` when `transpose` is set.
fn mix(rows: usize, c: usize, x: &[f64], w: &Matrix, transpose: bool) -> Vec<f64> {
    let mut out = vec![0.0; rows * c];
    let (rsb, csb) = if transpose { (1, c as isize) } else { (c as isize, 1) };
    gemm(rows, c, c, 1.0, x, c as isize, 1, w.as_slice(), rsb, csb, 0.0, &mut out);
    out
}

pub fn block_forward(
    x: &FeatureMap,
    params: &BlockParams,
    shift: &ShiftSpec,
    act: &ActivationSpec,
) -> Result<(FeatureMap, BlockCache)> {
    params.check(x)?;
    act.validate(x.c)?;
    shift.partition_size(x.c, 4)?;
    let c = x.c;
    let rows = x.positions();
    let hw = x.h * x.w;

    let mut shifted_in = x.clone();
    for (i, row) in shifted_in.data.chunks_exact_mut(c).enumerate() {
        let p = params.pos[i % hw];
        row.iter_mut().for_each(|v| *v += p);
    }

    let r = params.r.value();
    let projected = FeatureMap {
        data: mix(rows, c, &shifted_in.data, r, true),
        ..x.zeros_like_header()
    };
    let mixed = shift_2d(&projected, shift)?;

    let mrt = matmul_nt(params.m.value(), r)?;
    let mut pre_act = mix(rows, c, &mixed.data, &mrt, true);
    for row in pre_act.chunks_exact_mut(c) {
        row.iter_mut().zip(&params.bias).for_each(|(v, b)| *v += b);
    }
    let out = FeatureMap {
        data: activation_forward(&pre_act, c, act),
        ..x.zeros_like_header()
    };
    let cache = BlockCache {
        shifted_in,
        mixed,
        pre_act,
        r: r.clone(),
        m: params.m.value().clone(),
        mrt,
        shift: *shift,
        act: *act,
    };
    Ok((out, cache))
}

/// Exact reverse-mode gradients of [`block_forward`]. `grad.r` and `grad.m` are
/// Euclidean; project them with `riemannian_grad` before a manifold step.
pub fn block_backward(cache: &BlockCache, grad_out: &FeatureMap) -> Result<BlockGrads> {
    let header = &cache.mixed;
    if !grad_out.same_shape(header) {
        return Err(Error::StaleCache(format!(
            "gradient {}x{}x{}x{} does not match cached forward {}x{}x{}x{}",
            grad_out.batch, grad_out.h, grad_out.w, grad_out.c, header.batch, header.h, header.w, header.c
        )));
    }
    let c = header.c;
    let rows = header.positions();
    let hw = header.h * header.w;

    let g_pre = activation_backward(&cache.pre_act, &grad_out.data, c, &cache.act);

    let mut g_bias = vec![0.0; c];
    for row in g_pre.chunks_exact(c) {
        g_bias.iter_mut().zip(row).for_each(|(g, v)| *g += v);
    }

    // g_A = g_preᵀ · mixed  (A = M·Rᵀ)
    let mut g_a = Matrix::zeros(c, c);
    gemm(
        c,
        rows,
        c,
        1.0,
        &g_pre,
        1,
        c as isize,
        &cache.mixed.data,
        c as isize,
        1,
        0.0,
        g_a.as_mut_slice(),
    );

    let g_mixed = FeatureMap {
        data: mix(rows, c, &g_pre, &cache.mrt, false),
        ..header.zeros_like_header()
    };
    let g_proj = shift_2d_adjoint(&g_mixed, &cache.shift)?;

    // u = R·x' per position: g_R = g_uᵀ · x', g_x' = g_u · R
    let mut g_r = Matrix::zeros(c, c);
    gemm(
        c,
        rows,
        c,
        1.0,
        &g_proj.data,
        1,
        c as isize,
        &cache.shifted_in.data,
        c as isize,
        1,
        0.0,
        g_r.as_mut_slice(),
    );
    // through A = M·Rᵀ: dM = g_A·R, dR += g_Aᵀ·M
    let g_m = matmul(&g_a, &cache.r)?;
    g_r.axpy(1.0, &matmul_tn(&g_a, &cache.m)?)?;

    let g_x = FeatureMap {
        data: mix(rows, c, &g_proj.data, &cache.r, false),
        ..header.zeros_like_header()
    };
    let mut g_pos = vec![0.0; hw];
    for (i, row) in g_x.data.chunks_exact(c).enumerate() {
        g_pos[i % hw] += row.iter().sum::<f64>();
    }

    Ok(BlockGrads {
        x: g_x,
        r: g_r,
        m: g_m,
        bias: g_bias,
        pos: g_pos,
    })
}

impl FeatureMap {
    /// Same shape with an empty buffer, for struct-update construction.
    fn zeros_like_header(&self) -> FeatureMap {
        FeatureMap {
            batch: self.batch,
            h: self.h,
            w: self.w,
            c: self.c,
            data: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{ActivationKind, Padding};
    use crate::linalg::random_orthogonal_with;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng, zero_extras: bool) -> BlockParams {
        let mut draw = |n: usize| -> Vec<f64> {
            if zero_extras {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
            }
        };
        let bias = draw(c);
        let pos = draw(h * w);
        BlockParams {
            r: random_orthogonal_with(c, rng).unwrap(),
            m: random_orthogonal_with(c, rng).unwrap(),
            bias,
            pos,
            h,
            w,
        }
    }

    fn random_map(batch: usize, h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> FeatureMap {
        let data = (0..batch * h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureMap::batched(batch, h, w, c, data).unwrap()
    }

    fn dist(a: &FeatureMap, b: &FeatureMap) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn collapses_to_channel_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = params(3, 3, 8, &mut rng, true);
        let x = random_map(2, 3, 3, 8, &mut rng);
        let (y, _) = block_forward(&x, &p, &ShiftSpec::circular(0.0), &ActivationSpec::beta_abs(0.0))
            .unwrap();
        for (yr, xr) in y.data.chunks_exact(8).zip(x.data.chunks_exact(8)) {
            let want = p.m.value().matvec(xr).unwrap();
            for (a, b) in yr.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_is_one_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shift = ShiftSpec::circular(0.125);
        for act in [ActivationSpec::beta_abs(0.75), ActivationSpec::minmax()] {
            let p = params(4, 4, 16, &mut rng, false);
            for _ in 0..50 {
                let u = random_map(1, 4, 4, 16, &mut rng);
                let v = random_map(1, 4, 4, 16, &mut rng);
                let (fu, _) = block_forward(&u, &p, &shift, &act).unwrap();
                let (fv, _) = block_forward(&v, &p, &shift, &act).unwrap();
                assert!(dist(&fu, &fv) <= dist(&u, &v) + 1e-9);
            }
        }
    }

    #[test]
    fn linear_block_preserves_distances_with_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = params(4, 4, 16, &mut rng, false);
        let act = ActivationSpec::beta_abs(0.0);
        let shift = ShiftSpec::circular(0.125);
        let u = random_map(1, 4, 4, 16, &mut rng);
        let v = random_map(1, 4, 4, 16, &mut rng);
        let (fu, _) = block_forward(&u, &p, &shift, &act).unwrap();
        let (fv, _) = block_forward(&v, &p, &shift, &act).unwrap();
        assert!((dist(&fu, &fv) - dist(&u, &v)).abs() < 1e-12);
    }

    #[test]
    fn zero_grad_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = params(2, 2, 8, &mut rng, false);
        let x = random_map(1, 2, 2, 8, &mut rng);
        let (y, cache) = block_forward(&x, &p, &ShiftSpec::circular(0.125), &Default::default()).unwrap();
        let g = block_backward(&cache, &y.zeros_like()).unwrap();
        assert!(g.x.data.iter().chain(g.r.as_slice()).chain(g.m.as_slice()).all(|&v| v == 0.0));
        assert!(g.bias.iter().chain(&g.pos).all(|&v| v == 0.0));
    }

    #[test]
    fn linear_block_input_gradient_is_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = params(2, 3, 8, &mut rng, false);
        let x = random_map(1, 2, 3, 8, &mut rng);
        let (_, cache) = block_forward(&x, &p, &ShiftSpec::circular(0.0), &ActivationSpec::beta_abs(0.0))
            .unwrap();
        let gy = random_map(1, 2, 3, 8, &mut rng);
        let g = block_backward(&cache, &gy).unwrap();
        for (gr, yr) in g.x.data.chunks_exact(8).zip(gy.data.chunks_exact(8)) {
            let want = p.m.value().matvec_t(yr).unwrap();
            for (a, b) in gr.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// Central differences of `⟨block(x), probe⟩` against every analytic gradient.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (kind, padding) in [
            (ActivationKind::BetaAbs, Padding::Circular),
            (ActivationKind::MinMax, Padding::Zero),
        ] {
            let shift = ShiftSpec { alpha: 0.125, padding };
            let act = ActivationSpec { beta: 0.75, kind };
            let p = params(3, 2, 8, &mut rng, false);
            let x = random_map(2, 3, 2, 8, &mut rng);
            let probe = random_map(2, 3, 2, 8, &mut rng);
            let objective = |x: &FeatureMap, p: &BlockParams| -> f64 {
                let (y, _) = block_forward(x, p, &shift, &act).unwrap();
                y.data.iter().zip(&probe.data).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = block_forward(&x, &p, &shift, &act).unwrap();
            let g = block_backward(&cache, &probe).unwrap();
            let h = 1e-5;
            let check = |analytic: f64, plus: f64, minus: f64| {
                let fd = (plus - minus) / (2.0 * h);
                let scale = analytic.abs().max(fd.abs()).max(1e-3);
                assert!((analytic - fd).abs() / scale < 1e-4, "analytic {analytic} vs fd {fd}");
            };
            for i in 0..x.data.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.data[i] += h;
                xm.data[i] -= h;
                check(g.x.data[i], objective(&xp, &p), objective(&xm, &p));
            }
            for i in 0..64 {
                let mut pp = p.clone();
                let mut pm = p.clone();
                let mut rp = pp.r.value().clone();
                rp.as_mut_slice()[i] += h;
                pp.r = OrthogonalParam::new_unchecked(rp, 1.0);
                let mut rm = pm.r.value().clone();
                rm.as_mut_slice()[i] -= h;
                pm.r = OrthogonalParam::new_unchecked(rm, 1.0);
                check(g.r.as_slice()[i], objective(&x, &pp), objective(&x, &pm));

                let mut pp = p.clone();
                let mut pm = p.clone();
                let mut mp = pp.m.value().clone();
                mp.as_mut_slice()[i] += h;
                pp.m = OrthogonalParam::new_unchecked(mp, 1.0);
                let mut mm = pm.m.value().clone();
                mm.as_mut_slice()[i] -= h;
                pm.m = OrthogonalParam::new_unchecked(mm, 1.0);
                check(g.m.as_slice()[i], objective(&x, &pp), objective(&x, &pm));
            }
            for i in 0..8 {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.bias[i] += h;
                pm.bias[i] -= h;
                check(g.bias[i], objective(&x, &pp), objective(&x, &pm));
            }
            for i in 0..6 {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.pos[i] += h;
                pm.pos[i] -= h;
                check(g.pos[i], objective(&x, &pp), objective(&x, &pm));
            }
        }
    }

    #[test]
    fn mismatched_gradient_is_stale() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = params(2, 2, 8, &mut rng, false);
        let x = random_map(1, 2, 2, 8, &mut rng);
        let (_, cache) = block_forward(&x, &p, &ShiftSpec::circular(0.125), &Default::default()).unwrap();
        let wrong = FeatureMap::zeros(2, 2, 2, 8);
        assert!(matches!(block_backward(&cache, &wrong), Err(Error::StaleCache(_))));
        assert!(block_forward(&FeatureMap::zeros(1, 3, 2, 8), &p, &Default::default(), &Default::default()).is_err());
    }
}
