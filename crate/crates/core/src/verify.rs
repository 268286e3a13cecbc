// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! Self-checks run by `lipcert verify`. Each check reports a pass flag and its
//! worst residual.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::layers::{beta_abs, minmax, minmax_rotation, shift_2d, shift_2d_adjoint, ActivationSpec, FeatureMap, ShiftSpec};
use crate::linalg::{frobenius_norm, matrix_exp, random_orthogonal_with, skew, Matrix, SkewMatrix};
use crate::manifold::{
    epoch_retraction, fast_exp, stabilized_step, FastExpBranch, ManifoldAdamConfig, ManifoldAdamState,
};
use crate::oracles::{
    circular_conv_direct, circular_conv_matrix, max_rel_error, taylor_remainder_bound, theorem1_enumerate,
    Kernel2D,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed residual, in the units described by `detail`.
    pub residual: f64,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} residual={:.3e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.residual,
            self.detail
        )
    }
}

/// One-hot `±1` kernels are isometries and nothing else is, for each `k` and grid size.
pub fn check_conv_isometry(ks: &[usize], sizes: &[usize], trials: usize, seed: u64) -> Result<Check> {
    let mut passed = true;
    let mut residual = 0.0f64;
    let mut min_gap = f64::INFINITY;
    let mut kernels = 0;
    let mut notes = Vec::new();
    for &n in sizes {
        for &k in ks {
            let rep = theorem1_enumerate(k, n, n, trials, seed ^ (k * 31 + n) as u64)?;
            kernels += rep.one_hot_checked + rep.random_checked;
            residual = residual.max(rep.one_hot_residual);
            min_gap = min_gap.min(rep.random_min_residual);
            if !rep.passed() {
                passed = false;
                notes.push(format!(
                    "k={k} H=W={n}: {} sufficiency, {} necessity, {} route failures",
                    rep.sufficiency_counterexamples.len(),
                    rep.necessity_counterexamples.len(),
                    rep.route_disagreements.len()
                ));
            }
        }
    }
    let mut detail = format!("{kernels} kernels; smallest |σ−1| among non-one-hot {min_gap:.3e}");
    if !notes.is_empty() {
        detail = format!("{detail}; {}", notes.join("; "));
    }
    Ok(Check {
        name: "conv_isometry_one_hot".into(),
        passed,
        residual,
        detail,
    })
}

/// `minmax(x) = Rᵀ·βabs(R·x)` with `β = 1/2`.
pub fn check_minmax_identity(dims: &[usize], samples: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residual = 0.0f64;
    for &d in dims {
        let r = minmax_rotation(d);
        let spec = ActivationSpec::beta_abs(0.5);
        for _ in 0..samples {
            let x: Vec<f64> = (0..2 * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let direct = minmax(&x)?;
            let conj = r.matvec_t(&beta_abs(&r.matvec(&x)?, &spec))?;
            for (a, b) in direct.iter().zip(&conj) {
                residual = residual.max((a - b).abs());
            }
        }
    }
    Ok(Check {
        name: "minmax_beta_abs_identity".into(),
        passed: residual <= 1e-12,
        residual,
        detail: format!("{} vectors per d in {dims:?}; max abs error (tol 1e-12)", samples),
    })
}

/// Random skew matrix of dimension `d` with Frobenius norm `norm`.
pub fn random_skew(d: usize, norm: f64, rng: &mut ChaCha8Rng) -> Result<SkewMatrix> {
    let g = Matrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = skew(&g)?;
    let n = s.norm();
    Ok(s.scale(if n > 0.0 { norm / n } else { 0.0 }))
}

/// Floating-point allowance added to the analytic remainder bound.
pub fn fast_exp_rounding_allowance(d: usize) -> f64 {
    8.0 * f64::EPSILON * (1.0 + (d as f64).sqrt())
}

/// Per branch, `‖FastExp(A) − exp(A)‖_F` stays under the tail of the exponential
/// series after the truncation order; the exact branch matches to 1e-10.
pub fn check_fast_exp(d: usize, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = [
        (FastExpBranch::Order2, 0.0, 0.05),
        (FastExpBranch::Order3, 0.05, 0.25),
        (FastExpBranch::Order4, 0.25, 1.0),
        (FastExpBranch::Exact, 1.0, 4.0),
    ];
    let slack = fast_exp_rounding_allowance(d);
    let mut out = Vec::new();
    for (branch, lo, hi) in ranges {
        let mut worst_ratio = 0.0f64;
        let mut worst_err = 0.0f64;
        let mut passed = true;
        for _ in 0..samples {
            let a = random_skew(d, rng.random_range(lo..hi), &mut rng)?;
            if FastExpBranch::select(a.norm()) != branch {
                continue;
            }
            let err = frobenius_norm(&fast_exp(&a)?.sub(&matrix_exp(a.as_matrix())?)?);
            worst_err = worst_err.max(err);
            match branch.order() {
                Some(order) => {
                    let bound = taylor_remainder_bound(a.norm(), order);
                    worst_ratio = worst_ratio.max(err / (bound + slack));
                    passed &= err <= bound + slack;
                }
                None => passed &= err <= 1e-10,
            }
        }
        let detail = match branch.order() {
            Some(o) => format!(
                "{samples} samples d={d}, ‖A‖∈[{lo},{hi}); order {o}; worst error/bound {worst_ratio:.3}"
            ),
            None => format!("{samples} samples d={d}, ‖A‖∈[{lo},{hi}); exact branch (tol 1e-10)"),
        };
        out.push(Check {
            name: format!("fast_exp_{branch:?}").to_lowercase(),
            passed,
            residual: worst_err,
            detail,
        });
    }
    Ok(out)
}

/// Drift of `steps` stabilized updates from random gradients, before and after retraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftProbe {
    pub max_pre_retraction: f64,
    pub post_retraction: f64,
}

pub fn drift_probe(d: usize, steps: usize, lr: f64, seed: u64) -> Result<DriftProbe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_orthogonal_with(d, &mut rng)?;
    let cfg = ManifoldAdamConfig {
        lr,
        ..Default::default()
    };
    let mut st = ManifoldAdamState::new(&x, cfg)?;
    let mut max_pre = 0.0f64;
    for _ in 0..steps {
        let g = Matrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        x = stabilized_step(&mut st, &x, &g)?;
        max_pre = max_pre.max(x.drift());
    }
    let x = epoch_retraction(&mut st, &x)?;
    Ok(DriftProbe {
        max_pre_retraction: max_pre,
        post_retraction: x.drift(),
    })
}

pub fn check_drift(d: usize, steps: usize, seed: u64) -> Result<Check> {
    let p = drift_probe(d, steps, 1e-3, seed)?;
    Ok(Check {
        name: "orthogonality_drift".into(),
        passed: p.max_pre_retraction < 1e-3 && p.post_retraction < 1e-10,
        residual: p.post_retraction,
        detail: format!(
            "{steps} steps d={d}: max drift {:.3e} (tol 1e-3), after retraction {:.3e} (tol 1e-10)",
            p.max_pre_retraction, p.post_retraction
        ),
    })
}

/// The explicit circulant operator agrees with direct circular convolution.
pub fn check_circulant(trials: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residual = 0.0f64;
    for (k, n) in [(1, 4), (2, 4), (3, 4), (3, 5)] {
        let kernel = Kernel2D::new(k, (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let m = circular_conv_matrix(&kernel, n, n)?;
        for _ in 0..trials {
            let x: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let direct = circular_conv_direct(&kernel, n, n, &x)?;
            residual = residual.max(max_rel_error(&m.matvec(&x)?, &direct, 1.0));
        }
    }
    Ok(Check {
        name: "circulant_vs_direct".into(),
        passed: residual <= 1e-12,
        residual,
        detail: format!("{trials} inputs per kernel; max error (tol 1e-12)"),
    })
}

/// Circular 2D shifts preserve norms and their adjoint is the inverse shift.
pub fn check_shift(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ShiftSpec::circular(1.0 / 16.0);
    let mut residual = 0.0f64;
    for _ in 0..20 {
        let x = FeatureMap::batched(2, 5, 4, 32, (0..2 * 5 * 4 * 32).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let y = shift_2d(&x, &spec)?;
        residual = residual.max((y.norm() - x.norm()).abs());
        let back = shift_2d_adjoint(&y, &spec)?;
        for (a, b) in back.data.iter().zip(&x.data) {
            residual = residual.max((a - b).abs());
        }
    }
    Ok(Check {
        name: "shift_permutation".into(),
        passed: residual <= 1e-12,
        residual,
        detail: "norm preservation and adjoint-inverse (tol 1e-12)".into(),
    })
}

/// Every check at its default size.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let mut out = vec![
        check_conv_isometry(&[1, 2, 3], &[4, 5], 100, seed)?,
        check_minmax_identity(&[1, 4, 16], 10_000, seed)?,
    ];
    out.extend(check_fast_exp(32, 1000, seed)?);
    out.push(check_drift(64, 1000, seed)?);
    out.push(check_circulant(20, seed)?);
    out.push(check_shift(seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(check_conv_isometry(&[1, 2], &[4], 10, 0).unwrap().passed);
        assert!(check_minmax_identity(&[1, 4], 100, 0).unwrap().passed);
        for c in check_fast_exp(8, 50, 0).unwrap() {
            assert!(c.passed, "{c}");
        }
        assert!(check_drift(8, 50, 0).unwrap().passed);
        assert!(check_circulant(3, 0).unwrap().passed);
        let s = check_shift(0).unwrap();
        assert!(s.passed && s.to_string().starts_with("PASS shift_permutation"));
    }
}
